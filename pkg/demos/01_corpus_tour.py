"""Tour of the corpus layer: build, save, lint and summarize a tiny dataset.

Run:  python demos/01_corpus_tour.py
"""

import dataclasses
import tempfile
from pathlib import Path

from diaquad.corpus import (
    AspectChain,
    Dialogue,
    Quadruple,
    Utterance,
    agreement,
    format_stats,
    load_dataset,
    save_dataset,
    stats,
    validate,
)

# A dialogue where the entity is named early and the opinion arrives later,
# attached to a pronoun. The quadruple records both the specific name and
# the pronoun actually used next to the opinion.
movie = Dialogue(
    dialogue_id="movie-night",
    utterances=(
        Utterance(0, "A", "Did you do anything fun this weekend?"),
        Utterance(1, "B", "I went to the cinema with a relative."),
        Utterance(2, "B", "We picked Wen Chaorong at the ticket counter."),
        Utterance(3, "A", "Since you recommended it, it should be good."),
        Utterance(4, "B", "Honestly this movie has a bad reputation, "
                          "though the snacks were pretty good."),
    ),
    quadruples=(
        Quadruple(explicit="Wen Chaorong", explicit_utt=2,
                  implicit="this movie", implicit_utt=4,
                  opinion="bad reputation", opinion_utt=4, polarity="NEG"),
    ),
    aspect_chains=(AspectChain(explicit="Wen Chaorong", labels=(0, 0, 2, 0, 1)),),
)

cafe = Dialogue(
    dialogue_id="cafe-review",
    utterances=(
        Utterance(0, "A", "I tried the new Lakeview Cafe."),
        Utterance(1, "B", "How was it?"),
        Utterance(2, "A", "The place felt dirty but the coffee was superb."),
    ),
    quadruples=(
        Quadruple("Lakeview Cafe", 0, "The place", 2, "dirty", 2, "NEG"),
        Quadruple("Lakeview Cafe", 0, None, None, "superb", 2, "POS"),
    ),
    aspect_chains=(AspectChain("Lakeview Cafe", (2, 0, 1)),),
)

print("== round trip through the JSONL wire format")
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "demo.jsonl"
    save_dataset([movie, cafe], path)
    print(path.read_text().splitlines()[0][:110], "...")
    reloaded = load_dataset(path)
    print("identical after reload:", reloaded == [movie, cafe])

print("\n== lint rules catch mechanical mistakes")
broken = dataclasses.replace(
    movie,
    quadruples=(dataclasses.replace(movie.quadruples[0], opinion="terrible"),))
for violation in validate(broken):
    print(" ", violation)

print("\n== corpus statistics (chain length = utterances mentioning the aspect)")
print(format_stats(stats([movie, cafe])))

print("\n== agreement between two annotation passes")
second_pass = dataclasses.replace(
    cafe,
    quadruples=cafe.quadruples[:1])  # second annotator missed the POS item
f1, accuracy = agreement([movie, cafe], [movie, second_pass])
print(f"F1 {f1:.2f}   accuracy {accuracy:.2f}")
