"""Scoring predictions: the four single cells, three pair cells and the
full-quadruple cell, plus chain F1 and the paired t-test.

Run:  python demos/03_evaluation.py
"""

import dataclasses

from diaquad.corpus import Dialogue, Quadruple, Utterance
from diaquad.evaluation import (
    evaluate,
    evaluate_acr,
    format_report,
    significance,
)
from diaquad.parsing import QuadFragment
from diaquad.rlsim import default_dialogue


def fragment(q, **changes):
    base = QuadFragment(explicit=q.explicit, implicit=q.implicit,
                        opinion=q.opinion, polarity=q.polarity)
    return dataclasses.replace(base, **changes)


gold = [
    default_dialogue(),
    Dialogue(
        dialogue_id="phone-chat",
        utterances=(Utterance(0, "A", "The new phone arrived."),
                    Utterance(1, "B", "The screen is sharp but the battery is weak.")),
        quadruples=(
            Quadruple("phone", 0, "The screen", 1, "sharp", 1, "POS"),
            Quadruple("phone", 0, None, None, "weak", 1, "NEG"),
        ),
    ),
]

# The predictions get the spans right but trip over polarity and coreference,
# so the single cells stay high while the quadruple cell drops.
predictions = {
    "demo-movie": [fragment(gold[0].quadruples[0])],
    "phone-chat": [
        fragment(gold[1].quadruples[0], polarity="NEG"),      # flipped polarity
        fragment(gold[1].quadruples[1], implicit="The screen"),  # invented pronoun
    ],
}

report = evaluate(gold, predictions)
print("== per-cell F1 (x100)")
print(format_report(report))
print("\nper-dialogue quadruple F1:", report.per_dialogue_quadruple_f1)
print("polarity macro-F1 over the three classes:", round(report.polarity_macro_f1, 4))

print("\n== chain-labeling F1")
score = evaluate_acr(gold[:1], {("demo-movie", "Blue Harbor"): [2, 0, 0, 0]})
print(f"precision {score.precision:.3f}  recall {score.recall:.3f}  f1 {score.f1:.3f}")

print("\n== paired t-test over per-dialogue scores of two systems")
system_a = [0.50, 0.62, 0.70, 0.81, 0.64]
system_b = [0.46, 0.55, 0.69, 0.72, 0.60]
result = significance(system_a, system_b)
print(f"t = {result.t:.4f}, p = {result.p:.4f} over n = {result.n} dialogues")
