import pytest

from diaquad.corpus import AspectChain, Dialogue, Quadruple, Utterance, save_dataset


@pytest.fixture
def worked_dialogue() -> Dialogue:
    """Five-utterance movie chat: the aspect is named in the third utterance
    and referred to by a pronoun next to the opinion in the fifth."""
    utterances = (
        Utterance(0, "A", "Did you do anything fun this weekend?"),
        Utterance(1, "B", "I went to the cinema with a relative."),
        Utterance(2, "B", "We picked Wen Chaorong at the ticket counter."),
        Utterance(3, "A", "Since you recommended it, it should be good."),
        Utterance(4, "B", "Honestly this movie has a bad reputation, "
                          "though the snacks were pretty good."),
    )
    quad = Quadruple(explicit="Wen Chaorong", explicit_utt=2,
                     implicit="this movie", implicit_utt=4,
                     opinion="bad reputation", opinion_utt=4, polarity="NEG")
    chain = AspectChain(explicit="Wen Chaorong", labels=(0, 0, 2, 0, 1))
    return Dialogue(dialogue_id="worked", utterances=utterances,
                    quadruples=(quad,), aspect_chains=(chain,))


@pytest.fixture
def tiny_dialogue() -> Dialogue:
    """Four utterances, one chain labeled [2, 0, 1, 0], one POS quadruple."""
    utterances = (
        Utterance(0, "A", "Have you seen Blue Harbor yet?"),
        Utterance(1, "B", "Not yet, is it worth watching?"),
        Utterance(2, "A", "The film is fantastic, you should go."),
        Utterance(3, "B", "Fine, I will book a ticket."),
    )
    quad = Quadruple(explicit="Blue Harbor", explicit_utt=0,
                     implicit="The film", implicit_utt=2,
                     opinion="fantastic", opinion_utt=2, polarity="POS")
    chain = AspectChain(explicit="Blue Harbor", labels=(2, 0, 1, 0))
    return Dialogue(dialogue_id="tiny", utterances=utterances,
                    quadruples=(quad,), aspect_chains=(chain,))


@pytest.fixture
def dataset_file(tmp_path, worked_dialogue, tiny_dialogue):
    path = tmp_path / "data.jsonl"
    save_dataset([worked_dialogue, tiny_dialogue], path)
    return path
