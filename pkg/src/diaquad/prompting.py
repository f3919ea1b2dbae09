"""Prompt construction for the extraction and coreference-labeling tasks.

Every prompt is instruction + joiner + rendered dialogue; construction is
deterministic and the rendered dialogue always appears verbatim in the
result. Coreference-labeling (ACR) instructions carry an ``{aspect}``
placeholder that is substituted per aspect chain.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

from .corpus import Dialogue, normalize_span

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

logger = logging.getLogger(__name__)

ASPECT_PLACEHOLDER = "{aspect}"

ASU_INSTRUCTION_EN = (
    "You are now an information extraction model. Please help me to extract "
    "opinions from the input and tell me the sentiment polarity of the "
    "opinions, what the explicit aspect referred to by the opinion is, and "
    "what pronoun is used for the explicit aspect in the utterance where the "
    "opinion occurs."
)

ACR_INSTRUCTION_EN = (
    "You are now an classification model to judge which utterance in this "
    "dialogue appears to be the coreference of {aspect}, outputs 2 if it is "
    "an explicit aspect, 1 if it is an implicit aspect, and otherwise 0. "
    "Output a sequence of 0, 1, and 2, the length of which is the number of "
    "dialogues."
)

# Alternates for Chinese corpora.
ASU_INSTRUCTION_ZH = (
    "你现在是一个信息抽取模型。请帮我从输入中抽取观点，并告诉我观点的情感极性、"
    "观点所指向的显式方面是什么，以及在观点出现的话语中显式方面用了什么代词。"
)

ACR_INSTRUCTION_ZH = (
    "你现在是一个分类模型，判断这段对话中的哪些话语出现了{aspect}的共指："
    "如果是显式方面输出2，如果是隐式方面输出1，否则输出0。"
    "输出一个由0、1、2组成的序列，其长度等于对话中话语的数量。"
)


class TemplateError(ValueError):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    task: str  # "ASU" or "ACR"
    instruction: str
    joiner: str = "\n"

    def __post_init__(self):
        if self.task not in ("ASU", "ACR"):
            raise TemplateError(f"task must be 'ASU' or 'ACR', got {self.task!r}")
        if not self.instruction:
            raise TemplateError("instruction must be non-empty")


def default_template(task: str, language: str = "en") -> PromptTemplate:
    """Built-in templates: English defaults plus Chinese alternates."""
    table = {
        ("ASU", "en"): ASU_INSTRUCTION_EN,
        ("ACR", "en"): ACR_INSTRUCTION_EN,
        ("ASU", "zh"): ASU_INSTRUCTION_ZH,
        ("ACR", "zh"): ACR_INSTRUCTION_ZH,
    }
    try:
        instruction = table[(task, language)]
    except KeyError:
        raise TemplateError(f"no built-in template for task={task!r} language={language!r}")
    return PromptTemplate(task=task, instruction=instruction)


def load_template(path: str | Path) -> PromptTemplate:
    """Read a template from a TOML file with task/instruction/joiner keys."""
    with Path(path).open("rb") as f:
        raw = tomllib.load(f)
    try:
        return PromptTemplate(task=raw["task"], instruction=raw["instruction"],
                              joiner=raw.get("joiner", "\n"))
    except KeyError as e:
        raise TemplateError(f"template file {path} is missing key {e.args[0]!r}")


def render_dialogue(dialogue: Dialogue) -> str:
    """Serialize utterances in order as '<speaker>: <text>' lines."""
    return "\n".join(f"{u.speaker}: {u.text}" for u in dialogue.utterances)


def build_asu_input(dialogue: Dialogue, template: PromptTemplate | None = None) -> str:
    """Extraction prompt: instruction, joiner, then the rendered dialogue."""
    template = template or default_template("ASU")
    if template.task != "ASU":
        raise TemplateError(f"expected an ASU template, got task={template.task!r}")
    return template.instruction + template.joiner + render_dialogue(dialogue)


def build_acr_input(dialogue: Dialogue, explicit: str,
                    template: PromptTemplate | None = None) -> str:
    """Coreference-labeling prompt for one explicit aspect.

    The template instruction must contain the ``{aspect}`` placeholder; a
    warning is logged when ``explicit`` does not anchor any chain of the
    dialogue.
    """
    template = template or default_template("ACR")
    if template.task != "ACR":
        raise TemplateError(f"expected an ACR template, got task={template.task!r}")
    if ASPECT_PLACEHOLDER not in template.instruction:
        raise TemplateError(f"ACR instruction must contain the {ASPECT_PLACEHOLDER} placeholder")
    anchors = {normalize_span(c.explicit) for c in dialogue.aspect_chains}
    if normalize_span(explicit) not in anchors:
        logger.warning("aspect %r does not anchor any chain of dialogue %s",
                       explicit, dialogue.dialogue_id)
    instruction = template.instruction.replace(ASPECT_PLACEHOLDER, explicit)
    return instruction + template.joiner + render_dialogue(dialogue)
