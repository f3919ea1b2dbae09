"""Render canonical task outputs and parse generated text back into structures.

The extraction task uses a fixed four-sentence answer template:

    The opinion is "<o>". The sentiment tendency is "<p>". The opinion
    refers to the explicit aspect "<e>". The pronoun of "<e>" is "<r>".

with ``"null"`` in the fourth sentence when there is no implicit aspect.
Parsing is anchored to that template with bounded tolerance (quote variants,
whitespace, sentence reordering, multiple concatenated answer blocks,
polarity synonyms). Anything that does not line up is collected as residue
instead of raising: hallucinated output must degrade into data, not errors.

Spans that themselves contain quote delimiters are not round-trippable; the
trailing/leading quote characters of a captured span are stripped.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

from .corpus import normalize_span

# Accepted quote delimiters (straight, curly, guillemets, low-9, backtick).
_Q = "\"“”‘’'«»„‟`"
_QC = f"[{re.escape(_Q)}]"
# A closing quote only counts when sentence-final; otherwise a span's own
# apostrophe would terminate the capture early.
_END = r"[ \t]*(?:[.。]|\n|$)"

_OPINION_RE = re.compile(
    rf"The\s+opinion\s+is\s*{_QC}(.*?){_QC}{_END}", re.IGNORECASE | re.DOTALL)
_SENTIMENT_RE = re.compile(
    rf"The\s+sentiment\s+tendency\s+is\s*{_QC}?\s*"
    rf"(POS|NEU|NEG|positive|negative|neutral)\s*{_QC}?{_END}",
    re.IGNORECASE)
_EXPLICIT_RE = re.compile(
    rf"The\s+opinion\s+refers\s+to\s+the\s+explicit\s+aspect\s*{_QC}(.*?){_QC}{_END}",
    re.IGNORECASE | re.DOTALL)
_PRONOUN_RE = re.compile(
    rf"The\s+pronoun\s+of\s*{_QC}(.*?){_QC}\s+is\s*{_QC}(.*?){_QC}{_END}",
    re.IGNORECASE | re.DOTALL)

_POLARITY_MAP = {"pos": "POS", "positive": "POS",
                 "neg": "NEG", "negative": "NEG",
                 "neu": "NEU", "neutral": "NEU"}


class AcrParseError(ValueError):
    """Label-sequence extraction failed; carries what was found vs expected."""

    def __init__(self, message: str, *, found: int | None = None, expected: int | None = None):
        super().__init__(message)
        self.found = found
        self.expected = expected


@dataclass(frozen=True)
class QuadFragment:
    """A quadruple as recovered from generated text; anchors are optional."""

    explicit: str
    implicit: str | None
    opinion: str
    polarity: str
    explicit_utt: int | None = None
    implicit_utt: int | None = None
    opinion_utt: int | None = None


@dataclass(frozen=True)
class ParsedAsu:
    quadruples: tuple[QuadFragment, ...]
    residue: tuple[str, ...]

    @property
    def full_parse(self) -> bool:
        return not self.residue


@dataclass(frozen=True)
class ParsedAcr:
    labels: tuple[int, ...]


def render_asu_output(quadruple) -> str:
    """Canonical answer text for one quadruple (corpus Quadruple or fragment)."""
    implicit = quadruple.implicit if quadruple.implicit is not None else "null"
    return (
        f'The opinion is "{quadruple.opinion}". '
        f'The sentiment tendency is "{quadruple.polarity}". '
        f'The opinion refers to the explicit aspect "{quadruple.explicit}". '
        f'The pronoun of "{quadruple.explicit}" is "{implicit}".'
    )


def _clean_span(raw: str) -> str:
    return normalize_span(raw).strip(_Q).strip()


def parse_asu_output(text: str) -> ParsedAsu:
    """Recover quadruple fragments from generated text; never raises.

    Each occurrence of the opinion sentence opens a block; the block's
    sentiment, explicit-aspect and pronoun sentences may appear in any order
    before the next opinion sentence. A block yields a fragment once opinion,
    sentiment and explicit aspect are all present (a missing pronoun sentence
    means no implicit aspect). Text not consumed by a produced fragment is
    returned as residue.
    """
    matches: list[tuple[int, int, str, tuple]] = []
    for kind, rx in (("opinion", _OPINION_RE), ("sentiment", _SENTIMENT_RE),
                     ("explicit", _EXPLICIT_RE), ("pronoun", _PRONOUN_RE)):
        for m in rx.finditer(text):
            matches.append((m.start(), m.end(), kind, m.groups()))
    # The pronoun pattern also matches inside overlapping junk; keep a
    # non-overlapping, position-ordered view preferring earlier starts.
    matches.sort(key=lambda t: (t[0], t[1]))
    selected: list[tuple[int, int, str, tuple]] = []
    cursor = 0
    for start, end, kind, groups in matches:
        if start >= cursor:
            selected.append((start, end, kind, groups))
            cursor = end

    # Split into blocks at each opinion sentence.
    blocks: list[list[tuple[int, int, str, tuple]]] = []
    for item in selected:
        if item[2] == "opinion":
            blocks.append([item])
        elif blocks:
            blocks[-1].append(item)
        else:
            blocks.append([item])  # orphan prefix block, will not parse

    fragments: list[QuadFragment] = []
    consumed: list[tuple[int, int]] = []
    for block in blocks:
        parts: dict[str, tuple] = {}
        spans: dict[str, tuple[int, int]] = {}
        for start, end, kind, groups in block:
            if kind not in parts:
                parts[kind] = groups
                spans[kind] = (start, end)
        if not {"opinion", "sentiment", "explicit"} <= parts.keys():
            continue
        opinion = _clean_span(parts["opinion"][0])
        polarity = _POLARITY_MAP[parts["sentiment"][0].lower()]
        explicit = _clean_span(parts["explicit"][0])
        implicit: str | None = None
        if "pronoun" in parts:
            candidate = _clean_span(parts["pronoun"][1])
            if candidate and candidate.lower() != "null":
                implicit = candidate
        fragments.append(QuadFragment(explicit=explicit, implicit=implicit,
                                      opinion=opinion, polarity=polarity))
        consumed.extend(spans[k] for k in parts)

    consumed.sort()
    residue: list[str] = []
    cursor = 0
    for start, end in consumed:
        _push_residue(text[cursor:start], residue)
        cursor = max(cursor, end)
    _push_residue(text[cursor:], residue)
    return ParsedAsu(quadruples=tuple(fragments), residue=tuple(residue))


def _push_residue(segment: str, residue: list[str]) -> None:
    segment = segment.strip()
    if segment:
        residue.append(segment)


_ACR_SEQ_RE = re.compile(r"[012](?:[\s,\[\]]*[012])*")


def parse_acr_output(text: str, n_utterances: int) -> ParsedAcr:
    """Extract the per-utterance label sequence from generated text.

    The first maximal run of digits over {0, 1, 2} is taken, tolerating
    spaces, commas and brackets as separators; it must have exactly
    ``n_utterances`` labels, otherwise AcrParseError reports found vs
    expected.
    """
    if n_utterances < 1:
        raise ValueError("n_utterances must be >= 1")
    m = _ACR_SEQ_RE.search(text)
    if m is None:
        raise AcrParseError("no 0/1/2 label sequence found", found=0, expected=n_utterances)
    labels = tuple(int(c) for c in m.group(0) if c in "012")
    if len(labels) != n_utterances:
        raise AcrParseError(
            f"label sequence has {len(labels)} entries, expected {n_utterances}",
            found=len(labels), expected=n_utterances)
    return ParsedAcr(labels=labels)


# -- predictions files --


def fragment_to_record(fragment: QuadFragment) -> dict:
    rec = {"explicit": fragment.explicit, "implicit": fragment.implicit,
           "opinion": fragment.opinion, "polarity": fragment.polarity}
    for key in ("explicit_utt", "implicit_utt", "opinion_utt"):
        value = getattr(fragment, key)
        if value is not None:
            rec[key] = value
    return rec


def fragment_from_record(raw: Mapping) -> QuadFragment:
    return QuadFragment(
        explicit=str(raw["explicit"]),
        implicit=(None if raw.get("implicit") is None else str(raw["implicit"])),
        opinion=str(raw["opinion"]),
        polarity=str(raw["polarity"]),
        explicit_utt=raw.get("explicit_utt"),
        implicit_utt=raw.get("implicit_utt"),
        opinion_utt=raw.get("opinion_utt"),
    )


def save_asu_predictions(predictions: Mapping[str, Iterable[QuadFragment]],
                         path: str | Path) -> None:
    """One line per dialogue: {"dialogue_id", "quadruples": [...]} sans anchors."""
    with Path(path).open("w", encoding="utf-8") as f:
        for dialogue_id, fragments in predictions.items():
            rec = {"dialogue_id": dialogue_id,
                   "quadruples": [fragment_to_record(fr) for fr in fragments]}
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")


def load_asu_predictions(path: str | Path) -> dict[str, list[QuadFragment]]:
    out: dict[str, list[QuadFragment]] = {}
    with Path(path).open("r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            out.setdefault(rec["dialogue_id"], []).extend(
                fragment_from_record(q) for q in rec.get("quadruples", []))
    return out


def save_acr_predictions(predictions: Mapping[tuple[str, str], Iterable[int]],
                         path: str | Path) -> None:
    """One line per chain: {"dialogue_id", "explicit", "labels"}."""
    with Path(path).open("w", encoding="utf-8") as f:
        for (dialogue_id, explicit), labels in predictions.items():
            rec = {"dialogue_id": dialogue_id, "explicit": explicit,
                   "labels": list(labels)}
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")


def load_acr_predictions(path: str | Path) -> dict[tuple[str, str], list[int]]:
    out: dict[tuple[str, str], list[int]] = {}
    with Path(path).open("r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            out[(rec["dialogue_id"], rec["explicit"])] = [int(v) for v in rec["labels"]]
    return out
