"""Dialogue corpus model: types, JSONL loading, lint rules, statistics, agreement.

A dataset is a JSONL file with one dialogue object per line:

    {"dialogue_id": "d1",
     "utterances": [{"index": 0, "speaker": "A", "text": "..."}, ...],
     "quadruples": [{"explicit": "...", "explicit_utt": 2,
                     "implicit": "..."|null, "implicit_utt": 4|null,
                     "opinion": "...", "opinion_utt": 4,
                     "polarity": "POS"|"NEU"|"NEG"}, ...],
     "aspect_chains": [{"explicit": "...", "labels": [2, 0, 1, 0]}, ...]}

Span identity everywhere in this package is exact text equality after
Unicode NFC normalization and surrounding-whitespace trim (no case folding).
"""

from __future__ import annotations

import json
import unicodedata
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

POLARITIES = ("POS", "NEU", "NEG")

#: Guidelines that require human judgment. They are surfaced by the CLI for
#: annotators and reviewers; ``validate`` never enforces them mechanically.
ANNOTATION_GUIDELINES = """\
Judgment-based annotation guidelines (not machine-checked):
  1. The explicit aspect is the most specific name for the opinion's target
     that occurs at or before the opinion's utterance; prefer it over any
     later or vaguer mention.
  2. Aspects that never receive an opinion are left unannotated.
  3. An implicit aspect is a pronoun or other coreferent standing in for the
     explicit aspect inside the opinion's utterance; if a more specific name
     appears only after a mention, the earlier mention is not demoted to
     implicit.
  4. Only words or phrases with clear sentiment are annotated as opinions;
     weak or merely implied sentiment is skipped.
"""


def normalize_span(text: str) -> str:
    """Canonical form used for span comparison: NFC + strip, no case folding."""
    return unicodedata.normalize("NFC", text).strip()


class DatasetFormatError(ValueError):
    """A record could not be parsed; carries the offending line and field."""

    def __init__(self, message: str, *, line: int | None = None, field: str | None = None):
        super().__init__(message)
        self.line = line
        self.field = field


class DatasetValidationError(ValueError):
    """Structurally parseable data that breaks one or more lint rules."""

    def __init__(self, violations: list["Violation"]):
        preview = "; ".join(str(v) for v in violations[:5])
        more = f" (+{len(violations) - 5} more)" if len(violations) > 5 else ""
        super().__init__(f"{len(violations)} rule violation(s): {preview}{more}")
        self.violations = violations


@dataclass(frozen=True)
class Utterance:
    index: int
    speaker: str
    text: str


@dataclass(frozen=True)
class Quadruple:
    """One annotated (explicit aspect, implicit aspect, opinion, polarity) item.

    ``implicit`` is None when the opinion's utterance holds no coreferent of
    the explicit aspect; ``implicit_utt`` is None exactly then.
    """

    explicit: str
    explicit_utt: int
    implicit: str | None
    implicit_utt: int | None
    opinion: str
    opinion_utt: int
    polarity: str


@dataclass(frozen=True)
class AspectChain:
    """Per-utterance labels for one explicit aspect: 2 explicit mention,
    1 coreferent mention, 0 no mention."""

    explicit: str
    labels: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def length(self) -> int:
        """Number of utterances that mention the aspect (labels 1 or 2)."""
        return sum(1 for v in self.labels if v in (1, 2))


@dataclass(frozen=True)
class Dialogue:
    dialogue_id: str
    utterances: tuple[Utterance, ...]
    quadruples: tuple[Quadruple, ...] = ()
    aspect_chains: tuple[AspectChain, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "utterances", tuple(self.utterances))
        object.__setattr__(self, "quadruples", tuple(self.quadruples))
        object.__setattr__(self, "aspect_chains", tuple(self.aspect_chains))


@dataclass(frozen=True)
class Violation:
    dialogue_id: str
    rule: str
    message: str

    def __str__(self) -> str:
        return f"[{self.dialogue_id}] {self.rule}: {self.message}"


@dataclass(frozen=True)
class DatasetStats:
    n_utterances: int
    n_dialogues: int
    n_explicit: int
    n_implicit: int
    chain_max: int
    chain_avg: float
    n_pos: int
    n_neu: int
    n_neg: int
    n_total: int


# -- record <-> object conversion --


def _require(raw: dict, key: str, line: int | None):
    if key not in raw:
        raise DatasetFormatError(f"line {line}: missing field '{key}'", line=line, field=key)
    return raw[key]


def _opt_int(value, key: str, line: int | None) -> int | None:
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, int):
        raise DatasetFormatError(
            f"line {line}: field '{key}' must be an integer or null, got {value!r}",
            line=line, field=key,
        )
    return value


def dialogue_from_record(raw: dict, line: int | None = None) -> Dialogue:
    """Build a Dialogue from a decoded JSON object, checking field shapes only.

    Rule-level problems (bad anchors, label ranges, ...) are left to
    ``validate``; this raises DatasetFormatError for anything that cannot even
    be represented, reporting the line number and field.
    """
    dialogue_id = _require(raw, "dialogue_id", line)
    if not isinstance(dialogue_id, str) or not dialogue_id:
        raise DatasetFormatError(
            f"line {line}: 'dialogue_id' must be a non-empty string", line=line, field="dialogue_id"
        )

    utts = []
    for u in _require(raw, "utterances", line):
        index = _require(u, "index", line)
        speaker = _require(u, "speaker", line)
        text = _require(u, "text", line)
        if not isinstance(index, int) or isinstance(index, bool):
            raise DatasetFormatError(f"line {line}: utterance 'index' must be an integer",
                                     line=line, field="index")
        if not isinstance(text, str):
            raise DatasetFormatError(f"line {line}: utterance 'text' must be a string",
                                     line=line, field="text")
        utts.append(Utterance(index=index, speaker=str(speaker), text=text))

    quads = []
    for q in raw.get("quadruples", []):
        polarity = _require(q, "polarity", line)
        if polarity not in POLARITIES:
            raise DatasetFormatError(
                f"line {line}: field 'polarity' must be one of {'/'.join(POLARITIES)}, "
                f"got {polarity!r}",
                line=line, field="polarity",
            )
        quads.append(Quadruple(
            explicit=str(_require(q, "explicit", line)),
            explicit_utt=_opt_int(_require(q, "explicit_utt", line), "explicit_utt", line),
            implicit=(None if q.get("implicit") is None else str(q["implicit"])),
            implicit_utt=_opt_int(q.get("implicit_utt"), "implicit_utt", line),
            opinion=str(_require(q, "opinion", line)),
            opinion_utt=_opt_int(_require(q, "opinion_utt", line), "opinion_utt", line),
            polarity=polarity,
        ))

    chains = []
    for c in raw.get("aspect_chains", []):
        labels = _require(c, "labels", line)
        if not isinstance(labels, list) or not all(
            isinstance(v, int) and not isinstance(v, bool) for v in labels
        ):
            raise DatasetFormatError(f"line {line}: chain 'labels' must be a list of integers",
                                     line=line, field="labels")
        chains.append(AspectChain(explicit=str(_require(c, "explicit", line)),
                                  labels=tuple(labels)))

    return Dialogue(dialogue_id=dialogue_id, utterances=tuple(utts),
                    quadruples=tuple(quads), aspect_chains=tuple(chains))


def dialogue_to_record(dialogue: Dialogue) -> dict:
    """Inverse of ``dialogue_from_record``; load -> serialize -> load is identity."""
    rec = asdict(dialogue)
    rec["utterances"] = [asdict(u) for u in dialogue.utterances]
    rec["quadruples"] = [asdict(q) for q in dialogue.quadruples]
    rec["aspect_chains"] = [{"explicit": c.explicit, "labels": list(c.labels)}
                            for c in dialogue.aspect_chains]
    return rec


# -- lint rules --


def validate(dialogue: Dialogue) -> list[Violation]:
    """Run every mechanical lint rule; violations are returned, never raised."""
    out: list[Violation] = []
    did = dialogue.dialogue_id

    def bad(rule: str, message: str):
        out.append(Violation(dialogue_id=did, rule=rule, message=message))

    n = len(dialogue.utterances)
    if n < 1:
        bad("utterance-count", "dialogue has no utterances")
    for pos, utt in enumerate(dialogue.utterances):
        if utt.index != pos:
            bad("utterance-index", f"utterance at position {pos} has index {utt.index}")
        if not utt.text.strip():
            bad("utterance-empty", f"utterance {pos} is empty after trimming")

    texts = [normalize_span(u.text) for u in dialogue.utterances]

    for i, q in enumerate(dialogue.quadruples):
        tag = f"quadruple {i}"
        anchors_ok = True
        for name, value in (("explicit_utt", q.explicit_utt), ("opinion_utt", q.opinion_utt)):
            if value is None or not (0 <= value < n):
                bad("anchor-range", f"{tag}: {name}={value} outside 0..{n - 1}")
                anchors_ok = False
        if q.polarity not in POLARITIES:
            bad("polarity-range", f"{tag}: polarity {q.polarity!r}")
        if (q.implicit is None) != (q.implicit_utt is None):
            bad("implicit-pairing", f"{tag}: implicit and implicit_utt must be both set or both null")
        elif q.implicit is not None and q.implicit_utt != q.opinion_utt:
            bad("implicit-pairing",
                f"{tag}: implicit_utt={q.implicit_utt} must equal opinion_utt={q.opinion_utt}")
        if not anchors_ok:
            continue
        if q.explicit_utt > q.opinion_utt:
            bad("anchor-order",
                f"{tag}: explicit_utt={q.explicit_utt} after opinion_utt={q.opinion_utt}")
        if normalize_span(q.opinion) not in texts[q.opinion_utt]:
            bad("opinion-substring",
                f"{tag}: opinion {q.opinion!r} not found in utterance {q.opinion_utt}")
        if normalize_span(q.explicit) not in texts[q.explicit_utt]:
            bad("explicit-substring",
                f"{tag}: explicit {q.explicit!r} not found in utterance {q.explicit_utt}")

    for i, chain in enumerate(dialogue.aspect_chains):
        tag = f"chain {i} ({chain.explicit!r})"
        if len(chain.labels) != n:
            bad("chain-length", f"{tag}: {len(chain.labels)} labels for {n} utterances")
        if any(v not in (0, 1, 2) for v in chain.labels):
            bad("label-range", f"{tag}: labels must be 0, 1 or 2, got {list(chain.labels)}")
        elif 2 not in chain.labels:
            bad("explicit-presence", f"{tag}: no utterance is labeled 2")

    return out


# -- file I/O --


def read_dialogues(path: str | Path) -> list[Dialogue]:
    """Parse a JSONL dataset without applying lint rules."""
    p = Path(path)
    out: list[Dialogue] = []
    with p.open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as e:
                raise DatasetFormatError(f"line {lineno}: invalid JSON: {e.msg}",
                                         line=lineno) from e
            out.append(dialogue_from_record(raw, line=lineno))
    return out


def load_dataset(path: str | Path, check: bool = True) -> list[Dialogue]:
    """Load a JSONL dataset in file order.

    With ``check`` (the default) every lint rule must pass and dialogue ids
    must be unique; otherwise DatasetValidationError carries all violations.
    """
    dialogues = read_dialogues(path)
    if not check:
        return dialogues
    violations: list[Violation] = []
    seen: set[str] = set()
    for d in dialogues:
        if d.dialogue_id in seen:
            violations.append(Violation(d.dialogue_id, "duplicate-id",
                                        "dialogue_id occurs more than once"))
        seen.add(d.dialogue_id)
        violations.extend(validate(d))
    if violations:
        raise DatasetValidationError(violations)
    return dialogues


def save_dataset(dialogues: Iterable[Dialogue], path: str | Path) -> None:
    """Write one JSON object per line; inverse of ``load_dataset``."""
    p = Path(path)
    with p.open("w", encoding="utf-8") as f:
        for d in dialogues:
            f.write(json.dumps(dialogue_to_record(d), ensure_ascii=False) + "\n")


# -- statistics --


def stats(dialogues: Sequence[Dialogue]) -> DatasetStats:
    """Corpus-level counts.

    A chain's length is the number of utterances that mention its aspect
    (labels 1 or 2); ``n_explicit`` counts chains and ``n_implicit`` counts
    coreferent mentions (labels equal to 1).
    """
    n_utts = sum(len(d.utterances) for d in dialogues)
    chains = [c for d in dialogues for c in d.aspect_chains]
    lengths = [c.length for c in chains]
    pol = Counter(q.polarity for d in dialogues for q in d.quadruples)
    return DatasetStats(
        n_utterances=n_utts,
        n_dialogues=len(dialogues),
        n_explicit=len(chains),
        n_implicit=sum(1 for c in chains for v in c.labels if v == 1),
        chain_max=max(lengths) if lengths else 0,
        chain_avg=(sum(lengths) / len(lengths)) if lengths else 0.0,
        n_pos=pol.get("POS", 0),
        n_neu=pol.get("NEU", 0),
        n_neg=pol.get("NEG", 0),
        n_total=sum(pol.values()),
    )


def format_stats(s: DatasetStats) -> str:
    """Human-readable one-row table of the corpus counts."""
    headers = ["#Utterances(Dialogues)", "#Explicit", "#Implicit",
               "Chain#Max", "Chain#Avg", "#Pos", "#Neu", "#Neg", "#Total"]
    row = [f"{s.n_utterances}({s.n_dialogues})", str(s.n_explicit), str(s.n_implicit),
           str(s.chain_max), f"{s.chain_avg:.2f}",
           str(s.n_pos), str(s.n_neu), str(s.n_neg), str(s.n_total)]
    widths = [max(len(h), len(v)) for h, v in zip(headers, row)]
    line = "  ".join(h.rjust(w) for h, w in zip(headers, widths))
    vals = "  ".join(v.rjust(w) for v, w in zip(row, widths))
    return line + "\n" + vals


def stats_to_record(s: DatasetStats) -> dict:
    return asdict(s)


# -- annotator agreement --


def _quad_key(q: Quadruple) -> tuple:
    return (
        normalize_span(q.explicit), q.explicit_utt,
        None if q.implicit is None else normalize_span(q.implicit), q.implicit_utt,
        normalize_span(q.opinion), q.opinion_utt,
        q.polarity,
    )


def agreement(a: Sequence[Dialogue], b: Sequence[Dialogue]) -> tuple[float, float]:
    """Consistency of two annotation passes over the same dialogues.

    Returns ``(f1, accuracy)`` in percent: micro-F1 of exact quadruple matches
    with ``a`` as reference and ``b`` as prediction, and matched / size of the
    union of both annotators' quadruples. Matching is per dialogue with
    multiset semantics; a match requires every field including anchors.
    """
    a_by_id = {d.dialogue_id: d for d in a}
    b_by_id = {d.dialogue_id: d for d in b}
    if set(a_by_id) != set(b_by_id):
        only_a = sorted(set(a_by_id) - set(b_by_id))[:3]
        only_b = sorted(set(b_by_id) - set(a_by_id))[:3]
        raise ValueError(f"annotator files cover different dialogues "
                         f"(only in a: {only_a}, only in b: {only_b})")
    matched = n_a = n_b = 0
    for did, da in a_by_id.items():
        ca = Counter(_quad_key(q) for q in da.quadruples)
        cb = Counter(_quad_key(q) for q in b_by_id[did].quadruples)
        matched += sum((ca & cb).values())
        n_a += sum(ca.values())
        n_b += sum(cb.values())
    precision = matched / n_b if n_b else 0.0
    recall = matched / n_a if n_a else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    union = n_a + n_b - matched
    accuracy = matched / union if union else 0.0
    if n_a == 0 and n_b == 0:
        f1 = accuracy = 1.0
    return f1 * 100.0, accuracy * 100.0
