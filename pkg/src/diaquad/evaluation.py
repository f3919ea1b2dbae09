"""Scoring of predicted quadruples and coreference chains against gold.

All cells are micro-pooled over dialogues: items are projected per dialogue,
matched exactly (multiset semantics, duplicates count with multiplicity) and
the counts are summed corpus-wide. Span identity follows the corpus rule
(NFC + trim). A missing implicit aspect is a first-class value, so every
quadruple contributes one item to every cell and projection dominance holds:
quadruple F1 <= every pair F1 <= every involved single F1.

Precision divides by the prediction count and recall by the gold count; the
transposed reading (precision over gold, recall over predictions) yields the
same F1 and is included in the JSON report as ``alt_convention``.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Sequence

from scipy import stats as _scipy_stats

from .corpus import Dialogue, normalize_span

SINGLE_CELLS = {"explicit": (0,), "implicit": (1,), "opinion": (2,), "polarity": (2, 3)}
PAIR_CELLS = {"explicit_opinion": (0, 2), "explicit_implicit": (0, 1),
              "implicit_opinion": (1, 2)}
QUAD_CELL = (0, 1, 2, 3)


@dataclass(frozen=True)
class PrfScore:
    precision: float
    recall: float
    f1: float
    n_correct: int
    n_pred: int
    n_gold: int


@dataclass(frozen=True)
class EvalReport:
    single: dict[str, PrfScore]
    pair: dict[str, PrfScore]
    quadruple: PrfScore
    polarity_class: dict[str, PrfScore]
    polarity_macro_f1: float
    per_dialogue_quadruple_f1: dict[str, float]


def match_sets(gold: Sequence[tuple], pred: Sequence[tuple]) -> tuple[int, int, int]:
    """Exact-match counts under multiset semantics.

    ``n_correct`` is the multiset intersection size, which equals the size of
    a maximum one-to-one matching between equal items.
    """
    gold_counts = Counter(gold)
    pred_counts = Counter(pred)
    n_correct = sum((gold_counts & pred_counts).values())
    return n_correct, len(pred), len(gold)


def prf(n_correct: int, n_pred: int, n_gold: int) -> PrfScore:
    """Precision/recall/F1 from match counts, with zero-division guards."""
    if min(n_correct, n_pred, n_gold) < 0 or n_correct > min(n_pred, n_gold):
        raise ValueError(f"inconsistent counts: correct={n_correct}, "
                         f"pred={n_pred}, gold={n_gold}")
    precision = n_correct / n_pred if n_pred else 0.0
    recall = n_correct / n_gold if n_gold else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return PrfScore(precision=precision, recall=recall, f1=f1,
                    n_correct=n_correct, n_pred=n_pred, n_gold=n_gold)


def quad_item(q) -> tuple:
    """Text-identity tuple of a quadruple or fragment; anchors are ignored."""
    return (
        normalize_span(q.explicit),
        None if q.implicit is None else normalize_span(q.implicit),
        normalize_span(q.opinion),
        q.polarity,
    )


def _cell_counts(gold_items: Mapping[str, list[tuple]],
                 pred_items: Mapping[str, list[tuple]],
                 idxs: tuple[int, ...]) -> tuple[int, int, int]:
    correct = n_pred = n_gold = 0
    for did, gitems in gold_items.items():
        g = [tuple(it[i] for i in idxs) for it in gitems]
        p = [tuple(it[i] for i in idxs) for it in pred_items.get(did, [])]
        c, np_, ng = match_sets(g, p)
        correct, n_pred, n_gold = correct + c, n_pred + np_, n_gold + ng
    return correct, n_pred, n_gold


def evaluate(gold: Sequence[Dialogue], pred: Mapping[str, Sequence]) -> EvalReport:
    """Score predictions (dialogue_id -> quadruple fragments) against gold.

    Dialogues with no entry in ``pred`` count as empty predictions; an id in
    ``pred`` that is not in gold is an error.
    """
    gold_ids = {d.dialogue_id for d in gold}
    unknown = set(pred) - gold_ids
    if unknown:
        raise ValueError(f"predictions for unknown dialogue ids: {sorted(unknown)[:5]}")

    gold_items = {d.dialogue_id: [quad_item(q) for q in d.quadruples] for d in gold}
    pred_items = {did: [quad_item(q) for q in quads] for did, quads in pred.items()}

    single = {name: prf(*_cell_counts(gold_items, pred_items, idxs))
              for name, idxs in SINGLE_CELLS.items()}
    pair = {name: prf(*_cell_counts(gold_items, pred_items, idxs))
            for name, idxs in PAIR_CELLS.items()}
    quadruple = prf(*_cell_counts(gold_items, pred_items, QUAD_CELL))

    # Supplementary per-polarity-class breakdown, macro-averaged.
    polarity_class: dict[str, PrfScore] = {}
    for cls in ("POS", "NEU", "NEG"):
        g_cls = {did: [it[2:] for it in items if it[3] == cls]
                 for did, items in gold_items.items()}
        p_cls = {did: [it[2:] for it in items if it[3] == cls]
                 for did, items in pred_items.items()}
        polarity_class[cls] = prf(*_cell_counts(g_cls, p_cls, (0, 1)))
    polarity_macro_f1 = sum(s.f1 for s in polarity_class.values()) / 3.0

    per_dialogue: dict[str, float] = {}
    for d in gold:
        g = gold_items[d.dialogue_id]
        p = pred_items.get(d.dialogue_id, [])
        per_dialogue[d.dialogue_id] = prf(*match_sets(g, p)).f1

    return EvalReport(single=single, pair=pair, quadruple=quadruple,
                      polarity_class=polarity_class,
                      polarity_macro_f1=polarity_macro_f1,
                      per_dialogue_quadruple_f1=per_dialogue)


def evaluate_acr(gold: Sequence[Dialogue],
                 pred: Mapping[tuple[str, str], Sequence[int]]) -> PrfScore:
    """Chain-labeling F1: items are (dialogue, aspect, utterance, label) for
    non-zero labels, micro-pooled over all chains."""
    gold_items: list[tuple] = []
    keys: set[tuple[str, str]] = set()
    for d in gold:
        for chain in d.aspect_chains:
            key = (d.dialogue_id, normalize_span(chain.explicit))
            keys.add(key)
            gold_items.extend(key + (i, v) for i, v in enumerate(chain.labels) if v)
    pred_norm = {(did, normalize_span(explicit)): labels
                 for (did, explicit), labels in pred.items()}
    unknown = set(pred_norm) - keys
    if unknown:
        raise ValueError(f"predictions for unknown chains: {sorted(unknown)[:5]}")
    pred_items: list[tuple] = []
    for key, labels in pred_norm.items():
        pred_items.extend(key + (i, v) for i, v in enumerate(labels) if v)
    return prf(*match_sets(gold_items, pred_items))


@dataclass(frozen=True)
class TTestResult:
    t: float | None
    p: float | None
    degenerate: bool
    n: int


def significance(per_dialogue_a: Sequence[float],
                 per_dialogue_b: Sequence[float]) -> TTestResult:
    """Paired two-sided t-test on per-dialogue scores.

    Zero variance of the differences (including a == b) is reported as
    degenerate rather than producing an undefined statistic.
    """
    if len(per_dialogue_a) != len(per_dialogue_b):
        raise ValueError(f"paired samples differ in length: "
                         f"{len(per_dialogue_a)} vs {len(per_dialogue_b)}")
    n = len(per_dialogue_a)
    if n < 2:
        raise ValueError("need at least 2 paired scores")
    diffs = [a - b for a, b in zip(per_dialogue_a, per_dialogue_b)]
    mean = sum(diffs) / n
    var = sum((d - mean) ** 2 for d in diffs) / (n - 1)
    if var == 0.0:
        return TTestResult(t=(0.0 if mean == 0.0 else None), p=None,
                           degenerate=True, n=n)
    t = mean / math.sqrt(var / n)
    p = 2.0 * float(_scipy_stats.t.sf(abs(t), df=n - 1))
    return TTestResult(t=t, p=p, degenerate=False, n=n)


# -- report rendering --


def score_to_record(s: PrfScore) -> dict:
    return {
        "precision": s.precision, "recall": s.recall, "f1": s.f1,
        "n_correct": s.n_correct, "n_pred": s.n_pred, "n_gold": s.n_gold,
        # Transposed denominators; F1 is invariant under the swap.
        "alt_convention": {
            "precision": s.n_correct / s.n_gold if s.n_gold else 0.0,
            "recall": s.n_correct / s.n_pred if s.n_pred else 0.0,
        },
    }


def report_to_record(report: EvalReport) -> dict:
    return {
        "single": {k: score_to_record(v) for k, v in report.single.items()},
        "pair": {k: score_to_record(v) for k, v in report.pair.items()},
        "quadruple": score_to_record(report.quadruple),
        "polarity_class": {k: score_to_record(v) for k, v in report.polarity_class.items()},
        "polarity_macro_f1": report.polarity_macro_f1,
        "per_dialogue_quadruple_f1": report.per_dialogue_quadruple_f1,
    }


def format_report(report: EvalReport) -> str:
    """Two-line F1 table: four single cells, three pair cells, the quadruple."""
    headers = ["Explicit", "Implicit", "Opinion", "Polarity", "E-O", "E-I", "I-O",
               "Quadruple"]
    values = [report.single["explicit"].f1, report.single["implicit"].f1,
              report.single["opinion"].f1, report.single["polarity"].f1,
              report.pair["explicit_opinion"].f1, report.pair["explicit_implicit"].f1,
              report.pair["implicit_opinion"].f1, report.quadruple.f1]
    cells = [f"{v * 100:.2f}" for v in values]
    widths = [max(len(h), len(c)) for h, c in zip(headers, cells)]
    head = "  ".join(h.rjust(w) for h, w in zip(headers, widths))
    row = "  ".join(c.rjust(w) for c, w in zip(cells, widths))
    return head + "\n" + row
