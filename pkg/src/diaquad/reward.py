"""Confidence-based reward stack for generated extraction answers.

An episode is one dialogue: the backend produces m candidate outputs per
task, each carrying n generation scores (beam-path scores). The first output
is the answer; the remaining outputs are alternates that feed confidence
estimation and repetition counting.

The confidence term rewards a large spread in normalized generation scores
(an entropy-style statistic, inverted: peaked score profiles score higher
than flat ones). The combined reward mixes the two tasks' confidence terms
with their task F1s and switches to a repetition penalty branch whenever the
outputs contain duplicates.
"""

from __future__ import annotations

import math
import unicodedata
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .corpus import Dialogue, normalize_span
from .evaluation import match_sets, prf, quad_item
from .parsing import AcrParseError, parse_acr_output, parse_asu_output


@dataclass(frozen=True)
class GenerationResult:
    """Candidate outputs with their generation scores for one prompt."""

    outputs: tuple[str, ...]
    scores: tuple[tuple[float, ...], ...]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "outputs", tuple(self.outputs))
        object.__setattr__(self, "scores", tuple(tuple(s) for s in self.scores))
        if not self.outputs:
            raise ValueError("GenerationResult needs at least one output")
        if len(self.scores) != len(self.outputs):
            raise ValueError(f"{len(self.outputs)} outputs but {len(self.scores)} score lists")
        if any(len(s) < 2 for s in self.scores):
            raise ValueError("each output needs at least 2 generation scores "
                             "(normalization needs a spread)")


@dataclass(frozen=True)
class RewardConfig:
    alpha: float = 15.0
    beta: float = 5.0
    gamma: float = 3.0
    epsilon: float = 1e-6
    degenerate_value: float = 0.5
    # The inner sum of the confidence statistic multiplies every term by the
    # output count m; disable to use the unscaled variant.
    inner_m_factor: bool = True

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) <= 0:
            raise ValueError("alpha, beta and gamma must be positive")
        if not 0 < self.epsilon < 0.5:
            raise ValueError("epsilon must lie strictly between 0 and 0.5")


@dataclass(frozen=True)
class RewardBreakdown:
    r_acr: float
    r_asu: float
    r_rp: float
    r_ra: float
    p: int
    total: float


def normalize(scores: Sequence[float], degenerate_value: float = 0.5) -> list[float]:
    """Min-max normalization into [0, 1].

    When all scores tie (spread below 1e-12) every entry becomes
    ``degenerate_value``: a tie carries no confidence signal.
    """
    if len(scores) < 2:
        raise ValueError("need at least 2 scores to normalize")
    lo, hi = min(scores), max(scores)
    spread = hi - lo
    if spread < 1e-12:
        return [degenerate_value] * len(scores)
    return [(s - lo) / spread for s in scores]


def trusted_estimation(score_sets: Sequence[Sequence[float]],
                       epsilon: float = 1e-6,
                       inner_m_factor: bool = True) -> float:
    """Confidence reward over m normalized score lists.

    Each entry is clamped into [epsilon, 1 - epsilon] before the logarithm,
    so every inner sum is strictly negative and the result is finite and
    strictly positive. Larger score spread (entries pushed toward 0 and 1)
    yields a larger reward.
    """
    m = len(score_sets)
    if m == 0 or any(len(s) == 0 for s in score_sets):
        raise ValueError("score_sets must be non-empty lists of scores")
    factor = float(m) if inner_m_factor else 1.0
    total = 0.0
    for scores in score_sets:
        inner = 0.0
        for g in scores:
            g = min(max(g, epsilon), 1.0 - epsilon)
            inner += factor * g * math.log(g)
        total -= 1.0 / inner
    return total


def _canon(text: str) -> str:
    return unicodedata.normalize("NFC", text).strip()


def count_repetitions(outputs: Sequence[str]) -> int:
    """Number of outputs identical (NFC + trim) to any earlier output."""
    seen: set[str] = set()
    p = 0
    for out in outputs:
        key = _canon(out)
        if key in seen:
            p += 1
        seen.add(key)
    return p


def trusted_reflexion(r_acr: float, r_asu: float, r_rp: float, r_ra: float,
                      p: int, config: RewardConfig | None = None) -> RewardBreakdown:
    """Combine the reward terms.

    With no repetition the total is alpha*r_acr + beta*r_asu +
    gamma*(r_rp + r_ra); with p > 0 the confidence term of the extraction
    task is replaced by the penalty -beta*p.
    """
    config = config or RewardConfig()
    terms = (r_acr, r_asu, r_rp, r_ra)
    if not all(math.isfinite(v) for v in terms):
        raise ValueError(f"reward terms must be finite, got {terms}")
    if p < 0:
        raise ValueError("repetition count must be >= 0")
    if p == 0:
        total = config.alpha * r_acr + config.beta * r_asu + config.gamma * (r_rp + r_ra)
    else:
        total = config.alpha * r_acr - config.beta * p + config.gamma * (r_rp + r_ra)
    return RewardBreakdown(r_acr=r_acr, r_asu=r_asu, r_rp=r_rp, r_ra=r_ra,
                           p=p, total=total)


def recompute_total(b: RewardBreakdown, config: RewardConfig | None = None) -> float:
    """Total as implied by the stored terms; must equal ``b.total`` exactly."""
    return trusted_reflexion(b.r_acr, b.r_asu, b.r_rp, b.r_ra, b.p, config).total


def _f1_or_perfect(n_correct: int, n_pred: int, n_gold: int) -> float:
    # Nothing to extract and nothing extracted counts as a perfect answer.
    if n_gold == 0 and n_pred == 0:
        return 1.0
    return prf(n_correct, n_pred, n_gold).f1


def episode_reward(asu_gen: GenerationResult,
                   acr_gen: GenerationResult | Mapping[str, GenerationResult] | None,
                   gold: Dialogue,
                   config: RewardConfig | None = None) -> RewardBreakdown:
    """Full reward for one dialogue's generations.

    ``acr_gen`` maps each chain's explicit aspect to its generation result; a
    bare GenerationResult is accepted when the dialogue has at most one
    chain. Task F1s are computed from the first output of each result
    (the answer); unparseable answers yield empty predictions, never errors.
    """
    config = config or RewardConfig()

    r_asu = trusted_estimation(
        [normalize(s, config.degenerate_value) for s in asu_gen.scores],
        epsilon=config.epsilon, inner_m_factor=config.inner_m_factor)

    if acr_gen is None:
        acr_results: dict[str, GenerationResult] = {}
    elif isinstance(acr_gen, GenerationResult):
        if len(gold.aspect_chains) > 1:
            raise ValueError("dialogue has several chains; pass a mapping "
                             "explicit -> GenerationResult")
        acr_results = {gold.aspect_chains[0].explicit: acr_gen} if gold.aspect_chains else {}
    else:
        acr_results = dict(acr_gen)

    acr_score_sets = [normalize(s, config.degenerate_value)
                      for res in acr_results.values() for s in res.scores]
    r_acr = (trusted_estimation(acr_score_sets, epsilon=config.epsilon,
                                inner_m_factor=config.inner_m_factor)
             if acr_score_sets else 0.0)

    # Extraction F1 of the answer against this dialogue's gold quadruples.
    fragments = parse_asu_output(asu_gen.outputs[0]).quadruples
    gold_items = [quad_item(q) for q in gold.quadruples]
    pred_items = [quad_item(q) for q in fragments]
    r_rp = _f1_or_perfect(*match_sets(gold_items, pred_items))

    # Chain-labeling F1 of the answers against the gold chains.
    n = len(gold.utterances)
    gold_chain_items = [(normalize_span(c.explicit), i, v) for c in gold.aspect_chains
                        for i, v in enumerate(c.labels) if v]
    pred_chain_items: list[tuple] = []
    for explicit, result in acr_results.items():
        try:
            labels = parse_acr_output(result.outputs[0], n).labels
        except AcrParseError:
            continue
        pred_chain_items.extend((normalize_span(explicit), i, v)
                                for i, v in enumerate(labels) if v)
    r_ra = _f1_or_perfect(*match_sets(gold_chain_items, pred_chain_items))

    p = count_repetitions(asu_gen.outputs)
    return trusted_reflexion(r_acr, r_asu, r_rp, r_ra, p, config)


def breakdown_to_record(b: RewardBreakdown, dialogue_id: str | None = None) -> dict:
    rec = {"r_acr": b.r_acr, "r_asu": b.r_asu, "r_rp": b.r_rp, "r_ra": b.r_ra,
           "p": b.p, "total": b.total}
    if dialogue_id is not None:
        rec = {"dialogue_id": dialogue_id, **rec}
    return rec
