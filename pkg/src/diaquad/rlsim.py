"""Desk-scale check that the reward stack trains a policy as intended.

The generator is modeled as a softmax policy over a small fixed set of
candidate answers (a contextual bandit: extraction episodes are single-step).
Each step samples m distinct candidates per episode, ranked like beams via
Gumbel perturbation, turns them into GenerationResults whose score lists are
the policy's top-n logits, pushes them through the full episode reward and
applies a REINFORCE update (PPO-style clipping opt-in). Everything is
deterministic under a fixed seed.

Also contains the supervised-loss helper (token-level cross-entropy) and the
exact-enumeration objective/gradient used as oracles for the estimator.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .corpus import Dialogue, Quadruple, Utterance, AspectChain, load_dataset
from .parsing import QuadFragment, parse_asu_output, render_asu_output
from .evaluation import quad_item
from .reward import GenerationResult, RewardConfig, episode_reward

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

logger = logging.getLogger(__name__)

MAX_ENUMERABLE = 64


# -- supervised losses --


@dataclass(frozen=True)
class TokenBatch:
    """N one-hot token targets and N predicted distributions over K tokens."""

    gold: np.ndarray
    predicted: np.ndarray

    def __post_init__(self):
        gold = np.asarray(self.gold, dtype=float)
        predicted = np.asarray(self.predicted, dtype=float)
        object.__setattr__(self, "gold", gold)
        object.__setattr__(self, "predicted", predicted)
        if gold.ndim != 2 or gold.shape != predicted.shape:
            raise ValueError(f"gold {gold.shape} and predicted {predicted.shape} "
                             "must both be (N, K)")
        n, k = gold.shape
        if n < 1 or k < 2:
            raise ValueError("need N >= 1 targets over K >= 2 tokens")
        if not np.allclose(predicted.sum(axis=1), 1.0, atol=1e-9):
            raise ValueError("each predicted row must sum to 1 within 1e-9")
        one_hot = (gold.sum(axis=1) == 1.0) & np.isin(gold, (0.0, 1.0)).all(axis=1)
        if not one_hot.all():
            raise ValueError("gold rows must be one-hot")


def cross_entropy(batch: TokenBatch) -> float:
    """Token-level cross-entropy, predictions clamped to [1e-12, 1].

    The same operation scores either task's targets; a run's supervised loss
    is the sum of the two task losses.
    """
    clamped = np.clip(batch.predicted, 1e-12, 1.0)
    return float(-(batch.gold * np.log(clamped)).sum())


# -- toy policy --


@dataclass(frozen=True)
class Candidate:
    """One answer the policy can emit: extraction text plus chain-label text."""

    name: str
    asu_text: str
    acr_text: str


@dataclass(frozen=True)
class ToyPolicy:
    logits: np.ndarray
    candidates: tuple[Candidate, ...]

    def __post_init__(self):
        logits = np.asarray(self.logits, dtype=float)
        object.__setattr__(self, "logits", logits)
        object.__setattr__(self, "candidates", tuple(self.candidates))
        if len(self.candidates) < 2:
            raise ValueError("need at least 2 candidates")
        if logits.shape != (len(self.candidates),):
            raise ValueError("one logit per candidate required")
        if not np.isfinite(logits).all():
            raise ValueError("logits must be finite")

    def probs(self) -> np.ndarray:
        z = self.logits - self.logits.max()
        e = np.exp(z)
        return e / e.sum()


@dataclass(frozen=True)
class Trajectory:
    actions: tuple[int, ...]
    rewards: tuple[float, ...]

    @property
    def total_reward(self) -> float:
        return float(sum(self.rewards))


def expected_objective(policy: ToyPolicy, reward_fn: Callable[[int], float]) -> float:
    """Exact J = sum_a pi(a) * R(a) by enumeration; the estimator's oracle."""
    k = len(policy.candidates)
    if k > MAX_ENUMERABLE:
        raise ValueError(f"candidate space too large to enumerate ({k} > {MAX_ENUMERABLE})")
    probs = policy.probs()
    return float(sum(probs[a] * reward_fn(a) for a in range(k)))


def exact_gradient(policy: ToyPolicy, reward_fn: Callable[[int], float]) -> np.ndarray:
    """Analytic gradient of the enumerated objective wrt the logits."""
    k = len(policy.candidates)
    if k > MAX_ENUMERABLE:
        raise ValueError(f"candidate space too large to enumerate ({k} > {MAX_ENUMERABLE})")
    probs = policy.probs()
    rewards = np.array([reward_fn(a) for a in range(k)])
    j = float(probs @ rewards)
    return probs * (rewards - j)


def policy_gradient_step(policy: ToyPolicy, trajectories: Sequence[Trajectory],
                         learning_rate: float, clip: float | None = None,
                         old_policy: ToyPolicy | None = None) -> ToyPolicy:
    """One ascent step from a batch of sampled trajectories.

    REINFORCE with the batch-mean reward subtracted as baseline; with
    ``clip`` set, the clipped-surrogate update with probability ratios taken
    against ``old_policy`` (the snapshot that sampled the batch).
    """
    if not trajectories:
        raise ValueError("need at least one trajectory")
    k = len(policy.candidates)
    for t in trajectories:
        if any(not 0 <= a < k for a in t.actions):
            raise ValueError(f"action index out of range in {t.actions}")
    old = old_policy or policy
    probs = policy.probs()
    old_probs = old.probs()
    rewards = np.array([t.total_reward for t in trajectories])
    if rewards.max() == rewards.min():
        advantages = np.zeros_like(rewards)  # baseline cancels identically
    else:
        advantages = rewards - rewards.mean()

    grad = np.zeros(k)
    for t, adv in zip(trajectories, advantages):
        if adv == 0.0:
            continue
        score = np.zeros(k)
        for a in t.actions:
            score += -probs
            score[a] += 1.0
        if clip is None:
            grad += adv * score
        else:
            ratio = 1.0
            for a in t.actions:
                ratio *= probs[a] / old_probs[a]
            clipped_out = (ratio > 1.0 + clip) if adv > 0 else (ratio < 1.0 - clip)
            if not clipped_out:
                grad += adv * ratio * score
    grad /= len(trajectories)
    if not np.isfinite(grad).all():
        raise ValueError("non-finite policy gradient")
    return replace(policy, logits=policy.logits + learning_rate * grad)


# -- scenarios --


@dataclass(frozen=True)
class Scenario:
    gold: Dialogue
    candidates: tuple[Candidate, ...]
    gold_index: int = 0
    steps: int = 800
    m: int = 3
    n_scores: int = 3
    batch_size: int = 8
    learning_rate: float = 0.05
    clip: float | None = None
    ppo_epochs: int = 1
    reward: RewardConfig = field(default_factory=RewardConfig)
    seed: int | None = None  # default seed for runners; simulate() takes its own


@dataclass(frozen=True)
class CurvePoint:
    step: int
    expected_reward: float
    p_correct: float
    repetition_rate: float


@dataclass(frozen=True)
class SimulationResult:
    curve: tuple[CurvePoint, ...]
    final_policy: ToyPolicy


def default_dialogue() -> Dialogue:
    """Small two-speaker movie chat with one quadruple and one chain."""
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
    return Dialogue(dialogue_id="demo-movie", utterances=utterances,
                    quadruples=(quad,), aspect_chains=(chain,))


def make_candidates(gold: Dialogue) -> tuple[Candidate, ...]:
    """Standard candidate set: the correct answer, a flipped-polarity variant,
    a wrong-coreference variant, and unparseable filler."""
    quad = gold.quadruples[0]
    chain = gold.aspect_chains[0]
    acr_good = "[" + ", ".join(str(v) for v in chain.labels) + "]"
    flipped = {"POS": "NEG", "NEG": "POS", "NEU": "NEG"}[quad.polarity]
    wrong_pol = QuadFragment(explicit=quad.explicit, implicit=quad.implicit,
                             opinion=quad.opinion, polarity=flipped)
    wrong_ref = QuadFragment(explicit=quad.explicit, implicit="a ticket",
                             opinion=quad.opinion, polarity=quad.polarity)
    bad_labels = list(chain.labels)
    bad_labels[-1], bad_labels[-2] = bad_labels[-2], bad_labels[-1]
    acr_bad = "[" + ", ".join(str(v) for v in bad_labels) + "]"
    return (
        Candidate("gold", render_asu_output(quad), acr_good),
        Candidate("wrong_polarity", render_asu_output(wrong_pol), acr_good),
        Candidate("wrong_coreference", render_asu_output(wrong_ref), acr_bad),
        Candidate("gibberish", "I cannot find any opinions in this conversation.",
                  "no labels here"),
    )


def default_scenario(**overrides) -> Scenario:
    gold = default_dialogue()
    return Scenario(gold=gold, candidates=make_candidates(gold), **overrides)


def repetitive_scenario(**overrides) -> Scenario:
    """Every candidate emits the same (correct) text: the penalty branch
    stays active no matter what the policy does."""
    base = default_scenario(**overrides)
    gold_cand = base.candidates[base.gold_index]
    candidates = tuple(Candidate(f"copy{i}", gold_cand.asu_text, gold_cand.acr_text)
                       for i in range(len(base.candidates)))
    return replace(base, candidates=candidates, gold_index=0)


def validate_scenario(scenario: Scenario) -> None:
    k = len(scenario.candidates)
    if k < 2:
        raise ValueError("scenario needs at least 2 candidates")
    if not 0 <= scenario.gold_index < k:
        raise ValueError(f"gold_index {scenario.gold_index} out of range")
    if not 2 <= scenario.m <= k:
        raise ValueError(f"m must be in 2..{k}, got {scenario.m}")
    if not 2 <= scenario.n_scores <= k:
        raise ValueError(f"n_scores must be in 2..{k}, got {scenario.n_scores}")
    if scenario.steps < 1 or scenario.batch_size < 2:
        raise ValueError("need steps >= 1 and batch_size >= 2")
    if scenario.ppo_epochs > 1 and scenario.clip is None:
        raise ValueError("ppo_epochs > 1 requires clip")
    if len(scenario.gold.aspect_chains) != 1:
        raise ValueError("scenario dialogue must have exactly one aspect chain")
    gold_items = sorted(quad_item(q) for q in scenario.gold.quadruples)
    parsed = parse_asu_output(scenario.candidates[scenario.gold_index].asu_text)
    if sorted(quad_item(q) for q in parsed.quadruples) != gold_items:
        raise ValueError("the gold-index candidate must parse back to the gold quadruples")
    kinds = {c.name for c in scenario.candidates}
    if not {"wrong_polarity", "wrong_coreference"} <= kinds:
        logger.warning("scenario lacks named wrong_polarity/wrong_coreference candidates")


def _episode(policy: ToyPolicy, order: np.ndarray, scenario: Scenario):
    top_n = np.sort(policy.logits)[::-1][:scenario.n_scores]
    score_list = tuple(float(v) for v in top_n)
    meta = {"backend": "rlsim"}
    asu_gen = GenerationResult(
        outputs=tuple(scenario.candidates[i].asu_text for i in order),
        scores=(score_list,) * len(order), meta=meta)
    acr_gen = GenerationResult(
        outputs=tuple(scenario.candidates[i].acr_text for i in order),
        scores=(score_list,) * len(order), meta=meta)
    return episode_reward(asu_gen, acr_gen, scenario.gold, scenario.reward)


def simulate(scenario: Scenario, seed: int) -> SimulationResult:
    """Run the scenario; returns the per-step learning curve and end policy."""
    validate_scenario(scenario)
    rng = np.random.default_rng(seed)
    policy = ToyPolicy(logits=np.zeros(len(scenario.candidates)),
                       candidates=scenario.candidates)
    curve: list[CurvePoint] = []
    for step in range(scenario.steps):
        p_correct = float(policy.probs()[scenario.gold_index])
        trajectories: list[Trajectory] = []
        rewards: list[float] = []
        rep_rates: list[float] = []
        for _ in range(scenario.batch_size):
            keys = policy.logits + rng.gumbel(size=len(scenario.candidates))
            order = np.argsort(-keys)[:scenario.m]
            breakdown = _episode(policy, order, scenario)
            trajectories.append(Trajectory(actions=(int(order[0]),),
                                           rewards=(breakdown.total,)))
            rewards.append(breakdown.total)
            rep_rates.append(breakdown.p / (scenario.m - 1))
        if scenario.clip is not None and scenario.ppo_epochs > 1:
            snapshot = policy
            for _ in range(scenario.ppo_epochs):
                policy = policy_gradient_step(policy, trajectories,
                                              scenario.learning_rate,
                                              clip=scenario.clip, old_policy=snapshot)
        else:
            policy = policy_gradient_step(policy, trajectories,
                                          scenario.learning_rate, clip=scenario.clip)
        curve.append(CurvePoint(step=step,
                                expected_reward=float(np.mean(rewards)),
                                p_correct=p_correct,
                                repetition_rate=float(np.mean(rep_rates))))
    return SimulationResult(curve=tuple(curve), final_policy=policy)


def curve_to_csv(curve: Sequence[CurvePoint]) -> str:
    lines = ["step,expected_reward,p_correct,repetition_rate"]
    for pt in curve:
        lines.append(f"{pt.step},{pt.expected_reward:.10g},"
                     f"{pt.p_correct:.10g},{pt.repetition_rate:.10g}")
    return "\n".join(lines) + "\n"


def load_scenario(path: str | Path) -> Scenario:
    """Build a Scenario from a TOML file.

    [scenario] holds steps/m/n_scores/batch_size/learning_rate/clip/
    ppo_epochs/gold_index plus an optional dataset path and dialogue_id;
    [reward] holds alpha/beta/gamma/epsilon; repeated [[candidates]] tables
    (name/asu/acr) are optional, the standard set is derived from the gold
    dialogue when absent.
    """
    with Path(path).open("rb") as f:
        raw = tomllib.load(f)
    sc = raw.get("scenario", {})
    rw = raw.get("reward", {})

    if "dataset" in sc:
        dialogues = load_dataset(sc["dataset"])
        if "dialogue_id" in sc:
            by_id = {d.dialogue_id: d for d in dialogues}
            try:
                gold = by_id[sc["dialogue_id"]]
            except KeyError:
                raise ValueError(f"dialogue_id {sc['dialogue_id']!r} not in {sc['dataset']}")
        else:
            gold = dialogues[0]
    else:
        gold = default_dialogue()

    if raw.get("candidates"):
        candidates = tuple(Candidate(name=c.get("name", f"candidate{i}"),
                                     asu_text=c["asu"], acr_text=c["acr"])
                           for i, c in enumerate(raw["candidates"]))
    else:
        candidates = make_candidates(gold)

    reward = RewardConfig(alpha=rw.get("alpha", 15.0), beta=rw.get("beta", 5.0),
                          gamma=rw.get("gamma", 3.0), epsilon=rw.get("epsilon", 1e-6))
    defaults = Scenario(gold=gold, candidates=candidates)
    return Scenario(
        gold=gold, candidates=candidates,
        gold_index=sc.get("gold_index", defaults.gold_index),
        steps=sc.get("steps", defaults.steps),
        m=sc.get("m", defaults.m),
        n_scores=sc.get("n_scores", defaults.n_scores),
        batch_size=sc.get("batch_size", defaults.batch_size),
        learning_rate=sc.get("learning_rate", defaults.learning_rate),
        clip=sc.get("clip"),
        ppo_epochs=sc.get("ppo_epochs", defaults.ppo_epochs),
        reward=reward,
        seed=sc.get("seed"),
    )
