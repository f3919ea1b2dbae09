import math

import numpy as np
import pytest

from diaquad.parsing import QuadFragment, render_asu_output
from diaquad.reward import (
    GenerationResult,
    RewardConfig,
    count_repetitions,
    episode_reward,
    normalize,
    recompute_total,
    trusted_estimation,
    trusted_reflexion,
)

EPS = 1e-6


# -- normalization --


def test_normalize_even_spread():
    assert normalize([2, 4, 6]) == [0.0, 0.5, 1.0]


def test_normalize_degenerate_ties():
    assert normalize([7, 7, 7]) == [0.5, 0.5, 0.5]
    assert normalize([7, 7, 7], degenerate_value=0.25) == [0.25, 0.25, 0.25]


def test_normalize_negative_scores():
    assert normalize([-3.2, -1.1, -0.4]) == pytest.approx([0.0, 0.75, 1.0])


def test_normalize_needs_two():
    with pytest.raises(ValueError):
        normalize([1.0])


# -- confidence reward --


def _direct_sum(score_sets, epsilon=EPS, inner_m_factor=True):
    # independent direct evaluation of the double sum
    m = len(score_sets)
    total = 0.0
    for scores in score_sets:
        inner = sum((m if inner_m_factor else 1)
                    * min(max(g, epsilon), 1 - epsilon)
                    * math.log(min(max(g, epsilon), 1 - epsilon))
                    for g in scores)
        total += -1.0 / inner
    return total


def test_estimation_hand_value_half():
    value = trusted_estimation([[EPS, 0.5, 1 - EPS]])
    assert value == pytest.approx(-1.0 / (0.5 * math.log(0.5)), rel=1e-3)
    assert value == pytest.approx(2.885, abs=0.01)


def test_estimation_peaked_beats_uniform():
    at_inv_e = trusted_estimation([[EPS, 1 / math.e, 1 - EPS]])
    at_005 = trusted_estimation([[EPS, 0.05, 1 - EPS]])
    assert at_inv_e == pytest.approx(math.e, abs=1e-3)
    assert at_005 == pytest.approx(6.68, abs=0.01)
    assert at_005 > at_inv_e


def test_estimation_two_identical_sets_vs_direct_sum():
    sets = [[0.0, 0.3, 1.0], [0.0, 0.3, 1.0]]
    assert trusted_estimation(sets) == pytest.approx(_direct_sum(sets), rel=1e-12)
    single_with_m2_factor = -1.0 / sum(
        2 * min(max(g, EPS), 1 - EPS) * math.log(min(max(g, EPS), 1 - EPS))
        for g in sets[0])
    assert trusted_estimation(sets) == pytest.approx(2 * single_with_m2_factor, rel=1e-12)


def test_estimation_m_factor_switch():
    sets = [[0.0, 0.4, 1.0], [0.0, 0.9, 1.0]]
    scaled = trusted_estimation(sets, inner_m_factor=True)
    unscaled = trusted_estimation(sets, inner_m_factor=False)
    assert scaled == pytest.approx(unscaled / 2, rel=1e-12)
    assert unscaled == pytest.approx(_direct_sum(sets, inner_m_factor=False), rel=1e-12)


def test_estimation_positive_and_finite():
    rng = np.random.default_rng(3)
    for _ in range(200):
        raw = rng.normal(size=rng.integers(2, 7))
        value = trusted_estimation([normalize(list(raw))])
        assert math.isfinite(value)
        assert value > 0.0


def test_estimation_affine_invariance():
    rng = np.random.default_rng(5)
    for _ in range(200):
        raw = rng.normal(size=4)
        a = rng.uniform(0.1, 10.0)
        b = rng.uniform(-5.0, 5.0)
        original = trusted_estimation([normalize(list(raw))])
        shifted = trusted_estimation([normalize(list(a * raw + b))])
        assert shifted == pytest.approx(original, rel=1e-9)


def test_estimation_peakedness_monotone_on_family():
    grid = np.linspace(EPS, 1 - EPS, 41)
    values = [trusted_estimation([[0.0, float(t), 1.0]]) for t in grid]
    pivot = int(np.argmin(np.abs(grid - 1 / math.e)))
    for i in range(pivot):
        assert values[i] > values[i + 1]
    for i in range(pivot, len(values) - 1):
        assert values[i] < values[i + 1]


def test_estimation_rejects_empty():
    with pytest.raises(ValueError):
        trusted_estimation([])
    with pytest.raises(ValueError):
        trusted_estimation([[]])


# -- repetition counting --


def test_repetitions_distinct():
    assert count_repetitions(["a", "b", "c"]) == 0


def test_repetitions_all_same():
    assert count_repetitions(["a", "a", "a"]) == 2


def test_repetitions_empty():
    assert count_repetitions([]) == 0


def test_repetitions_normalized():
    assert count_repetitions(["  a ", "a", "a\n"]) == 2
    # NFC: composed vs decomposed e-acute
    assert count_repetitions(["café", "café"]) == 1


# -- combined reward --


def test_reflexion_no_repetition_fixture():
    b = trusted_reflexion(1.0, 2.0, 0.5, 0.5, p=0)
    assert b.total == 28.0


def test_reflexion_penalty_fixture():
    b = trusted_reflexion(1.0, 2.0, 0.5, 0.5, p=2)
    assert b.total == 8.0


def test_reflexion_zero_terms():
    assert trusted_reflexion(0.0, 0.0, 0.0, 0.0, p=0).total == 0.0


def test_reflexion_rejects_nonfinite():
    with pytest.raises(ValueError):
        trusted_reflexion(float("nan"), 0.0, 0.0, 0.0, p=0)
    with pytest.raises(ValueError):
        trusted_reflexion(0.0, float("inf"), 0.0, 0.0, p=0)
    with pytest.raises(ValueError):
        trusted_reflexion(0.0, 0.0, 0.0, 0.0, p=-1)


def test_reflexion_penalty_strictly_decreasing_in_p():
    totals = [trusted_reflexion(1.0, 2.0, 0.5, 0.5, p=p).total for p in range(4)]
    assert totals[0] > totals[1] > totals[2] > totals[3]


def test_penalty_branch_below_clean_branch_when_confident():
    rng = np.random.default_rng(41)
    for _ in range(50):
        r_acr, r_asu = rng.uniform(0.1, 5.0, size=2)
        r_rp, r_ra = rng.uniform(0.0, 1.0, size=2)
        clean = trusted_reflexion(r_acr, r_asu, r_rp, r_ra, p=0).total
        previous = clean
        for p in (1, 2, 3):
            total = trusted_reflexion(r_acr, r_asu, r_rp, r_ra, p=p).total
            assert total < clean
            assert total < previous
            previous = total


def test_total_recomputes_from_terms():
    rng = np.random.default_rng(7)
    for _ in range(100):
        terms = rng.normal(size=4)
        p = int(rng.integers(0, 4))
        cfg = RewardConfig(alpha=float(rng.uniform(1, 20)),
                           beta=float(rng.uniform(1, 10)),
                           gamma=float(rng.uniform(1, 5)))
        b = trusted_reflexion(*terms, p=p, config=cfg)
        assert recompute_total(b, cfg) == b.total


def test_config_validation():
    with pytest.raises(ValueError):
        RewardConfig(alpha=0.0)
    with pytest.raises(ValueError):
        RewardConfig(epsilon=0.7)


# -- generation results --


def test_generation_result_invariants():
    with pytest.raises(ValueError):
        GenerationResult(outputs=(), scores=())
    with pytest.raises(ValueError):
        GenerationResult(outputs=("a",), scores=((1.0,),))
    with pytest.raises(ValueError):
        GenerationResult(outputs=("a", "b"), scores=((1.0, 2.0),))


# -- episode reward --


def _gold_text(dialogue) -> str:
    return " ".join(render_asu_output(q) for q in dialogue.quadruples)


def _wrong_text(dialogue) -> str:
    q = dialogue.quadruples[0]
    wrong = QuadFragment(explicit=q.explicit, implicit=q.implicit,
                         opinion=q.opinion,
                         polarity="NEG" if q.polarity != "NEG" else "POS")
    return render_asu_output(wrong)


def _acr_text(dialogue) -> str:
    return "[" + ", ".join(str(v) for v in dialogue.aspect_chains[0].labels) + "]"


def _gen(outputs, spread=1.0):
    scores = tuple(tuple(-spread * i for i in range(3)) for _ in outputs)
    return GenerationResult(outputs=tuple(outputs), scores=scores)


def test_episode_perfect_distinct(tiny_dialogue):
    cfg = RewardConfig()
    asu = _gen([_gold_text(tiny_dialogue), _wrong_text(tiny_dialogue), "something else"])
    acr = _gen([_acr_text(tiny_dialogue), "[0, 0, 0, 0]", "[1, 1, 1, 1]"])
    b = episode_reward(asu, acr, tiny_dialogue, cfg)
    assert (b.r_rp, b.r_ra, b.p) == (1.0, 1.0, 0)
    assert b.total == pytest.approx(
        cfg.alpha * b.r_acr + cfg.beta * b.r_asu + cfg.gamma * 2.0)
    assert b.r_asu == pytest.approx(trusted_estimation(
        [normalize(list(s)) for s in asu.scores]))


def test_episode_identical_wrong_outputs(tiny_dialogue):
    cfg = RewardConfig()
    wrong = _wrong_text(tiny_dialogue)
    asu = _gen([wrong, wrong, wrong])
    acr = _gen([_acr_text(tiny_dialogue), "[0, 0, 0, 0]", "[1, 1, 1, 1]"])
    b = episode_reward(asu, acr, tiny_dialogue, cfg)
    assert (b.p, b.r_rp) == (2, 0.0)
    assert b.r_ra == 1.0
    assert b.total == pytest.approx(cfg.alpha * b.r_acr - 2 * cfg.beta + cfg.gamma * b.r_ra)


def test_episode_gibberish_is_finite(tiny_dialogue):
    asu = _gen(["blurp", "wib wob", "zzz"])
    acr = _gen(["no labels", "none", "nada"])
    b = episode_reward(asu, acr, tiny_dialogue)
    assert (b.r_rp, b.r_ra) == (0.0, 0.0)
    assert math.isfinite(b.total)


def test_episode_multichain_requires_mapping(worked_dialogue, tiny_dialogue):
    import dataclasses
    two_chains = dataclasses.replace(
        tiny_dialogue,
        aspect_chains=tiny_dialogue.aspect_chains + tiny_dialogue.aspect_chains)
    asu = _gen([_gold_text(tiny_dialogue), "b", "c"])
    with pytest.raises(ValueError):
        episode_reward(asu, _gen(["[2, 0, 1, 0]", "x", "y"]), two_chains)


def test_episode_multichain_mapping(worked_dialogue):
    asu = _gen([_gold_text(worked_dialogue), "b", "c"])
    acr = {"Wen Chaorong": _gen(["[0, 0, 2, 0, 1]", "x", "y"])}
    b = episode_reward(asu, acr, worked_dialogue)
    assert b.r_ra == 1.0
    assert b.r_rp == 1.0


def test_episode_no_annotation_counts_as_perfect_silence(tiny_dialogue):
    import dataclasses
    bare = dataclasses.replace(tiny_dialogue, quadruples=(), aspect_chains=())
    asu = _gen(["nothing to extract", "b", "c"])
    b = episode_reward(asu, None, bare)
    assert b.r_rp == 1.0
    assert b.r_ra == 1.0
    assert b.r_acr == 0.0
