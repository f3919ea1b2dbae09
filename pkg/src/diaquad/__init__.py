"""Dialogue aspect-sentiment quadruple toolkit.

Library layout, one module per concern:

- ``corpus``     dialogue/quadruple/chain data model, JSONL I/O, lint,
                 statistics, annotator agreement
- ``prompting``  task prompt construction
- ``parsing``    canonical answer rendering and tolerant output parsing
- ``evaluation`` single/pair/quadruple F1 cells, chain F1, paired t-test
- ``reward``     confidence rewards, repetition penalty, episode reward
- ``rlsim``      toy softmax-policy simulator driving the full reward stack
- ``gateway``    HTTP completion client and deterministic offline mock
- ``cli``        the ``diaquad`` command
"""

__version__ = "0.1.0"

from .corpus import (
    AspectChain,
    DatasetStats,
    Dialogue,
    Quadruple,
    Utterance,
    Violation,
    agreement,
    load_dataset,
    save_dataset,
    stats,
    validate,
)
from .evaluation import (
    EvalReport,
    PrfScore,
    evaluate,
    evaluate_acr,
    match_sets,
    prf,
    significance,
)
from .gateway import BackendConfig, MockProfile, generate, mock_generate
from .parsing import (
    ParsedAcr,
    ParsedAsu,
    QuadFragment,
    parse_acr_output,
    parse_asu_output,
    render_asu_output,
)
from .prompting import PromptTemplate, build_acr_input, build_asu_input, render_dialogue
from .reward import (
    GenerationResult,
    RewardBreakdown,
    RewardConfig,
    count_repetitions,
    episode_reward,
    normalize,
    trusted_estimation,
    trusted_reflexion,
)
from .rlsim import (
    Scenario,
    TokenBatch,
    ToyPolicy,
    Trajectory,
    cross_entropy,
    default_scenario,
    expected_objective,
    policy_gradient_step,
    simulate,
)

__all__ = [name for name in dir() if not name.startswith("_")]
