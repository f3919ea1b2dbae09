"""Clients that turn prompts into GenerationResults.

``generate`` talks JSON-over-HTTP to any completion endpoint that returns
candidate texts with score information; ``mock_generate`` is a deterministic
offline stand-in used by the test suite and the CLI's offline mode.

Wire protocol (native shape):
    request  {"model": ..., "prompt": ..., "n": ..., "return_scores": true}
    response {"choices": [{"text": ..., "scores": [...]}, ...]}

A thin adapter also accepts per-choice token logprobs or per-candidate
scalar sequence scores (the scalars of all candidates are then shared as
each output's score list). Responses carrying no score information are a
hard error: the reward stack cannot run without scores.
"""

from __future__ import annotations

import hashlib
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
import requests

from .corpus import Dialogue, normalize_span
from .parsing import render_asu_output
from .prompting import render_dialogue
from .reward import GenerationResult


class GatewayError(RuntimeError):
    pass


class AuthError(GatewayError):
    pass


class MissingScoresError(GatewayError):
    pass


class BackendResponseError(GatewayError):
    pass


@dataclass(frozen=True)
class BackendConfig:
    endpoint: str
    model: str = "default"
    auth: str | None = None  # name of the environment variable holding the key
    n_candidates: int = 4
    timeout: float = 30.0
    max_retries: int = 3
    backoff_base: float = 0.5
    max_concurrency: int = 4

    def __post_init__(self):
        if self.n_candidates < 2:
            raise ValueError("n_candidates must be >= 2 (the reward stack "
                             "needs a score spread)")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")


def _resolve_auth(config: BackendConfig) -> dict[str, str]:
    if config.auth is None:
        return {}
    key = os.environ.get(config.auth)
    if not key:
        raise AuthError(f"environment variable {config.auth!r} is not set")
    return {"Authorization": f"Bearer {key}"}


def _choice_text(choice: dict) -> str:
    if "text" in choice:
        return str(choice["text"])
    message = choice.get("message")
    if isinstance(message, dict) and "content" in message:
        return str(message["content"])
    raise BackendResponseError(f"choice has no text field: {sorted(choice)}")


def _choice_scores(choice: dict) -> list[float] | None:
    scores = choice.get("scores")
    if isinstance(scores, list) and len(scores) >= 2:
        return [float(v) for v in scores]
    logprobs = choice.get("logprobs")
    if isinstance(logprobs, dict):
        tokens = logprobs.get("token_logprobs")
        if isinstance(tokens, list) and len(tokens) >= 2:
            return [float(v) for v in tokens if v is not None]
        content = logprobs.get("content")
        if isinstance(content, list) and len(content) >= 2:
            return [float(t["logprob"]) for t in content if "logprob" in t]
    return None


def _choice_scalar(choice: dict) -> float | None:
    for key in ("score", "sequence_score", "cumulative_logprob"):
        if isinstance(choice.get(key), (int, float)):
            return float(choice[key])
    return None


def result_from_payload(payload: dict, meta: dict | None = None) -> GenerationResult:
    """Map a backend response onto a GenerationResult; scores are never invented."""
    choices = payload.get("choices")
    if not isinstance(choices, list) or not choices:
        raise BackendResponseError("response has no 'choices' list")
    outputs = [_choice_text(c) for c in choices]
    per_choice = [_choice_scores(c) for c in choices]
    if all(s is not None for s in per_choice):
        scores = per_choice
    else:
        scalars = [_choice_scalar(c) for c in choices]
        if any(s is None for s in scalars) or len(scalars) < 2:
            raise MissingScoresError(
                "backend response lacks score information: expected per-choice "
                "'scores', token logprobs, or per-candidate sequence scores")
        scores = [list(map(float, scalars))] * len(outputs)
    return GenerationResult(outputs=tuple(outputs),
                            scores=tuple(tuple(s) for s in scores),
                            meta=meta or {})


def generate(prompt: str, config: BackendConfig,
             session: requests.Session | None = None) -> GenerationResult:
    """Request ``n_candidates`` scored completions, retrying transient failures.

    Every attempt sends the identical request body. Connection errors,
    timeouts and 5xx responses are retried up to ``max_retries`` times with
    exponential backoff; anything else fails immediately.
    """
    headers = {"Content-Type": "application/json", **_resolve_auth(config)}
    body = {"model": config.model, "prompt": prompt,
            "n": config.n_candidates, "return_scores": True}
    http = session or requests
    last_error: Exception | None = None
    start = time.monotonic()
    for attempt in range(config.max_retries + 1):
        if attempt:
            time.sleep(config.backoff_base * 2 ** (attempt - 1))
        try:
            resp = http.post(config.endpoint, json=body, headers=headers,
                             timeout=config.timeout)
        except (requests.ConnectionError, requests.Timeout) as e:
            last_error = e
            continue
        if resp.status_code >= 500:
            last_error = BackendResponseError(f"server error {resp.status_code}")
            continue
        if resp.status_code != 200:
            raise BackendResponseError(f"backend returned {resp.status_code}: "
                                       f"{resp.text[:200]}")
        try:
            payload = resp.json()
        except ValueError as e:
            raise BackendResponseError(f"response is not JSON: {e}") from e
        meta = {"backend": config.model, "endpoint": config.endpoint,
                "latency_s": time.monotonic() - start}
        return result_from_payload(payload, meta)
    raise GatewayError(f"request failed after {config.max_retries + 1} attempts: "
                       f"{last_error}")


def generate_many(prompts: Sequence[str], config: BackendConfig) -> list[GenerationResult]:
    """Concurrent ``generate`` over prompts; results come back in input order."""
    session = requests.Session()
    with ThreadPoolExecutor(max_workers=config.max_concurrency) as pool:
        return list(pool.map(lambda p: generate(p, config, session=session), prompts))


# -- deterministic offline mock --

BEHAVIORS = ("faithful", "noisy", "repetitive", "gibberish")

_GIBBERISH_WORDS = ("lorem", "vortex", "banana", "quasar", "noodle", "zigzag",
                    "pickle", "nimbus", "waffle", "sprocket")


@dataclass(frozen=True)
class MockProfile:
    """Behavior profile for the offline mock backend.

    ``dialogues`` supplies the gold annotations; each prompt is resolved to
    its dialogue by locating the rendered dialogue text inside the prompt
    (prompts built by this package always embed it verbatim).
    """

    behavior: str
    dialogues: tuple[Dialogue, ...] = ()
    n_outputs: int = 4
    n_scores: int = 4

    def __post_init__(self):
        object.__setattr__(self, "dialogues", tuple(self.dialogues))
        if self.behavior not in BEHAVIORS:
            raise ValueError(f"behavior must be one of {BEHAVIORS}, got {self.behavior!r}")
        if self.n_outputs < 1 or self.n_scores < 2:
            raise ValueError("need n_outputs >= 1 and n_scores >= 2")


def _match_prompt(prompt: str, dialogues: Sequence[Dialogue]):
    """Return (dialogue, task, explicit) for the dialogue embedded in prompt."""
    for d in dialogues:
        rendered = render_dialogue(d)
        idx = prompt.find(rendered)
        if idx < 0:
            continue
        head = prompt[:idx]
        for chain in d.aspect_chains:
            if chain.explicit and chain.explicit in head:
                return d, "acr", chain.explicit
        return d, "asu", None
    return None, None, None


def _rng_for(prompt: str, behavior: str, seed: int) -> np.random.Generator:
    digest = hashlib.sha256(f"{seed}\x00{behavior}\x00{prompt}".encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "big"))


def _gold_asu_text(d: Dialogue) -> str:
    if not d.quadruples:
        return "No opinions."
    return " ".join(render_asu_output(q) for q in d.quadruples)


def _gold_acr_text(d: Dialogue, explicit: str) -> str:
    for chain in d.aspect_chains:
        if normalize_span(chain.explicit) == normalize_span(explicit):
            return "[" + ", ".join(str(v) for v in chain.labels) + "]"
    raise ValueError(f"no chain anchored at {explicit!r}")


def _perturb_asu(d: Dialogue, variant: int) -> str:
    """Deterministically distinct wrong answer number ``variant``."""
    if not d.quadruples:
        return f"No opinions, variant {variant}."
    pieces = []
    for q in d.quadruples:
        mode = variant % 3
        if mode == 0:
            flipped = {"POS": "NEG", "NEG": "POS", "NEU": "POS"}[q.polarity]
            q = replace(q, polarity=flipped)
        elif mode == 1:
            q = replace(q, implicit=None, implicit_utt=None)
        else:
            q = replace(q, opinion=q.opinion + " indeed")
        if variant >= 3:
            q = replace(q, opinion=f"{q.opinion} v{variant}")
        pieces.append(render_asu_output(q))
    return " ".join(pieces)


def _perturb_acr(d: Dialogue, explicit: str, variant: int) -> str:
    labels = None
    for chain in d.aspect_chains:
        if normalize_span(chain.explicit) == normalize_span(explicit):
            labels = list(chain.labels)
    if labels is None:
        labels = [0] * len(d.utterances)
    pos = variant % len(labels)
    labels[pos] = (labels[pos] + 1 + variant // len(labels)) % 3
    return "[" + ", ".join(str(v) for v in labels) + "]"


def _gibberish(rng: np.random.Generator) -> str:
    words = rng.choice(_GIBBERISH_WORDS, size=int(rng.integers(3, 8)))
    return " ".join(str(w) for w in words)


def mock_generate(prompt: str, profile: MockProfile, seed: int = 0) -> GenerationResult:
    """Deterministic canned generation for (prompt, behavior, seed).

    faithful:   the first output renders the gold answer, alternates are
                distinct perturbations; scores have a wide spread.
    noisy:      every output is a perturbation; scores have a narrow spread.
    repetitive: all outputs are the same gold answer text.
    gibberish:  unparseable word soup with near-tied scores.
    """
    rng = _rng_for(prompt, profile.behavior, seed)
    dialogue, task, explicit = _match_prompt(prompt, profile.dialogues)
    if profile.behavior != "gibberish" and dialogue is None:
        raise ValueError("prompt does not embed any dialogue known to the profile")

    def gold_text() -> str:
        return (_gold_acr_text(dialogue, explicit) if task == "acr"
                else _gold_asu_text(dialogue))

    def wrong_text(variant: int) -> str:
        return (_perturb_acr(dialogue, explicit or "", variant) if task == "acr"
                else _perturb_asu(dialogue, variant))

    m = profile.n_outputs
    if profile.behavior == "faithful":
        outputs = [gold_text()] + [wrong_text(i) for i in range(m - 1)]
        spread = 4.0
    elif profile.behavior == "noisy":
        outputs = [wrong_text(i) for i in range(m)]
        spread = 0.8
    elif profile.behavior == "repetitive":
        outputs = [gold_text()] * m
        spread = 0.8
    else:
        outputs = [_gibberish(rng) for _ in range(m)]
        spread = 0.1

    base = float(rng.uniform(-1.0, 0.0))
    steps = np.linspace(0.0, -spread, profile.n_scores)
    jitter = rng.uniform(-0.01, 0.01, size=profile.n_scores)
    score_list = tuple(float(base + s + j) for s, j in zip(steps, jitter))
    meta = {"backend": "mock", "behavior": profile.behavior, "latency_s": 0.0}
    if dialogue is not None:
        meta["dialogue_id"] = dialogue.dialogue_id
        meta["task"] = task
        if explicit is not None:
            meta["explicit"] = explicit
    return GenerationResult(outputs=tuple(outputs),
                            scores=(score_list,) * len(outputs), meta=meta)
