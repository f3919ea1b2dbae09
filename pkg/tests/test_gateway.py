import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from diaquad.gateway import (
    AuthError,
    BackendConfig,
    BackendResponseError,
    GatewayError,
    MissingScoresError,
    MockProfile,
    generate,
    generate_many,
    mock_generate,
    result_from_payload,
)
from diaquad.parsing import parse_asu_output
from diaquad.prompting import build_acr_input, build_asu_input
from diaquad.reward import count_repetitions, episode_reward
from diaquad.evaluation import quad_item


class StubServer:
    """Local completion endpoint with a scripted queue of responses."""

    def __init__(self):
        self.requests: list[dict] = []
        self.script: list[tuple[int, dict | None]] = []
        server = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length)) if length else {}
                server.requests.append({"body": body,
                                        "auth": self.headers.get("Authorization")})
                status, payload = (server.script.pop(0) if server.script
                                   else (200, server.default_payload(body)))
                data = json.dumps(payload or {}).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self.thread.start()

    @staticmethod
    def default_payload(body):
        prompt = body.get("prompt", "")
        return {"choices": [{"text": f"echo:{prompt}:{i}", "scores": [-0.5, -1.5]}
                            for i in range(body.get("n", 2))]}

    @property
    def endpoint(self) -> str:
        return f"http://127.0.0.1:{self.httpd.server_port}/complete"

    def close(self):
        self.httpd.shutdown()
        self.httpd.server_close()


@pytest.fixture
def stub():
    server = StubServer()
    yield server
    server.close()


def _config(stub, **kwargs) -> BackendConfig:
    defaults = dict(endpoint=stub.endpoint, n_candidates=2, timeout=5.0,
                    max_retries=2, backoff_base=0.01)
    defaults.update(kwargs)
    return BackendConfig(**defaults)


def test_config_validation():
    with pytest.raises(ValueError):
        BackendConfig(endpoint="http://x", n_candidates=1)
    with pytest.raises(ValueError):
        BackendConfig(endpoint="http://x", timeout=0)


def test_generate_native_shape(stub):
    stub.script.append((200, {"choices": [
        {"text": "first", "scores": [-1.2, -3.4]},
        {"text": "second", "scores": [-1.2, -3.4]},
    ]}))
    result = generate("hello", _config(stub))
    assert result.outputs == ("first", "second")
    assert result.scores == ((-1.2, -3.4), (-1.2, -3.4))
    assert result.meta["endpoint"] == stub.endpoint
    assert stub.requests[0]["body"] == {"model": "default", "prompt": "hello",
                                        "n": 2, "return_scores": True}


def test_generate_per_candidate_scalar_scores_are_shared(stub):
    stub.script.append((200, {"choices": [
        {"text": "a", "score": -1.2},
        {"text": "b", "score": -3.4},
    ]}))
    result = generate("x", _config(stub))
    assert result.scores == ((-1.2, -3.4), (-1.2, -3.4))


def test_generate_token_logprob_adapter(stub):
    stub.script.append((200, {"choices": [
        {"text": "a", "logprobs": {"token_logprobs": [-0.1, -0.2, -0.3]}},
        {"text": "b", "logprobs": {"token_logprobs": [-0.4, -0.5]}},
    ]}))
    result = generate("x", _config(stub))
    assert result.scores[0] == (-0.1, -0.2, -0.3)
    assert result.scores[1] == (-0.4, -0.5)


def test_generate_missing_scores_is_hard_error(stub):
    stub.script.append((200, {"choices": [{"text": "a"}, {"text": "b"}]}))
    with pytest.raises(MissingScoresError):
        generate("x", _config(stub))


def test_generate_retries_on_server_error_with_identical_body(stub):
    stub.script.append((500, {"error": "boom"}))
    stub.script.append((200, {"choices": [
        {"text": "ok", "scores": [0.0, -1.0]}, {"text": "ok2", "scores": [0.0, -1.0]}]}))
    result = generate("retry me", _config(stub))
    assert result.outputs[0] == "ok"
    assert len(stub.requests) == 2
    assert stub.requests[0]["body"] == stub.requests[1]["body"]


def test_generate_gives_up_after_retries(stub):
    stub.script.extend([(500, {}), (500, {}), (500, {})])
    with pytest.raises(GatewayError):
        generate("x", _config(stub, max_retries=2))
    assert len(stub.requests) == 3


def test_generate_client_error_is_immediate(stub):
    stub.script.append((404, {"error": "nope"}))
    with pytest.raises(BackendResponseError):
        generate("x", _config(stub))
    assert len(stub.requests) == 1


def test_generate_auth_from_environment(stub, monkeypatch):
    monkeypatch.setenv("ASU_API_KEY", "sekrit")
    generate("x", _config(stub, auth="ASU_API_KEY"))
    assert stub.requests[0]["auth"] == "Bearer sekrit"


def test_generate_missing_auth_env(stub, monkeypatch):
    monkeypatch.delenv("ASU_API_KEY", raising=False)
    with pytest.raises(AuthError) as err:
        generate("x", _config(stub, auth="ASU_API_KEY"))
    assert "ASU_API_KEY" in str(err.value)
    assert not stub.requests  # no request went out


def test_generate_many_preserves_order(stub):
    prompts = [f"p{i}" for i in range(8)]
    results = generate_many(prompts, _config(stub, max_concurrency=4))
    assert [r.outputs[0] for r in results] == [f"echo:p{i}:0" for i in range(8)]


def test_result_from_payload_rejects_empty():
    with pytest.raises(BackendResponseError):
        result_from_payload({})
    with pytest.raises(BackendResponseError):
        result_from_payload({"choices": []})


def test_chat_shape_content_and_logprobs():
    payload = {"choices": [
        {"message": {"content": "hi"},
         "logprobs": {"content": [{"logprob": -0.1}, {"logprob": -0.9}]}},
        {"message": {"content": "yo"},
         "logprobs": {"content": [{"logprob": -0.2}, {"logprob": -0.8}]}},
    ]}
    result = result_from_payload(payload)
    assert result.outputs == ("hi", "yo")
    assert result.scores[0] == (-0.1, -0.9)


# -- offline mock --


def test_mock_is_deterministic(tiny_dialogue):
    profile = MockProfile(behavior="faithful", dialogues=(tiny_dialogue,))
    prompt = build_asu_input(tiny_dialogue)
    assert mock_generate(prompt, profile, seed=3) == mock_generate(prompt, profile, seed=3)
    assert mock_generate(prompt, profile, seed=3) != mock_generate(prompt, profile, seed=4)


def test_mock_faithful_round_trips(tiny_dialogue):
    profile = MockProfile(behavior="faithful", dialogues=(tiny_dialogue,))
    result = mock_generate(build_asu_input(tiny_dialogue), profile, seed=0)
    parsed = parse_asu_output(result.outputs[0])
    assert [quad_item(q) for q in parsed.quadruples] == \
        [quad_item(q) for q in tiny_dialogue.quadruples]
    assert count_repetitions(result.outputs) == 0


def test_mock_detects_acr_task(tiny_dialogue):
    profile = MockProfile(behavior="faithful", dialogues=(tiny_dialogue,))
    result = mock_generate(build_acr_input(tiny_dialogue, "Blue Harbor"), profile, seed=0)
    assert result.meta["task"] == "acr"
    assert result.outputs[0] == "[2, 0, 1, 0]"


def test_mock_repetitive_counts(tiny_dialogue):
    profile = MockProfile(behavior="repetitive", dialogues=(tiny_dialogue,), n_outputs=3)
    result = mock_generate(build_asu_input(tiny_dialogue), profile, seed=0)
    assert count_repetitions(result.outputs) == 2


def test_mock_gibberish_reward_is_finite(tiny_dialogue):
    profile = MockProfile(behavior="gibberish", n_outputs=3)
    asu = mock_generate(build_asu_input(tiny_dialogue), profile, seed=0)
    acr = mock_generate(build_acr_input(tiny_dialogue, "Blue Harbor"), profile, seed=1)
    assert parse_asu_output(asu.outputs[0]).quadruples == ()
    breakdown = episode_reward(asu, acr, tiny_dialogue)
    assert breakdown.r_rp == 0.0
    assert breakdown.total == breakdown.total  # finite, not NaN


def test_mock_noisy_is_wrong_but_parseable(tiny_dialogue):
    profile = MockProfile(behavior="noisy", dialogues=(tiny_dialogue,), n_outputs=3)
    result = mock_generate(build_asu_input(tiny_dialogue), profile, seed=0)
    parsed = parse_asu_output(result.outputs[0])
    assert parsed.quadruples
    assert [quad_item(q) for q in parsed.quadruples] != \
        [quad_item(q) for q in tiny_dialogue.quadruples]


def test_mock_unknown_prompt_rejected(tiny_dialogue):
    profile = MockProfile(behavior="faithful", dialogues=(tiny_dialogue,))
    with pytest.raises(ValueError):
        mock_generate("a prompt about nothing", profile, seed=0)


def test_mock_profile_validation():
    with pytest.raises(ValueError):
        MockProfile(behavior="chaotic")
    with pytest.raises(ValueError):
        MockProfile(behavior="faithful", n_scores=1)
