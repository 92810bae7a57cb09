from __future__ import annotations

import json
import math
import random

import pytest

from abstain.backends import (
    BackendEndpoint,
    HttpBackend,
    RetryPolicy,
    SamplingParams,
    ScriptedBackend,
    chat_complete,
    embed,
    groundedness_check,
    make_backend,
    message_digest,
    with_retries,
)
from abstain.errors import (
    BackendUnavailableError,
    ConfigurationError,
    DegenerateInputError,
    FixtureMissError,
    InputError,
    ProtocolError,
    RetryableTransportError,
)
from abstain.scorers import cosine


# -- params / endpoint validation ------------------------------------------------


def test_sampling_defaults():
    params = SamplingParams()
    assert params.temperature == 0.1
    assert params.max_new_tokens == 1024
    assert params.top_k_logprobs == 5


def test_want_logprobs_needs_top_k():
    with pytest.raises(InputError):
        SamplingParams(want_logprobs=True, top_k_logprobs=0)


def test_unknown_endpoint_kind_rejected():
    with pytest.raises(ConfigurationError):
        BackendEndpoint(kind="carrier-pigeon")


# -- retry policy -----------------------------------------------------------------


def test_retry_single_success_is_one_attempt():
    outcome = with_retries(lambda: "ok", sleep=lambda _: None)
    assert outcome == ("ok", 1)


def test_retry_counts_attempts_exactly():
    calls = {"n": 0}

    def flaky():
        calls["n"] += 1
        if calls["n"] <= 3:
            raise RetryableTransportError("boom")
        return "fine"

    outcome = with_retries(flaky, sleep=lambda _: None, rng=random.Random(0))
    assert outcome.value == "fine"
    assert outcome.attempts == 4


def test_retry_gives_up_after_ten_attempts():
    calls = {"n": 0}

    def always_down():
        calls["n"] += 1
        raise RetryableTransportError("down")

    with pytest.raises(BackendUnavailableError) as exc_info:
        with_retries(always_down, sleep=lambda _: None, rng=random.Random(0))
    assert calls["n"] == 10  # no attempt 11
    assert exc_info.value.attempts == 10
    assert isinstance(exc_info.value.cause, RetryableTransportError)


def test_retry_does_not_swallow_non_retryable_errors():
    def bad_request():
        raise ProtocolError("HTTP 400")

    with pytest.raises(ProtocolError):
        with_retries(bad_request, sleep=lambda _: None)


def test_backoff_delays_bounded_with_full_jitter():
    policy = RetryPolicy()
    delays: list[float] = []

    def failing():
        raise RetryableTransportError("x")

    with pytest.raises(BackendUnavailableError):
        with_retries(failing, policy, sleep=delays.append, rng=random.Random(7))
    assert len(delays) == 9  # no sleep after the final attempt
    for i, delay in enumerate(delays, start=1):
        assert 0.0 <= delay <= min(30.0, 0.5 * 2 ** (i - 1))


# -- scripted backend ---------------------------------------------------------------


def test_scripted_fixture_echo():
    backend = ScriptedBackend()
    backend.add_chat([("user", "hello")], "Final answer: B")
    completion = chat_complete(backend, [("user", "hello")], SamplingParams())
    assert completion.text == "Final answer: B"
    assert completion.attempts == 1


def test_scripted_miss_fails_loudly():
    backend = ScriptedBackend()
    with pytest.raises(FixtureMissError):
        backend.chat_complete([("user", "never scripted")], SamplingParams())


def test_scripted_logprobs_carry_exactly_top_k():
    backend = ScriptedBackend()
    per_pos = [(t, math.log(0.2)) for t in "ABCDE"]
    backend.add_chat([("user", "q")], "B", logprobs=[per_pos, per_pos])
    completion = backend.chat_complete(
        [("user", "q")], SamplingParams(want_logprobs=True, top_k_logprobs=5)
    )
    assert set(completion.logprob_summary) == {0, 1}
    assert all(len(entries) == 5 for entries in completion.logprob_summary.values())


def test_scripted_logprobs_stripped_when_not_requested():
    backend = ScriptedBackend()
    backend.add_chat([("user", "q")], "B", logprobs=[[("B", -0.1)]])
    completion = backend.chat_complete([("user", "q")], SamplingParams(want_logprobs=False))
    assert completion.logprob_summary is None


def test_scripted_embeddings_are_deterministic():
    backend = ScriptedBackend()
    backend.add_embedding("hello", [1.0, 0.0, 0.0])
    first = embed(backend, "hello")
    second = embed(backend, "hello")
    assert first == second == [1.0, 0.0, 0.0]


def test_orthogonal_fixture_vectors_give_zero_cosine():
    backend = ScriptedBackend()
    backend.add_embedding("q", [1.0, 0.0, 0.0])
    backend.add_embedding("p", [0.0, 1.0, 0.0])
    assert cosine(embed(backend, "q"), embed(backend, "p")) == pytest.approx(0.0)


def test_embedding_dimension_change_is_protocol_error():
    backend = ScriptedBackend()
    backend.add_embedding("a", [1.0, 0.0])
    backend.add_embedding("b", [1.0, 0.0, 0.0])
    embed(backend, "a")
    with pytest.raises(ProtocolError):
        embed(backend, "b")


def test_empty_text_cannot_be_embedded():
    backend = ScriptedBackend()
    with pytest.raises(DegenerateInputError):
        embed(backend, "")


def test_groundedness_fixtures():
    backend = ScriptedBackend()
    backend.add_groundedness("q", "q", risk=False)
    backend.add_groundedness("q", "twisted", risk=True, score=0.9)
    assert groundedness_check(backend, "q", "q") == (False, None)
    assert groundedness_check(backend, "q", "twisted") == (True, 0.9)


def test_scripted_round_trips_through_file(tmp_path):
    backend = ScriptedBackend()
    digest = backend.add_chat([("user", "q")], "A", logprobs=[[("A", -0.5)]])
    backend.add_embedding("q", [0.1, 0.2])
    backend.add_groundedness("q", "p", risk=True)
    path = tmp_path / "fixtures.json"
    backend.to_file(path)

    loaded = ScriptedBackend.from_file(path)
    completion = loaded.chat_complete([("user", "q")], SamplingParams(want_logprobs=True))
    assert completion.text == "A"
    assert completion.logprob_summary == {0: [("A", -0.5)]}
    assert loaded.embed("q") == [0.1, 0.2]
    assert loaded.groundedness_check("q", "p") == (True, None)
    assert message_digest([("user", "q")]) == digest


def test_digest_is_role_sensitive():
    assert message_digest([("user", "x")]) != message_digest([("system", "x")])
    assert message_digest([("user", "ab"), ("user", "c")]) != message_digest(
        [("user", "a"), ("user", "bc")]
    )


def test_scripted_records_calls():
    backend = ScriptedBackend()
    backend.add_chat([("user", "q")], "A")
    backend.chat_complete([("user", "q")], SamplingParams())
    assert backend.calls[0]["kind"] == "chat"
    assert backend.calls[0]["messages"] == [["user", "q"]]


# -- HTTP backend with a stubbed session -----------------------------------------------


class _Response:
    def __init__(self, status_code: int, body: dict | None = None):
        self.status_code = status_code
        self._body = body or {}
        self.text = json.dumps(self._body)

    def json(self):
        return self._body


class _StubSession:
    """Scripted requests.Session: pops one response (or exception) per call."""

    def __init__(self, responses):
        self.responses = list(responses)
        self.requests: list[dict] = []

    def post(self, url, json=None, headers=None, timeout=None):
        self.requests.append({"url": url, "json": json, "headers": headers})
        item = self.responses.pop(0)
        if isinstance(item, Exception):
            raise item
        return item


def _chat_body(text: str, with_logprobs: bool = False) -> dict:
    choice: dict = {"message": {"content": text}, "finish_reason": "stop"}
    if with_logprobs:
        choice["logprobs"] = {
            "content": [
                {
                    "token": "B",
                    "logprob": -0.1,
                    "top_logprobs": [
                        {"token": "B", "logprob": -0.1},
                        {"token": "A", "logprob": -2.5},
                    ],
                }
            ]
        }
    return {"choices": [choice]}


def _http(kind: str, session) -> HttpBackend:
    endpoint = BackendEndpoint(kind=kind, base_url="http://llm.test/v1", model_id="m")
    return HttpBackend(endpoint, session=session, sleep=lambda _: None, rng=random.Random(3))


def test_http_chat_survives_nine_server_errors():
    session = _StubSession([_Response(500)] * 9 + [_Response(200, _chat_body("Final answer: B"))])
    backend = _http("chat", session)
    completion = backend.chat_complete([("user", "q")], SamplingParams())
    assert completion.text == "Final answer: B"
    assert completion.attempts == 10
    assert len(session.requests) == 10


def test_http_chat_ten_failures_is_unavailable():
    session = _StubSession([_Response(503)] * 10)
    backend = _http("chat", session)
    with pytest.raises(BackendUnavailableError) as exc_info:
        backend.chat_complete([("user", "q")], SamplingParams())
    assert exc_info.value.attempts == 10
    assert len(session.requests) == 10  # exactly ten, never eleven


def test_http_client_error_is_not_retried():
    session = _StubSession([_Response(400, {"error": "bad"})])
    backend = _http("chat", session)
    with pytest.raises(ProtocolError):
        backend.chat_complete([("user", "q")], SamplingParams())
    assert len(session.requests) == 1


def test_http_chat_wire_format():
    session = _StubSession([_Response(200, _chat_body("B", with_logprobs=True))])
    backend = _http("chat", session)
    params = SamplingParams(want_logprobs=True, top_k_logprobs=2)
    completion = backend.chat_complete([("system", "s"), ("user", "q")], params, seed=1)

    sent = session.requests[0]
    assert sent["url"] == "http://llm.test/v1/chat/completions"
    assert sent["json"]["model"] == "m"
    assert sent["json"]["messages"] == [
        {"role": "system", "content": "s"},
        {"role": "user", "content": "q"},
    ]
    assert sent["json"]["temperature"] == 0.1
    assert sent["json"]["max_tokens"] == 1024
    assert sent["json"]["logprobs"] is True
    assert sent["json"]["top_logprobs"] == 2
    assert sent["json"]["seed"] == 1
    assert completion.logprob_summary == {0: [("B", -0.1), ("A", -2.5)]}


def test_http_auth_header_comes_from_env(monkeypatch):
    monkeypatch.setenv("TEST_LLM_KEY", "sekrit")
    session = _StubSession([_Response(200, _chat_body("A"))])
    endpoint = BackendEndpoint(
        kind="chat", base_url="http://llm.test/v1", model_id="m", auth_env="TEST_LLM_KEY"
    )
    backend = HttpBackend(endpoint, session=session, sleep=lambda _: None)
    backend.chat_complete([("user", "q")], SamplingParams())
    assert session.requests[0]["headers"]["Authorization"] == "Bearer sekrit"


def test_http_embedding_parses_and_checks_dimension():
    session = _StubSession(
        [
            _Response(200, {"data": [{"embedding": [0.1, 0.2]}]}),
            _Response(200, {"data": [{"embedding": [0.1, 0.2, 0.3]}]}),
        ]
    )
    backend = _http("embedding", session)
    assert backend.embed("a") == [0.1, 0.2]
    with pytest.raises(ProtocolError):
        backend.embed("b")


def test_http_groundedness_parses_and_validates():
    session = _StubSession(
        [
            _Response(200, {"risk": "yes", "score": 0.87}),
            _Response(200, {"risk": "maybe"}),
        ]
    )
    backend = _http("groundedness", session)
    assert backend.groundedness_check("ctx", "claim") == (True, 0.87)
    with pytest.raises(ProtocolError):
        backend.groundedness_check("ctx", "claim")


def test_malformed_chat_response_is_protocol_error():
    session = _StubSession([_Response(200, {"unexpected": True})])
    backend = _http("chat", session)
    with pytest.raises(ProtocolError):
        backend.chat_complete([("user", "q")], SamplingParams())


def test_kind_mismatch_is_configuration_error():
    backend = _http("embedding", _StubSession([]))
    with pytest.raises(ConfigurationError):
        chat_complete(backend, [("user", "q")], SamplingParams())
    chat = _http("chat", _StubSession([]))
    with pytest.raises(ConfigurationError):
        embed(chat, "q")
    with pytest.raises(ConfigurationError):
        groundedness_check(chat, "a", "b")


def test_inflight_limiter_bounds_concurrency():
    import threading
    import time
    from concurrent.futures import ThreadPoolExecutor

    lock = threading.Lock()
    state = {"current": 0, "peak": 0}

    class _SlowSession:
        def post(self, url, json=None, headers=None, timeout=None):
            with lock:
                state["current"] += 1
                state["peak"] = max(state["peak"], state["current"])
            time.sleep(0.02)
            with lock:
                state["current"] -= 1
            return _Response(200, {"data": [{"embedding": [1.0, 0.0]}]})

    endpoint = BackendEndpoint(kind="embedding", base_url="http://llm.test/v1", model_id="m")
    backend = HttpBackend(endpoint, session=_SlowSession(), sleep=lambda _: None, max_inflight=2)
    with ThreadPoolExecutor(max_workers=8) as pool:
        list(pool.map(lambda i: backend.embed(f"text {i % 2}"), range(8)))
    assert state["peak"] <= 2


def test_make_backend_dispatches_on_kind(tmp_path):
    fixtures = tmp_path / "f.json"
    ScriptedBackend().to_file(fixtures)
    scripted = make_backend(BackendEndpoint(kind="scripted", base_url=str(fixtures)))
    assert isinstance(scripted, ScriptedBackend)
    http = make_backend(BackendEndpoint(kind="chat", base_url="http://x", model_id="m"))
    assert isinstance(http, HttpBackend)
