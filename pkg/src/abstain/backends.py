"""Uniform client layer over three endpoint kinds plus a scripted test double.

Endpoint kinds: "chat" (chat completion), "embedding" (text embedding),
"groundedness" (context/claim risk check), "scripted" (deterministic
fixtures, no network I/O ever).  All HTTP requests share one retry policy:
exponential backoff with full jitter, at most 10 attempts, retrying only
transport failures and 5xx responses.

Wire formats
    chat         POST {base}/chat/completions
                 {model, messages:[{role,content}], temperature, max_tokens,
                  logprobs?, top_logprobs?, seed?, reasoning_effort?}
                 -> choices[0].message.content (+ per-token top-k logprobs)
    embedding    POST {base}/embeddings   {model, input} -> data[0].embedding
    groundedness POST {base}              {context, claim} -> {risk:"yes"|"no", score?}

Scripted fixture files are JSON: {"chat": {digest: response}, "embedding":
{text: vector}, "groundedness": {digest: response}} where chat/groundedness
keys are sha256 digests of the role-tagged request (see message_digest).
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, NamedTuple, Sequence

import requests

from .core import LogprobSummary
from .errors import (
    BackendUnavailableError,
    ConfigurationError,
    DegenerateInputError,
    FixtureMissError,
    InputError,
    ProtocolError,
    RetryableTransportError,
    SchemaError,
)

ENDPOINT_KINDS = ("chat", "embedding", "groundedness", "scripted")

Message = tuple[str, str]  # (role, content)

# Documented defaults only; the engine is model-agnostic.
DEFAULT_EMBEDDING_MODEL = "all-MiniLM-L6-v2"
DEFAULT_GUARD_MODEL = "granite-guardian-3.3-8b"


@dataclass(frozen=True)
class SamplingParams:
    temperature: float = 0.1
    max_new_tokens: int = 1024
    want_logprobs: bool = False
    top_k_logprobs: int = 5
    reasoning_effort: str | None = None

    def __post_init__(self):
        if self.temperature < 0:
            raise InputError("temperature must be >= 0")
        if self.max_new_tokens <= 0:
            raise InputError("max_new_tokens must be positive")
        if self.want_logprobs and self.top_k_logprobs < 1:
            raise InputError("want_logprobs requires top_k_logprobs >= 1")
        if self.reasoning_effort not in (None, "low", "medium", "high"):
            raise InputError(f"unknown reasoning_effort {self.reasoning_effort!r}")


@dataclass(frozen=True)
class BackendEndpoint:
    kind: str
    base_url: str = ""  # URL for HTTP kinds, fixture path for scripted
    model_id: str = ""
    auth_env: str | None = None  # env var naming the bearer secret; never logged
    timeout_ms: int = 60_000

    def __post_init__(self):
        if self.kind not in ENDPOINT_KINDS:
            raise ConfigurationError(f"unknown endpoint kind {self.kind!r}")
        if self.timeout_ms <= 0:
            raise ConfigurationError("timeout_ms must be positive")


@dataclass(frozen=True)
class Completion:
    text: str
    logprob_summary: LogprobSummary | None = None
    finish_reason: str = "stop"
    attempts: int = 1  # observable retry metadata


@dataclass(frozen=True)
class RetryPolicy:
    """Exponential backoff with full jitter; at most ``max_attempts`` total."""

    max_attempts: int = 10
    base_delay_s: float = 0.5
    factor: float = 2.0
    max_delay_s: float = 30.0

    def backoff(self, failed_attempts: int, rng: random.Random) -> float:
        cap = min(self.max_delay_s, self.base_delay_s * self.factor ** (failed_attempts - 1))
        return rng.uniform(0.0, cap)


class RetryOutcome(NamedTuple):
    value: object
    attempts: int


def with_retries(
    action: Callable[[], object],
    policy: RetryPolicy = RetryPolicy(),
    sleep: Callable[[float], None] = time.sleep,
    rng: random.Random | None = None,
) -> RetryOutcome:
    """Run ``action`` until it succeeds or the attempt budget is spent.

    Only RetryableTransportError is retried; anything else propagates at
    once.  The action must be idempotent at the application level.
    """
    rng = rng if rng is not None else random.Random()
    last: Exception | None = None
    for attempt in range(1, policy.max_attempts + 1):
        try:
            return RetryOutcome(action(), attempt)
        except RetryableTransportError as exc:
            last = exc
            if attempt < policy.max_attempts:
                sleep(policy.backoff(attempt, rng))
    raise BackendUnavailableError(
        f"backend unavailable after {policy.max_attempts} attempts: {last}",
        attempts=policy.max_attempts,
        cause=last,
    )


def message_digest(messages: Sequence[Message]) -> str:
    """Stable sha256 over the role-tagged message concatenation."""
    joined = "\x1e".join(f"{role}\x1f{content}" for role, content in messages)
    return hashlib.sha256(joined.encode("utf-8")).hexdigest()


def _pair_digest(context: str, claim: str) -> str:
    return message_digest((("context", context), ("claim", claim)))


class ScriptedBackend:
    """Deterministic fixture-driven stand-in for all three endpoint kinds.

    Behaviour is a pure function of (fixture set, request digest); unknown
    requests raise FixtureMissError because a miss is a test bug.  Every
    served request is appended to ``calls`` so tests can inspect payloads.
    """

    kind = "scripted"

    def __init__(self, endpoint: BackendEndpoint | None = None):
        self.endpoint = endpoint or BackendEndpoint(kind="scripted")
        self._chat: dict[str, dict] = {}
        self._embeddings: dict[str, list[float]] = {}
        self._ground: dict[str, dict] = {}
        self._embedding_dim: int | None = None
        self.calls: list[dict] = []

    # -- fixture construction -------------------------------------------------

    def add_chat(
        self,
        messages: Sequence[Message],
        text: str,
        logprobs: Sequence[Sequence[tuple[str, float]]] | None = None,
        finish_reason: str = "stop",
        delay_s: float = 0.0,
    ) -> str:
        digest = message_digest(messages)
        entry: dict = {"text": text, "finish_reason": finish_reason}
        if logprobs is not None:
            entry["logprobs"] = [[list(pair) for pair in pos] for pos in logprobs]
        if delay_s:
            entry["delay_s"] = delay_s
        self._chat[digest] = entry
        return digest

    def add_embedding(self, text: str, vector: Sequence[float]) -> None:
        self._embeddings[text] = [float(v) for v in vector]

    def add_groundedness(
        self, context: str, claim: str, risk: bool, score: float | None = None
    ) -> str:
        digest = _pair_digest(context, claim)
        self._ground[digest] = {"risk": "yes" if risk else "no", "score": score}
        return digest

    # -- the three operations --------------------------------------------------

    def chat_complete(
        self, messages: Sequence[Message], params: SamplingParams, seed: int | None = None
    ) -> Completion:
        digest = message_digest(messages)
        self.calls.append({"kind": "chat", "messages": [list(m) for m in messages], "seed": seed})
        entry = self._chat.get(digest)
        if entry is None:
            tail = messages[-1][1][:120] if messages else ""
            raise FixtureMissError(
                f"no chat fixture for digest {digest[:12]}... (last message: {tail!r})"
            )
        if entry.get("delay_s"):
            time.sleep(entry["delay_s"])
        summary: LogprobSummary | None = None
        if params.want_logprobs and entry.get("logprobs") is not None:
            summary = {
                pos: [(tok, float(lp)) for tok, lp in entries]
                for pos, entries in enumerate(entry["logprobs"])
            }
        return Completion(
            text=entry["text"],
            logprob_summary=summary,
            finish_reason=entry.get("finish_reason", "stop"),
        )

    def embed(self, text: str) -> list[float]:
        if not text:
            raise DegenerateInputError("cannot embed empty text")
        self.calls.append({"kind": "embedding", "text": text})
        vector = self._embeddings.get(text)
        if vector is None:
            raise FixtureMissError(f"no embedding fixture for text {text[:80]!r}")
        if self._embedding_dim is None:
            self._embedding_dim = len(vector)
        elif len(vector) != self._embedding_dim:
            raise ProtocolError(
                f"embedding dimension changed: {len(vector)} != {self._embedding_dim}"
            )
        return list(vector)

    def groundedness_check(self, context: str, claim: str) -> tuple[bool, float | None]:
        self.calls.append({"kind": "groundedness", "context": context, "claim": claim})
        entry = self._ground.get(_pair_digest(context, claim))
        if entry is None:
            raise FixtureMissError(
                f"no groundedness fixture for context {context[:60]!r} / claim {claim[:60]!r}"
            )
        risk = entry.get("risk")
        if risk not in ("yes", "no"):
            raise ProtocolError(f"groundedness fixture risk must be yes/no, got {risk!r}")
        score = entry.get("score")
        return risk == "yes", (float(score) if score is not None else None)

    # -- persistence -----------------------------------------------------------

    def to_file(self, path: str | Path) -> None:
        doc = {
            "version": 1,
            "chat": self._chat,
            "embedding": self._embeddings,
            "groundedness": self._ground,
        }
        Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True))

    @classmethod
    def from_file(cls, path: str | Path, endpoint: BackendEndpoint | None = None) -> "ScriptedBackend":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise SchemaError(f"cannot load fixture file {path}: {exc}") from exc
        backend = cls(endpoint)
        backend._chat = dict(doc.get("chat", {}))
        backend._embeddings = {k: [float(v) for v in vec] for k, vec in doc.get("embedding", {}).items()}
        backend._ground = dict(doc.get("groundedness", {}))
        return backend


class HttpBackend:
    """requests-based client for one HTTP endpoint.

    Shareable across threads: each call is independent and a bounded
    semaphore caps in-flight requests per endpoint (default 8).
    """

    def __init__(
        self,
        endpoint: BackendEndpoint,
        session: requests.Session | None = None,
        retry: RetryPolicy = RetryPolicy(),
        sleep: Callable[[float], None] = time.sleep,
        rng: random.Random | None = None,
        max_inflight: int = 8,
    ):
        if endpoint.kind == "scripted":
            raise ConfigurationError("scripted endpoints are served by ScriptedBackend")
        self.endpoint = endpoint
        self.kind = endpoint.kind
        self._session = session or requests.Session()
        self._retry = retry
        self._sleep = sleep
        self._rng = rng
        self._limiter = threading.BoundedSemaphore(max_inflight)
        self._embedding_dim: int | None = None

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.endpoint.auth_env:
            secret = os.environ.get(self.endpoint.auth_env, "")
            if secret:
                headers["Authorization"] = f"Bearer {secret}"
        return headers

    def _post(self, url: str, payload: dict) -> tuple[dict, int]:
        timeout = self.endpoint.timeout_ms / 1000.0

        def attempt() -> dict:
            with self._limiter:
                try:
                    resp = self._session.post(
                        url, json=payload, headers=self._headers(), timeout=timeout
                    )
                except requests.RequestException as exc:
                    raise RetryableTransportError(f"transport failure: {exc}") from exc
            if resp.status_code >= 500:
                raise RetryableTransportError(f"server error HTTP {resp.status_code}")
            if resp.status_code >= 400:
                raise ProtocolError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                return resp.json()
            except ValueError as exc:
                raise ProtocolError(f"non-JSON response: {exc}") from exc

        outcome = with_retries(attempt, self._retry, self._sleep, self._rng)
        return outcome.value, outcome.attempts

    # -- chat -------------------------------------------------------------------

    def chat_complete(
        self, messages: Sequence[Message], params: SamplingParams, seed: int | None = None
    ) -> Completion:
        if self.kind != "chat":
            raise ConfigurationError(f"{self.kind} endpoint cannot serve chat completions")
        payload: dict = {
            "model": self.endpoint.model_id,
            "messages": [{"role": r, "content": c} for r, c in messages],
            "temperature": params.temperature,
            "max_tokens": params.max_new_tokens,
        }
        if params.want_logprobs:
            payload["logprobs"] = True
            payload["top_logprobs"] = params.top_k_logprobs
        if params.reasoning_effort:
            payload["reasoning_effort"] = params.reasoning_effort
        if seed is not None:
            payload["seed"] = seed
        body, attempts = self._post(self.endpoint.base_url.rstrip("/") + "/chat/completions", payload)
        try:
            choice = body["choices"][0]
            text = choice["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProtocolError(f"malformed chat response: {exc}") from exc
        summary = _extract_logprobs(choice) if params.want_logprobs else None
        finish = choice.get("finish_reason")
        if finish not in ("stop", "length"):
            finish = "stop" if text else "error"
        return Completion(text=text or "", logprob_summary=summary, finish_reason=finish, attempts=attempts)

    # -- embedding ----------------------------------------------------------------

    def embed(self, text: str) -> list[float]:
        if self.kind != "embedding":
            raise ConfigurationError(f"{self.kind} endpoint cannot serve embeddings")
        if not text:
            raise DegenerateInputError("cannot embed empty text")
        payload = {"model": self.endpoint.model_id, "input": text}
        body, _ = self._post(self.endpoint.base_url.rstrip("/") + "/embeddings", payload)
        try:
            vector = [float(v) for v in body["data"][0]["embedding"]]
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed embedding response: {exc}") from exc
        if self._embedding_dim is None:
            self._embedding_dim = len(vector)
        elif len(vector) != self._embedding_dim:
            raise ProtocolError(
                f"embedding dimension changed: {len(vector)} != {self._embedding_dim}"
            )
        return vector

    # -- groundedness ---------------------------------------------------------------

    def groundedness_check(self, context: str, claim: str) -> tuple[bool, float | None]:
        if self.kind != "groundedness":
            raise ConfigurationError(f"{self.kind} endpoint cannot serve groundedness checks")
        body, _ = self._post(self.endpoint.base_url, {"context": context, "claim": claim})
        risk = body.get("risk")
        if risk not in ("yes", "no"):
            raise ProtocolError(f"groundedness response risk must be yes/no, got {risk!r}")
        score = body.get("score")
        return risk == "yes", (float(score) if score is not None else None)


Backend = ScriptedBackend | HttpBackend


def _extract_logprobs(choice: dict) -> LogprobSummary | None:
    content = (choice.get("logprobs") or {}).get("content")
    if not content:
        return None
    summary: dict[int, list[tuple[str, float]]] = {}
    for pos, item in enumerate(content):
        tops = item.get("top_logprobs") or [{"token": item.get("token", ""), "logprob": item.get("logprob", 0.0)}]
        summary[pos] = [(t.get("token", ""), float(t.get("logprob", 0.0))) for t in tops]
    return summary


def make_backend(endpoint: BackendEndpoint, **http_kwargs) -> Backend:
    """Build the right client for an endpoint declaration."""
    if endpoint.kind == "scripted":
        if endpoint.base_url:
            return ScriptedBackend.from_file(endpoint.base_url, endpoint)
        return ScriptedBackend(endpoint)
    return HttpBackend(endpoint, **http_kwargs)


# Module-level forms of the three operations, enforcing kind preconditions.

def chat_complete(
    backend: Backend,
    messages: Sequence[Message],
    params: SamplingParams,
    seed: int | None = None,
) -> Completion:
    if backend.kind not in ("chat", "scripted"):
        raise ConfigurationError(f"chat_complete needs a chat endpoint, got {backend.kind}")
    return backend.chat_complete(messages, params, seed=seed)


def embed(backend: Backend, text: str) -> list[float]:
    if backend.kind not in ("embedding", "scripted"):
        raise ConfigurationError(f"embed needs an embedding endpoint, got {backend.kind}")
    return backend.embed(text)


def groundedness_check(backend: Backend, context: str, claim: str) -> tuple[bool, float | None]:
    if backend.kind not in ("groundedness", "scripted"):
        raise ConfigurationError(
            f"groundedness_check needs a groundedness endpoint, got {backend.kind}"
        )
    return backend.groundedness_check(context, claim)
