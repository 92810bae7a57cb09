"""HTTP gateway wrapping a chat backend with an abstention method.

POST /v1/decide   {"prompt": "...", "options": ["A","B"]?,
                   "method_override": "reflect"?, "trace_wanted": false?}
                  -> {"abstained": bool, "answer": {...}|null,
                      "diagnostics": {...}|null, "method": "...",
                      "latency_ms": int}
GET  /healthz     backend reachability per kind

Abstention is a successful decision, returned as a structured refusal with
status 200, never as an HTTP error.  The app is a plain WSGI callable with
no shared mutable state beyond the read-mostly config snapshot, so requests
may be served fully concurrently; ``serve`` mounts it on a threading
server.  Backend credentials live in environment variables and are never
echoed into responses.
"""

from __future__ import annotations

import argparse
import json
import socketserver
import time
import uuid
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence
from wsgiref.simple_server import WSGIServer, make_server

import requests

from .backends import Backend, HttpBackend, ScriptedBackend
from .baselines import MethodConfig
from .config import EngineConfig, load_config
from .core import METHOD_NAMES, AbstainDecision, QuerySample
from .engine import EngineContext, run_method
from .errors import (
    BackendUnavailableError,
    CapabilityError,
    ConfigurationError,
    EngineError,
    InputError,
    ProtocolError,
)
from .parsing import detect_options

# Methods that cannot run without a concrete option alphabet.
_OPTIONS_REQUIRED = ("probs", "compete")


@dataclass(frozen=True)
class GatewayRequest:
    prompt: str
    options: tuple[str, ...] | None = None
    method_override: str | None = None
    trace_wanted: bool = False


class RequestError(EngineError):
    """Maps to HTTP 400."""


def parse_request(doc: object) -> GatewayRequest:
    if not isinstance(doc, dict):
        raise RequestError("request body must be a JSON object")
    prompt = doc.get("prompt")
    if not isinstance(prompt, str) or not prompt.strip():
        raise RequestError("'prompt' must be a nonempty string")
    options = doc.get("options")
    if options is not None:
        if not isinstance(options, list) or not all(isinstance(o, str) for o in options):
            raise RequestError("'options' must be a list of strings")
        options = tuple(options)
    override = doc.get("method_override")
    if override is not None and override not in METHOD_NAMES:
        raise RequestError(f"unknown method_override {override!r}")
    return GatewayRequest(
        prompt=prompt,
        options=options,
        method_override=override,
        trace_wanted=bool(doc.get("trace_wanted", False)),
    )


class Gateway:
    """Decision service: immutable config snapshot plus stateless handlers."""

    def __init__(self, context: EngineContext, method: MethodConfig):
        self._context = context
        self._method = method

    @classmethod
    def from_config(cls, config: EngineConfig) -> "Gateway":
        return cls(context=config.build_context(), method=config.method)

    def handle_query(self, req: GatewayRequest) -> dict:
        method_name = req.method_override or self._method.method
        cfg = (
            self._method
            if method_name == self._method.method
            else MethodConfig(
                method=method_name,
                cot_variant=self._method.cot_variant,
                k_alternatives=self._method.k_alternatives,
                expert_domains=self._method.expert_domains,
                threshold=self._method.threshold,
                scorers=self._method.scorers,
                se_threshold=self._method.se_threshold,
            )
        )
        options: Sequence[str] | None = req.options or detect_options(req.prompt) or None
        if options is None and method_name in _OPTIONS_REQUIRED:
            raise RequestError(f"method {method_name!r} requires an 'options' list")

        # Correctness is unknown online: no references, abstention-side default.
        sample = QuerySample(
            id=f"gw-{uuid.uuid4().hex[:12]}",
            prompt=req.prompt,
            answerable=False,
            references=(),
        )
        ctx = EngineContext(
            model=self._context.model,
            embedder=self._context.embedder,
            guard=self._context.guard,
            judge=self._context.judge,
            params=self._context.params,
            prompts=self._context.prompts,
            option_set=options,
            seed=self._context.seed,
        )
        started = time.perf_counter()
        decision = run_method(cfg, sample, ctx)
        total_ms = max(decision.latency_ms, int(round((time.perf_counter() - started) * 1000)))
        return _response_body(decision, req.trace_wanted, total_ms)

    def health(self) -> dict:
        backends = {
            "model": self._context.model,
            "embedder": self._context.embedder,
            "guard": self._context.guard,
            "judge": self._context.judge,
        }
        report = {}
        for role, backend in backends.items():
            if backend is None:
                continue
            report[role] = {"kind": backend.kind, "reachable": _reachable(backend)}
        ok = all(entry["reachable"] for entry in report.values())
        return {"status": "ok" if ok else "degraded", "backends": report}


def _reachable(backend: Backend) -> bool:
    if isinstance(backend, ScriptedBackend):
        return True
    if isinstance(backend, HttpBackend):
        try:
            requests.head(backend.endpoint.base_url, timeout=2)
            return True
        except requests.RequestException:
            return False
    return False


def _response_body(decision: AbstainDecision, trace_wanted: bool, latency_ms: int) -> dict:
    body: dict = {
        "abstained": decision.abstain,
        "method": decision.method,
        "latency_ms": latency_ms,
        "answer": None,
        "diagnostics": None,
    }
    if not decision.abstain or trace_wanted:
        body["answer"] = {
            "parsed": decision.candidate.parsed,
            "raw_text": decision.candidate.raw_text,
        }
    if trace_wanted:
        body["diagnostics"] = {
            "votes": dict(decision.votes),
            "scores": dict(decision.scores),
            "flags": list(decision.flags),
            "reconstructed_query": decision.reconstructed_query,
        }
    return body


# -- WSGI plumbing ---------------------------------------------------------------------

StartResponse = Callable[[str, list[tuple[str, str]]], None]


def _json_response(
    start_response: StartResponse,
    status: str,
    body: dict,
    extra_headers: Iterable[tuple[str, str]] = (),
) -> list[bytes]:
    payload = json.dumps(body).encode("utf-8")
    headers = [("Content-Type", "application/json"), ("Content-Length", str(len(payload)))]
    headers.extend(extra_headers)
    start_response(status, headers)
    return [payload]


def _error(start_response: StartResponse, status: str, message: str, **extra) -> list[bytes]:
    headers = [("Retry-After", "1")] if status.startswith("503") else []
    return _json_response(start_response, status, {"error": {"message": message, **extra}}, headers)


def build_app(gateway: Gateway):
    """WSGI application exposing /v1/decide and /healthz."""

    def app(environ: dict, start_response: StartResponse) -> list[bytes]:
        path = environ.get("PATH_INFO", "")
        method = environ.get("REQUEST_METHOD", "GET")

        if path == "/healthz" and method == "GET":
            return _json_response(start_response, "200 OK", gateway.health())

        if path == "/v1/decide":
            if method != "POST":
                return _error(start_response, "405 Method Not Allowed", "POST required")
            try:
                size = int(environ.get("CONTENT_LENGTH") or 0)
            except ValueError:
                size = 0
            raw = environ["wsgi.input"].read(size) if size else b""
            try:
                doc = json.loads(raw.decode("utf-8")) if raw else None
            except (ValueError, UnicodeDecodeError):
                return _error(start_response, "400 Bad Request", "body is not valid JSON")
            try:
                req = parse_request(doc)
                body = gateway.handle_query(req)
            except RequestError as exc:
                return _error(start_response, "400 Bad Request", str(exc))
            except InputError as exc:
                return _error(start_response, "400 Bad Request", str(exc))
            except CapabilityError as exc:
                return _error(start_response, "501 Not Implemented", str(exc))
            except BackendUnavailableError as exc:
                return _error(start_response, "503 Service Unavailable", str(exc), attempts=exc.attempts)
            except ProtocolError as exc:
                return _error(start_response, "502 Bad Gateway", str(exc))
            except ConfigurationError as exc:
                return _error(start_response, "500 Internal Server Error", str(exc))
            except EngineError as exc:
                return _error(start_response, "500 Internal Server Error", str(exc))
            return _json_response(start_response, "200 OK", body)

        return _error(start_response, "404 Not Found", f"no route for {method} {path}")

    return app


class _ThreadingWSGIServer(socketserver.ThreadingMixIn, WSGIServer):
    daemon_threads = True


def serve(app, host: str = "127.0.0.1", port: int = 8080) -> None:
    with make_server(host, port, app, server_class=_ThreadingWSGIServer) as server:
        print(f"abstain gateway listening on http://{host}:{port}")
        server.serve_forever()


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="Run the abstention gateway service.")
    parser.add_argument("--config", required=True, help="engine config JSON")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8080)
    args = parser.parse_args(argv)
    gateway = Gateway.from_config(load_config(args.config))
    serve(build_app(gateway), args.host, args.port)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
