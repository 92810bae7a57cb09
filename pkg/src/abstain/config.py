"""Shared configuration document for the CLI and the gateway.

A single JSON file declares the backends, the active method, sampling
parameters, and an optional prompt-catalog override:

    {
      "backends": {
        "main":     {"kind": "chat", "base_url": "http://host/v1",
                     "model_id": "my-model", "auth_env": "MAIN_API_KEY"},
        "embedder": {"kind": "embedding", "base_url": "http://host/v1",
                     "model_id": "all-MiniLM-L6-v2"},
        "guard":    {"kind": "groundedness", "base_url": "http://guard/check",
                     "model_id": "granite-guardian-3.3-8b"},
        "replay":   {"kind": "scripted", "base_url": "fixtures.json"}
      },
      "roles": {"model": "main", "embedder": "embedder",
                "guard": "guard", "judge": "main"},
      "method": {"method": "trace_inversion", "scorers": ["se", "trinv_llm", "ground"],
                 "se_threshold": 0.7},
      "sampling": {"temperature": 0.1, "max_new_tokens": 1024},
      "prompt_catalog": "prompts.json",
      "max_inflight": 8
    }

Secrets are referenced by environment-variable name only and never stored.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .backends import Backend, BackendEndpoint, SamplingParams, make_backend
from .baselines import MethodConfig
from .engine import EngineContext
from .errors import ConfigurationError, SchemaError
from .prompts import DEFAULT_PROMPTS, PromptCatalog


@dataclass
class EngineConfig:
    endpoints: dict[str, BackendEndpoint]
    roles: dict[str, str]
    method: MethodConfig
    sampling: SamplingParams
    prompts: PromptCatalog
    max_inflight: int = 8

    def backend_for(self, role: str, cache: dict[str, Backend]) -> Backend | None:
        name = self.roles.get(role)
        if name is None:
            return None
        if name not in self.endpoints:
            raise ConfigurationError(f"role {role!r} points at unknown backend {name!r}")
        if name not in cache:
            cache[name] = make_backend(self.endpoints[name])
        return cache[name]

    def build_context(self, seed: int | None = None, model_role: str = "model") -> EngineContext:
        cache: dict[str, Backend] = {}
        model = self.backend_for(model_role, cache)
        if model is None:
            raise ConfigurationError(f"config does not assign the {model_role!r} role")
        return EngineContext(
            model=model,
            embedder=self.backend_for("embedder", cache),
            guard=self.backend_for("guard", cache),
            judge=self.backend_for("judge", cache),
            params=self.sampling,
            prompts=self.prompts,
            seed=seed,
        )


def _endpoint_from_json(name: str, doc: dict, base_dir: Path) -> BackendEndpoint:
    try:
        kind = doc["kind"]
    except KeyError:
        raise SchemaError(f"backend {name!r}: missing 'kind'") from None
    base_url = doc.get("base_url", "")
    if kind == "scripted" and base_url:
        base_url = str((base_dir / base_url) if not Path(base_url).is_absolute() else Path(base_url))
    return BackendEndpoint(
        kind=kind,
        base_url=base_url,
        model_id=doc.get("model_id", ""),
        auth_env=doc.get("auth_env"),
        timeout_ms=int(doc.get("timeout_ms", 60_000)),
    )


def method_config_from_json(doc: dict) -> MethodConfig:
    kwargs = dict(doc)
    if "scorers" in kwargs:
        kwargs["scorers"] = tuple(kwargs["scorers"])
    if "expert_domains" in kwargs:
        kwargs["expert_domains"] = tuple(kwargs["expert_domains"])
    try:
        return MethodConfig(**kwargs)
    except TypeError as exc:
        raise SchemaError(f"bad method config: {exc}") from exc


def load_config(path: str | Path) -> EngineConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"cannot load config {path}: {exc}") from exc

    backends_doc = doc.get("backends")
    if not backends_doc:
        raise SchemaError(f"{path}: config declares no backends")
    endpoints = {
        name: _endpoint_from_json(name, entry, path.parent) for name, entry in backends_doc.items()
    }

    roles = dict(doc.get("roles", {}))
    if "model" not in roles:
        if len(endpoints) == 1:
            roles["model"] = next(iter(endpoints))
        else:
            raise SchemaError(f"{path}: roles must assign 'model'")

    sampling_doc = doc.get("sampling", {})
    sampling = SamplingParams(
        temperature=float(sampling_doc.get("temperature", 0.1)),
        max_new_tokens=int(sampling_doc.get("max_new_tokens", 1024)),
        want_logprobs=bool(sampling_doc.get("want_logprobs", False)),
        top_k_logprobs=int(sampling_doc.get("top_k_logprobs", 5)),
        reasoning_effort=sampling_doc.get("reasoning_effort"),
    )

    prompts = DEFAULT_PROMPTS
    catalog_path = doc.get("prompt_catalog")
    if catalog_path:
        resolved = Path(catalog_path)
        if not resolved.is_absolute():
            resolved = path.parent / resolved
        prompts = PromptCatalog.from_file(resolved)

    method = method_config_from_json(doc.get("method", {"method": "trace_inversion"}))

    return EngineConfig(
        endpoints=endpoints,
        roles=roles,
        method=method,
        sampling=sampling,
        prompts=prompts,
        max_inflight=int(doc.get("max_inflight", 8)),
    )
