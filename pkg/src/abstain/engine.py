"""Single entry point that runs any configured abstention method on a sample.

The evaluation harness and the gateway both go through run_method so the
per-method wiring lives in exactly one place.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .backends import Backend, SamplingParams
from .baselines import (
    MethodConfig,
    askcali_decide,
    compete_decide,
    cooperate_decide,
    probs_decide,
    reflect_decide,
)
from .core import AbstainDecision, QuerySample
from .errors import ConfigurationError
from .prompts import DEFAULT_PROMPTS, PromptCatalog
from .scorers import DEFAULT_SE_THRESHOLD
from . import trace_inversion


@dataclass
class EngineContext:
    """The backends and shared knobs a decision needs.

    ``judge`` defaults to the model under test; ``embedder`` and ``guard``
    are only required when the corresponding scorers are enabled.
    """

    model: Backend
    embedder: Backend | None = None
    guard: Backend | None = None
    judge: Backend | None = None
    params: SamplingParams = field(default_factory=SamplingParams)
    prompts: PromptCatalog = DEFAULT_PROMPTS
    option_set: Sequence[str] | None = None
    seed: int | None = None


def run_method(cfg: MethodConfig, sample: QuerySample, ctx: EngineContext) -> AbstainDecision:
    common = dict(
        params=ctx.params,
        prompts=ctx.prompts,
        option_set=ctx.option_set,
        seed=ctx.seed,
    )
    if cfg.method == "trace_inversion":
        return trace_inversion.decide(
            ctx.model,
            sample,
            scorers=cfg.scorers,
            se_threshold=cfg.se_threshold if cfg.se_threshold is not None else DEFAULT_SE_THRESHOLD,
            embedder=ctx.embedder,
            guard=ctx.guard,
            judge=ctx.judge,
            **common,
        )
    if cfg.method == "probs":
        return probs_decide(ctx.model, sample, cfg, **common)
    if cfg.method == "ask_cali":
        return askcali_decide(ctx.model, sample, cfg, **common)
    if cfg.method == "reflect":
        return reflect_decide(ctx.model, sample, cfg, **common)
    if cfg.method == "cooperate":
        return cooperate_decide(ctx.model, sample, cfg, **common)
    if cfg.method == "compete":
        return compete_decide(ctx.model, sample, cfg, **common)
    raise ConfigurationError(f"unknown method {cfg.method!r}")
