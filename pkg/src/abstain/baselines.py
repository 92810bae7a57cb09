"""The five comparison abstention methods and shared threshold calibration.

Calibration-based: "probs" (token log-probabilities) and "ask_cali"
(verbalized confidence) both score a confidence p and abstain when p falls
below a threshold p* fitted on a held-out split.

Prompting-based: "reflect" asks the model to judge its own answer.

Collaboration-based: "cooperate" reviews the answer with self-specialized
domain experts; "compete" re-asks the question under adversarial support
for alternative answers and abstains when the answer flips in a strict
majority of rounds.
"""

from __future__ import annotations

import hashlib
import math
import random
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .backends import Backend, SamplingParams, chat_complete
from .core import METHOD_NAMES, AbstainDecision, ModelAnswer, QuerySample
from .errors import (
    CalibrationError,
    CapabilityError,
    ConfigurationError,
    DecisionError,
    EngineError,
    InputError,
)
from .parsing import parse_answer
from .prompts import DEFAULT_PROMPTS, PromptCatalog
from .scorers import DEFAULT_SE_THRESHOLD, SCORER_NAMES
from .trace_inversion import resolve_options

DEFAULT_EXPERT_DOMAINS = ("factual", "commonsense", "mathematical")

# Candidate abstention thresholds: {0.01, 0.02, ..., 0.99}.
THRESHOLD_GRID: tuple[float, ...] = tuple(i / 100 for i in range(1, 100))


@dataclass(frozen=True)
class ConfidenceRecord:
    sample_id: str
    confidence: float
    correct: bool

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise InputError(f"confidence must be in [0,1], got {self.confidence}")


@dataclass(frozen=True)
class MethodConfig:
    """Which abstention method to run and its knobs."""

    method: str
    cot_variant: bool = False
    k_alternatives: int = 3
    expert_domains: tuple[str, ...] = DEFAULT_EXPERT_DOMAINS
    threshold: float | None = None  # p* for probs / ask_cali; set by calibration
    scorers: tuple[str, ...] = SCORER_NAMES
    se_threshold: float | None = DEFAULT_SE_THRESHOLD  # None -> calibrate

    def __post_init__(self):
        if self.method not in METHOD_NAMES:
            raise ConfigurationError(f"unknown method {self.method!r}")
        if self.k_alternatives < 1:
            raise ConfigurationError("k_alternatives must be >= 1")
        if not self.expert_domains:
            raise ConfigurationError("expert_domains must be nonempty")
        if self.threshold is not None and not 0.0 <= self.threshold <= 1.0:
            raise ConfigurationError("threshold must lie in [0,1]")
        unknown = set(self.scorers) - set(SCORER_NAMES)
        if unknown:
            raise ConfigurationError(f"unknown scorers {sorted(unknown)}")
        if not self.scorers:
            raise ConfigurationError("at least one scorer must be enabled")
        object.__setattr__(self, "expert_domains", tuple(self.expert_domains))
        object.__setattr__(self, "scorers", tuple(self.scorers))


def apply_cot_variant(prompt: str, enabled: bool = True, prompts: PromptCatalog = DEFAULT_PROMPTS) -> str:
    """Append the step-by-step instruction to an answering prompt (idempotent)."""
    if not enabled:
        return prompt
    instruction = prompts.template("common", "cot_instruction")
    if prompt.rstrip().endswith(instruction):
        return prompt
    return f"{prompt}\n{instruction}"


def answer_question(
    model: Backend,
    sample: QuerySample,
    params: SamplingParams = SamplingParams(),
    prompts: PromptCatalog = DEFAULT_PROMPTS,
    option_set: Sequence[str] | None = None,
    cot_variant: bool = False,
    seed: int | None = None,
) -> ModelAnswer:
    """First answering turn shared by the baselines: ask, then parse."""
    prompt = apply_cot_variant(sample.prompt, cot_variant, prompts)
    completion = chat_complete(model, [("user", prompt)], params, seed=seed)
    parsed = parse_answer(completion.text, resolve_options(sample, option_set))
    return ModelAnswer(
        raw_text=completion.text, parsed=parsed, logprob_summary=completion.logprob_summary
    )


# -- calibration ----------------------------------------------------------------


def abstain_error(records: Sequence[ConfidenceRecord], t: float) -> int:
    """E(t): abstentions on correct answers plus answers on incorrect ones."""
    return sum(
        1
        for r in records
        if (r.confidence < t and r.correct) or (r.confidence >= t and not r.correct)
    )


def calibrate_threshold(dev: Sequence[ConfidenceRecord]) -> float:
    """Smallest grid threshold minimizing the abstain error E(t).

    Ties break toward the smallest t, i.e. toward answering more.
    """
    if not dev:
        raise CalibrationError("calibration requires a nonempty development set")
    p = np.array([r.confidence for r in dev], dtype=float)
    y = np.array([r.correct for r in dev], dtype=bool)
    grid = np.array(THRESHOLD_GRID, dtype=float)
    below = p[None, :] < grid[:, None]  # (|grid|, N)
    errors = (below & y[None, :]).sum(axis=1) + (~below & ~y[None, :]).sum(axis=1)
    return float(grid[int(np.argmin(errors))])  # argmin returns the first minimum


def threshold_decide(
    p: float,
    p_star: float,
    answer: ModelAnswer,
    method: str = "probs",
    flags: tuple[str, ...] = (),
    latency_ms: int = 0,
) -> AbstainDecision:
    """Answer when p >= p*, abstain otherwise."""
    if not 0.0 <= p <= 1.0 or not 0.0 <= p_star <= 1.0:
        raise InputError("p and p* must lie in [0,1]")
    return AbstainDecision(
        abstain=p < p_star,
        candidate=answer,
        method=method,
        scores={"confidence": p, "threshold": p_star},
        flags=flags,
        latency_ms=latency_ms,
    )


# -- probs -----------------------------------------------------------------------


def probs_confidence(answer: ModelAnswer, k: int = 5) -> float:
    """Geometric-mean style confidence from top-k token log-probabilities.

    m = (1/L) * sum_t (1/k) * sum_j log P_t(j) over the answer span, then
    exp(m) so the score lands in (0,1] and is comparable on the calibration
    grid.  Positions exposing fewer than k entries average what is there.
    """
    if k < 1:
        raise InputError("k must be >= 1")
    summary = answer.logprob_summary
    if not summary:
        raise CapabilityError("probs requires token log-probabilities from the backend")
    position_means = []
    for pos in sorted(summary):
        entries = list(summary[pos])[:k]
        if not entries:
            raise CapabilityError(f"no log-probabilities at position {pos}")
        position_means.append(sum(lp for _, lp in entries) / len(entries))
    m = sum(position_means) / len(position_means)
    return math.exp(m)


def probs_decide(
    model: Backend,
    sample: QuerySample,
    cfg: MethodConfig,
    params: SamplingParams = SamplingParams(),
    prompts: PromptCatalog = DEFAULT_PROMPTS,
    option_set: Sequence[str] | None = None,
    seed: int | None = None,
) -> AbstainDecision:
    if cfg.threshold is None:
        raise ConfigurationError("probs needs a calibrated threshold p*")
    started = time.perf_counter()
    want = SamplingParams(
        temperature=params.temperature,
        max_new_tokens=params.max_new_tokens,
        want_logprobs=True,
        top_k_logprobs=max(params.top_k_logprobs, 1),
        reasoning_effort=params.reasoning_effort,
    )
    answer = answer_question(model, sample, want, prompts, option_set, cfg.cot_variant, seed)
    p = probs_confidence(answer, k=want.top_k_logprobs)
    return threshold_decide(
        min(p, 1.0), cfg.threshold, answer, method="probs", latency_ms=_elapsed_ms(started)
    )


# -- ask_cali ----------------------------------------------------------------------

_FLOAT = re.compile(r"\d+(?:\.\d+)?|\.\d+")
_PROBABILITY_MARKER = re.compile(r"probability\s*:?", re.IGNORECASE)


def _parse_probability(text: str) -> float | None:
    """First decimal in [0,1] following a Probability marker, else None."""
    marker = _PROBABILITY_MARKER.search(text)
    if not marker:
        return None
    for m in _FLOAT.finditer(text, marker.end()):
        value = float(m.group())
        if 0.0 <= value <= 1.0:
            return value
    return None


def askcali_confidence(
    model: Backend,
    sample: QuerySample,
    params: SamplingParams = SamplingParams(),
    prompts: PromptCatalog = DEFAULT_PROMPTS,
    option_set: Sequence[str] | None = None,
    cot_variant: bool = False,
    seed: int | None = None,
) -> tuple[ModelAnswer, float, tuple[str, ...]]:
    """Two-turn exchange: best guess, then the model's own probability for it.

    An unparseable probability collapses to 0.0 with a diagnostic flag, which
    forces abstention under any calibrated threshold above zero.
    """
    guess_prompt = apply_cot_variant(
        prompts.render("ask_cali", "guess", question=sample.prompt), cot_variant, prompts
    )
    guess = chat_complete(model, [("user", guess_prompt)], params, seed=seed)
    answer = ModelAnswer(
        raw_text=guess.text,
        parsed=parse_answer(guess.text, resolve_options(sample, option_set)),
        logprob_summary=guess.logprob_summary,
    )
    followup = [
        ("user", guess_prompt),
        ("assistant", guess.text),
        ("user", prompts.template("ask_cali", "probability")),
    ]
    stated = chat_complete(model, followup, params, seed=seed)
    p = _parse_probability(stated.text)
    if p is None:
        return answer, 0.0, ("unparseable_probability",)
    return answer, p, ()


def askcali_decide(
    model: Backend,
    sample: QuerySample,
    cfg: MethodConfig,
    params: SamplingParams = SamplingParams(),
    prompts: PromptCatalog = DEFAULT_PROMPTS,
    option_set: Sequence[str] | None = None,
    seed: int | None = None,
) -> AbstainDecision:
    if cfg.threshold is None:
        raise ConfigurationError("ask_cali needs a calibrated threshold p*")
    started = time.perf_counter()
    answer, p, flags = askcali_confidence(
        model, sample, params, prompts, option_set, cfg.cot_variant, seed
    )
    return threshold_decide(
        p, cfg.threshold, answer, method="ask_cali", flags=flags, latency_ms=_elapsed_ms(started)
    )


# -- reflect -----------------------------------------------------------------------


def reflect_decide(
    model: Backend,
    sample: QuerySample,
    cfg: MethodConfig | None = None,
    params: SamplingParams = SamplingParams(),
    prompts: PromptCatalog = DEFAULT_PROMPTS,
    option_set: Sequence[str] | None = None,
    seed: int | None = None,
) -> AbstainDecision:
    """Answer, then self-review; abstain when the model deems its answer false.

    The verdict is A (true) / B (false); an unparseable verdict abstains
    conservatively with a flag.
    """
    cot = cfg.cot_variant if cfg else False
    started = time.perf_counter()
    answer = answer_question(model, sample, params, prompts, option_set, cot, seed)
    verdict_prompt = prompts.render(
        "reflect", "verdict", question=sample.prompt, answer=answer.raw_text.strip()
    )
    verdict_raw = chat_complete(model, [("user", verdict_prompt)], params, seed=seed)
    verdict = parse_answer(verdict_raw.text, ["A", "B"])
    flags = ("unparseable_verdict",) if verdict == "Z" else ()
    return AbstainDecision(
        abstain=verdict != "A",
        candidate=answer,
        method="reflect",
        scores={"self_true": 1.0 if verdict == "A" else 0.0},
        flags=flags,
        latency_ms=_elapsed_ms(started),
    )


# -- cooperate -----------------------------------------------------------------------


def cooperate_decide(
    model: Backend,
    sample: QuerySample,
    cfg: MethodConfig | None = None,
    params: SamplingParams = SamplingParams(),
    prompts: PromptCatalog = DEFAULT_PROMPTS,
    option_set: Sequence[str] | None = None,
    seed: int | None = None,
) -> AbstainDecision:
    """Self-specialized domain experts review the answer; a judge rules on it.

    Failed experts are dropped (flagged); if every expert fails the decision
    errors out.  The final verdict is A/B like reflect; unparseable verdicts
    abstain conservatively.
    """
    domains = tuple(cfg.expert_domains) if cfg else DEFAULT_EXPERT_DOMAINS
    cot = cfg.cot_variant if cfg else False
    started = time.perf_counter()
    answer = answer_question(model, sample, params, prompts, option_set, cot, seed)
    answer_text = answer.raw_text.strip()

    def consult(domain: str) -> str:
        knowledge = chat_complete(
            model,
            [("user", prompts.render("cooperate", "knowledge", question=sample.prompt, domain=domain))],
            params,
            seed=seed,
        )
        feedback = chat_complete(
            model,
            [
                (
                    "user",
                    prompts.render(
                        "cooperate",
                        "feedback",
                        knowledge=knowledge.text.strip(),
                        question=sample.prompt,
                        answer=answer_text,
                    ),
                )
            ],
            params,
            seed=seed,
        )
        return feedback.text.strip()

    feedbacks: list[str] = []
    dropped: list[str] = []
    with ThreadPoolExecutor(max_workers=len(domains)) as pool:
        futures = {domain: pool.submit(consult, domain) for domain in domains}
        for domain in domains:
            try:
                feedbacks.append(futures[domain].result())
            except EngineError:
                dropped.append(domain)
    if not feedbacks:
        raise DecisionError("every cooperate expert failed", stage="experts")

    block = "\n".join(f"Feedback {i}: {text}" for i, text in enumerate(feedbacks, start=1))
    verdict_raw = chat_complete(
        model,
        [
            (
                "user",
                prompts.render(
                    "cooperate",
                    "verdict",
                    question=sample.prompt,
                    answer=answer_text,
                    feedbacks=block,
                ),
            )
        ],
        params,
        seed=seed,
    )
    verdict = parse_answer(verdict_raw.text, ["A", "B"])
    flags = tuple(f"expert_failed:{d}" for d in dropped)
    if verdict == "Z":
        flags = flags + ("unparseable_verdict",)
    return AbstainDecision(
        abstain=verdict != "A",
        candidate=answer,
        method="cooperate",
        scores={"judge_true": 1.0 if verdict == "A" else 0.0},
        flags=flags,
        latency_ms=_elapsed_ms(started),
    )


# -- compete -------------------------------------------------------------------------


def _round_rng(seed: int | None, sample_id: str) -> random.Random:
    key = hashlib.sha256(f"{seed}:{sample_id}".encode("utf-8")).hexdigest()
    return random.Random(int(key[:16], 16))


def compete_decide(
    model: Backend,
    sample: QuerySample,
    cfg: MethodConfig | None = None,
    params: SamplingParams = SamplingParams(),
    prompts: PromptCatalog = DEFAULT_PROMPTS,
    option_set: Sequence[str] | None = None,
    seed: int | None = None,
) -> AbstainDecision:
    """Challenge the answer k times with support for alternatives.

    Each round picks an unchosen option (seeded RNG; options are reused
    round-robin once exhausted), generates knowledge supporting it, and
    re-asks the question with that knowledge prepended.  Abstain when the
    re-answer differs from the original in a strict majority of completed
    rounds; ties answer.
    """
    k = cfg.k_alternatives if cfg else 3
    cot = cfg.cot_variant if cfg else False
    options = resolve_options(sample, option_set)
    if len(options) < 2:
        raise InputError(f"compete needs >= 2 options, got {options}")
    started = time.perf_counter()
    answer = answer_question(model, sample, params, prompts, option_set, cot, seed)

    pool = [o for o in options if o != answer.parsed] or list(options)
    rng = _round_rng(seed, sample.id)
    rng.shuffle(pool)
    alternatives = [pool[i % len(pool)] for i in range(k)]

    def challenge(alternative: str) -> bool:
        knowledge = chat_complete(
            model,
            [
                (
                    "user",
                    prompts.render(
                        "compete", "knowledge", question=sample.prompt, alternative=alternative
                    ),
                )
            ],
            params,
            seed=seed,
        )
        reask = chat_complete(
            model,
            [
                (
                    "user",
                    prompts.render(
                        "compete", "reask", knowledge=knowledge.text.strip(), question=sample.prompt
                    ),
                )
            ],
            params,
            seed=seed,
        )
        return parse_answer(reask.text, options) != answer.parsed

    changes = 0
    completed = 0
    failed = 0
    with ThreadPoolExecutor(max_workers=min(4, k)) as pool_exec:
        futures = [pool_exec.submit(challenge, alt) for alt in alternatives]
        for future in futures:
            try:
                changes += bool(future.result())
                completed += 1
            except EngineError:
                failed += 1
    if completed == 0:
        raise DecisionError("every compete round failed", stage="rounds")

    flags = (f"rounds_failed:{failed}",) if failed else ()
    return AbstainDecision(
        abstain=2 * changes > completed,
        candidate=answer,
        method="compete",
        scores={"change_fraction": changes / completed},
        flags=flags,
        latency_ms=_elapsed_ms(started),
    )


def _elapsed_ms(started: float) -> int:
    return max(0, int(round((time.perf_counter() - started) * 1000)))
