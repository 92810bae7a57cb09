"""Three-step abstention decision: trace, invert, compare.

1. Elicit a structured reasoning trace for the user's query and extract the
   candidate answer from it.
2. From the trace ALONE, reconstruct the query the model most plausibly
   answered.  The reconstruction request never contains the user's query;
   that guarantee is structural (see build_reconstruction_messages).
3. Score the reconstruction against the user query with the enabled
   misalignment scorers and abstain on their majority vote.
"""

from __future__ import annotations

import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

from .backends import Backend, Message, SamplingParams, chat_complete
from .core import AbstainDecision, ModelAnswer, QuerySample
from .errors import DecisionError, DegenerateInputError, EngineError
from .parsing import detect_options, parse_answer
from .prompts import DEFAULT_PROMPTS, PromptCatalog
from .scorers import (
    DEFAULT_SE_THRESHOLD,
    SCORER_NAMES,
    ScorerVote,
    ensemble_decide,
    ground_vote,
    llm_judge_vote,
    se_vote,
)

FALLBACK_OPTIONS = ("A", "B", "C", "D", "E")

_RECONSTRUCTED_MARKER = re.compile(r"reconstructed\s+query\s*:\s*", re.IGNORECASE)


@dataclass(frozen=True)
class ReasoningTrace:
    steps_text: str
    final_answer: ModelAnswer


@dataclass(frozen=True)
class ReconstructedQuery:
    text: str
    source_trace_id: str


def build_trace_messages(prompt: str, prompts: PromptCatalog = DEFAULT_PROMPTS) -> list[Message]:
    """User query with the step-by-step instruction appended."""
    instruction = prompts.template("common", "cot_instruction")
    return [("user", f"{prompt}\n\n{instruction}")]


def build_reconstruction_messages(
    trace_text: str, prompts: PromptCatalog = DEFAULT_PROMPTS
) -> list[Message]:
    """Reconstruction request built from the trace and nothing else.

    The final-answer line stays inside the trace on purpose; the prompt asks
    for the question, not the answer.
    """
    return [("user", prompts.render("trace_inversion", "reconstruct", trace=trace_text))]


def resolve_options(sample: QuerySample, option_set: Sequence[str] | None = None) -> list[str]:
    """Explicit options win; otherwise scan the prompt; fall back to A-E."""
    if option_set:
        return [o.strip().upper() for o in option_set]
    detected = detect_options(sample.prompt)
    return detected if detected else list(FALLBACK_OPTIONS)


def generate_trace(
    model: Backend,
    sample: QuerySample,
    params: SamplingParams = SamplingParams(),
    prompts: PromptCatalog = DEFAULT_PROMPTS,
    option_set: Sequence[str] | None = None,
    seed: int | None = None,
) -> ReasoningTrace:
    """Elicit a reasoning trace and extract the final answer from it."""
    completion = chat_complete(model, build_trace_messages(sample.prompt, prompts), params, seed=seed)
    if not completion.text.strip():
        raise DegenerateInputError(f"sample {sample.id!r}: model produced an empty trace")
    parsed = parse_answer(completion.text, resolve_options(sample, option_set))
    answer = ModelAnswer(
        raw_text=completion.text,
        parsed=parsed,
        logprob_summary=completion.logprob_summary,
    )
    return ReasoningTrace(steps_text=completion.text, final_answer=answer)


def reconstruct_query(
    model: Backend,
    trace: ReasoningTrace,
    params: SamplingParams = SamplingParams(),
    prompts: PromptCatalog = DEFAULT_PROMPTS,
    trace_id: str = "",
    seed: int | None = None,
) -> ReconstructedQuery:
    """Invert a trace into the query it most plausibly answers.

    Takes the completion text after the last "Reconstructed query:" marker,
    or the whole completion when the marker is absent.
    """
    if not trace.steps_text.strip():
        raise DegenerateInputError("cannot reconstruct from an empty trace")
    completion = chat_complete(
        model, build_reconstruction_messages(trace.steps_text, prompts), params, seed=seed
    )
    text = completion.text
    matches = list(_RECONSTRUCTED_MARKER.finditer(text))
    if matches:
        text = text[matches[-1].end():]
    text = text.strip()
    if not text:
        raise DegenerateInputError("reconstruction came back empty")
    return ReconstructedQuery(text=text, source_trace_id=trace_id)


def _scorer_calls(
    q: str,
    q_star: str,
    enabled: Sequence[str],
    se_threshold: float,
    embedder: Backend | None,
    guard: Backend | None,
    judge: Backend,
    params: SamplingParams,
    prompts: PromptCatalog,
    seed: int | None,
) -> dict[str, Callable[[], ScorerVote]]:
    calls: dict[str, Callable[[], ScorerVote]] = {}
    for name in enabled:
        if name == "se":
            if embedder is None:
                raise DecisionError("se scorer enabled without an embedding backend", stage="scorers")
            calls["se"] = lambda: se_vote(q, q_star, se_threshold, embedder)
        elif name == "trinv_llm":
            calls["trinv_llm"] = lambda: llm_judge_vote(q, q_star, judge, params, prompts, seed=seed)
        elif name == "ground":
            if guard is None:
                raise DecisionError("ground scorer enabled without a groundedness backend", stage="scorers")
            calls["ground"] = lambda: ground_vote(q, q_star, guard)
        else:
            raise DecisionError(f"unknown scorer {name!r}", stage="scorers")
    return calls


def score_misalignment(
    q: str,
    q_star: str,
    enabled: Sequence[str] = SCORER_NAMES,
    se_threshold: float = DEFAULT_SE_THRESHOLD,
    embedder: Backend | None = None,
    guard: Backend | None = None,
    judge: Backend | None = None,
    params: SamplingParams = SamplingParams(),
    prompts: PromptCatalog = DEFAULT_PROMPTS,
    seed: int | None = None,
) -> tuple[list[ScorerVote], list[str]]:
    """Run the enabled scorers concurrently; drop the ones that fail.

    Returns (surviving votes, names of dropped scorers).  Raises
    DecisionError when every scorer failed.
    """
    if judge is None:
        raise DecisionError("trinv_llm judge backend missing", stage="scorers")
    calls = _scorer_calls(
        q, q_star, enabled, se_threshold, embedder, guard, judge, params, prompts, seed
    )
    votes: list[ScorerVote] = []
    dropped: list[str] = []
    with ThreadPoolExecutor(max_workers=max(1, len(calls))) as pool:
        futures = {name: pool.submit(call) for name, call in calls.items()}
        for name in calls:  # join in enable order for determinism
            try:
                votes.append(futures[name].result())
            except EngineError:
                dropped.append(name)
    if not votes:
        raise DecisionError("every misalignment scorer failed", stage="scorers")
    return votes, dropped


def decide(
    model: Backend,
    sample: QuerySample,
    scorers: Sequence[str] = SCORER_NAMES,
    se_threshold: float = DEFAULT_SE_THRESHOLD,
    embedder: Backend | None = None,
    guard: Backend | None = None,
    judge: Backend | None = None,
    params: SamplingParams = SamplingParams(),
    prompts: PromptCatalog = DEFAULT_PROMPTS,
    option_set: Sequence[str] | None = None,
    seed: int | None = None,
) -> AbstainDecision:
    """Full trace-inversion decision for one sample.

    The judge defaults to the model under test.  A degenerate reconstruction
    abstains with a diagnostic flag instead of failing: an uninvertible
    trace is itself evidence of misalignment.
    """
    started = time.perf_counter()
    try:
        trace = generate_trace(model, sample, params, prompts, option_set, seed=seed)
    except EngineError as exc:
        raise DecisionError(f"trace generation failed: {exc}", stage="trace") from exc

    try:
        recon = reconstruct_query(model, trace, params, prompts, trace_id=sample.id, seed=seed)
    except DegenerateInputError:
        return AbstainDecision(
            abstain=True,
            candidate=trace.final_answer,
            method="trace_inversion",
            flags=("degenerate_reconstruction",),
            latency_ms=_elapsed_ms(started),
        )
    except EngineError as exc:
        raise DecisionError(f"reconstruction failed: {exc}", stage="reconstruct") from exc

    votes, dropped = score_misalignment(
        q=sample.prompt,
        q_star=recon.text,
        enabled=scorers,
        se_threshold=se_threshold,
        embedder=embedder,
        guard=guard,
        judge=judge if judge is not None else model,
        params=params,
        prompts=prompts,
        seed=seed,
    )
    flags = tuple(f"scorer_dropped:{name}" for name in dropped)
    return AbstainDecision(
        abstain=ensemble_decide(votes),
        candidate=trace.final_answer,
        method="trace_inversion",
        votes={v.scorer: v.abstain_vote for v in votes},
        scores={v.scorer: v.score for v in votes},
        flags=flags,
        reconstructed_query=recon.text,
        latency_ms=_elapsed_ms(started),
    )


def _elapsed_ms(started: float) -> int:
    return max(0, int(round((time.perf_counter() - started) * 1000)))
