"""Abstention decision engine and evaluation harness for LLM question answering.

The engine decides, per query, whether a model should answer or abstain.
Its flagship method inverts the model's reasoning trace back into the query
the model actually answered and abstains when that reconstruction is
misaligned with the user's query; five classic baselines and a full
benchmark harness (metrics, calibration, aggregation) ship alongside, plus
an HTTP gateway for online use.
"""

from .backends import (
    BackendEndpoint,
    Completion,
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
from .baselines import (
    ConfidenceRecord,
    MethodConfig,
    apply_cot_variant,
    askcali_confidence,
    calibrate_threshold,
    compete_decide,
    cooperate_decide,
    probs_confidence,
    reflect_decide,
    threshold_decide,
)
from .core import (
    AbstainDecision,
    ConfusionCounts,
    ModelAnswer,
    QuerySample,
    abstain_accuracy,
    reliable_accuracy,
    should_abstain_label,
    tally,
)
from .engine import EngineContext, run_method
from .errors import EngineError
from .evaluation import (
    DatasetFile,
    MethodRow,
    RunResult,
    aggregate,
    answerable_gap,
    emit_tables,
    load_dataset,
    run_experiment,
    subsample,
)
from .parsing import detect_options, parse_answer
from .prompts import DEFAULT_PROMPTS, PromptCatalog
from .scorers import ScorerVote, cosine, ensemble_decide, ground_vote, llm_judge_vote, se_vote
from .trace_inversion import (
    ReasoningTrace,
    ReconstructedQuery,
    decide,
    generate_trace,
    reconstruct_query,
)

__version__ = "0.1.0"

__all__ = [
    "AbstainDecision",
    "BackendEndpoint",
    "Completion",
    "ConfidenceRecord",
    "ConfusionCounts",
    "DatasetFile",
    "DEFAULT_PROMPTS",
    "EngineContext",
    "EngineError",
    "HttpBackend",
    "MethodConfig",
    "MethodRow",
    "ModelAnswer",
    "PromptCatalog",
    "QuerySample",
    "ReasoningTrace",
    "ReconstructedQuery",
    "RetryPolicy",
    "RunResult",
    "SamplingParams",
    "ScorerVote",
    "ScriptedBackend",
    "abstain_accuracy",
    "aggregate",
    "answerable_gap",
    "apply_cot_variant",
    "askcali_confidence",
    "calibrate_threshold",
    "chat_complete",
    "compete_decide",
    "cooperate_decide",
    "cosine",
    "decide",
    "detect_options",
    "embed",
    "emit_tables",
    "ensemble_decide",
    "generate_trace",
    "ground_vote",
    "groundedness_check",
    "llm_judge_vote",
    "load_dataset",
    "make_backend",
    "message_digest",
    "parse_answer",
    "probs_confidence",
    "reconstruct_query",
    "reflect_decide",
    "reliable_accuracy",
    "run_experiment",
    "run_method",
    "se_vote",
    "should_abstain_label",
    "subsample",
    "tally",
    "threshold_decide",
    "with_retries",
]
