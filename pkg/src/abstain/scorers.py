"""Query-misalignment scorers and their majority-vote ensemble.

Each scorer compares the user query q against the query the model actually
answered (q*, reconstructed from its reasoning trace) and casts a binary
abstain vote plus a diagnostic score:

    se         cosine similarity of sentence embeddings; abstain when below
               a threshold (strict less-than).
    trinv_llm  an LLM judge asked whether the two prompts convey the same
               framing, intent, and context; abstain on NO (or an
               unparseable verdict, conservatively).
    ground     a guard model's groundedness risk check of q* against q;
               a "yes" risk flag means q* is not grounded in q -> abstain.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .backends import Backend, SamplingParams, chat_complete, embed, groundedness_check
from .errors import ConfigurationError, DegenerateInputError, InputError
from .parsing import parse_answer
from .prompts import DEFAULT_PROMPTS, PromptCatalog

SCORER_NAMES = ("se", "trinv_llm", "ground")

DEFAULT_SE_THRESHOLD = 0.7


@dataclass(frozen=True)
class ScorerVote:
    scorer: str
    abstain_vote: bool
    score: float


def cosine(a: Sequence[float], b: Sequence[float]) -> float:
    """Cosine similarity, clamped into [-1, 1] against rounding."""
    va = np.asarray(a, dtype=float)
    vb = np.asarray(b, dtype=float)
    if va.shape != vb.shape:
        raise InputError(f"vector dimensions differ: {va.shape} vs {vb.shape}")
    norm = float(np.linalg.norm(va)) * float(np.linalg.norm(vb))
    if norm == 0.0:
        raise DegenerateInputError("cosine undefined for a zero vector")
    return float(np.clip(float(np.dot(va, vb)) / norm, -1.0, 1.0))


def se_vote(q: str, q_star: str, threshold: float, embedder: Backend) -> ScorerVote:
    """Embed both queries and vote abstain when cosine < threshold."""
    if not 0.0 <= threshold <= 1.0:
        raise ConfigurationError(f"se threshold must be in [0,1], got {threshold}")
    score = cosine(embed(embedder, q), embed(embedder, q_star))
    return ScorerVote(scorer="se", abstain_vote=score < threshold, score=score)


def llm_judge_vote(
    q: str,
    q_star: str,
    judge: Backend,
    params: SamplingParams = SamplingParams(),
    prompts: PromptCatalog = DEFAULT_PROMPTS,
    seed: int | None = None,
) -> ScorerVote:
    """Ask an LLM whether q and q* convey the same framing, intent, and context.

    Verdict is parsed with the shared marker rules over {YES, NO}; anything
    unparseable counts as NO (abstain) because an unreadable judge is no
    evidence of alignment.
    """
    prompt = prompts.render("trace_inversion", "judge", q1=q, q2=q_star)
    completion = chat_complete(judge, [("user", prompt)], params, seed=seed)
    verdict = parse_answer(completion.text, ["YES", "NO"])
    aligned = verdict == "YES"
    return ScorerVote(scorer="trinv_llm", abstain_vote=not aligned, score=1.0 if aligned else 0.0)


def ground_vote(q: str, q_star: str, guard: Backend) -> ScorerVote:
    """Vote abstain when the guard flags q* as not grounded in q."""
    risk, score = groundedness_check(guard, context=q, claim=q_star)
    return ScorerVote(
        scorer="ground",
        abstain_vote=risk,
        score=score if score is not None else (1.0 if risk else 0.0),
    )


def ensemble_decide(votes: Sequence[ScorerVote]) -> bool:
    """Majority vote over the present scorers.

    Abstains on a strict majority of True votes.  With an even number of
    surviving votes (a scorer errored and was dropped) a tie breaks toward
    abstaining.  With a single enabled scorer the decision is its vote.
    """
    if not votes:
        raise ConfigurationError("ensemble_decide needs at least one vote")
    n = len(votes)
    yes = sum(1 for v in votes if v.abstain_vote)
    if 2 * yes > n:
        return True
    return n % 2 == 0 and 2 * yes == n
