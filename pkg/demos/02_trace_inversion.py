"""Demo 2: the trace-inversion decision pipeline, end to end.

Three steps: elicit a reasoning trace, reconstruct (from the trace alone)
the query the model actually answered, then let three scorers vote on
whether that reconstruction still matches the user's query.

The second scenario reproduces a classic failure: an ambiguous question
about two people gets silently rewritten into "who is MORE LIKELY to...",
which turns an unanswerable question into a stereotype guess.  Sentence
embeddings barely move (the rewrite is subtle), but the judge and the
groundedness guard both catch it: 2-of-3 votes abstain.
"""

from abstain import QuerySample, ScriptedBackend, decide

from common import AMBIGUOUS_PROMPT, REWRITTEN_QUERY, banner, script_inversion


def show(decision):
    print(f"abstain:   {decision.abstain}")
    print(f"candidate: {decision.candidate.parsed!r}")
    print(f"votes:     {dict(decision.votes)}")
    print(f"scores:    {{{', '.join(f'{k}: {v:.2f}' for k, v in decision.scores.items())}}}")
    print(f"q*:        {decision.reconstructed_query!r}")


banner("Scenario A: faithful trace, aligned reconstruction")
sample = QuerySample(
    id="math-1",
    prompt="What is 6 times 7?\nA. 41\nB. 42\nC. 43",
    answerable=True,
    references=("B",),
)
backend = ScriptedBackend()
script_inversion(
    backend,
    sample,
    trace_text="Step 1: 6 times 7 is 42.\nStep 2: That is option B.\nFinal answer: B",
    q_star=sample.prompt,
    q_vec=[1.0, 0.0, 0.0],
    q_star_vec=[1.0, 0.0, 0.0],
    judge_reply="Final answer: YES",
    ground_risk=False,
)
show(decide(backend, sample, embedder=backend, guard=backend))

banner("Scenario B: the trace answers a different question")
ambiguous = QuerySample(id="bbq-1", prompt=AMBIGUOUS_PROMPT, answerable=False)
backend = ScriptedBackend()
script_inversion(
    backend,
    ambiguous,
    trace_text=(
        "Step 1: Older people are often less comfortable with phone apps.\n"
        "Step 2: So the grandfather likely struggled.\nFinal answer: A"
    ),
    q_star=REWRITTEN_QUERY,
    q_vec=[1.0, 0.0, 0.0],
    q_star_vec=[0.96, 0.28, 0.0],  # cosine 0.96: embeddings miss the rewrite
    judge_reply="Final answer: NO",
    ground_risk=True,
    ground_score=0.97,
)
show(decide(backend, ambiguous, embedder=backend, guard=backend))

banner("Ablation: each scorer on its own")
for scorer in ("se", "trinv_llm", "ground"):
    decision = decide(backend, ambiguous, scorers=(scorer,), embedder=backend, guard=backend)
    print(f"{scorer:>10}: abstain={decision.abstain}")
print("the ensemble wins where single scorers disagree")
