"""Demo 1: the abstention confusion convention, both metrics, and threshold calibration.

Abstaining is the positive class: a true positive is an abstention that was
warranted, a false negative is an answer that should not have been given.
"""

from abstain import (
    AbstainDecision,
    ConfidenceRecord,
    ConfusionCounts,
    ModelAnswer,
    QuerySample,
    abstain_accuracy,
    calibrate_threshold,
    reliable_accuracy,
    tally,
)
from abstain.baselines import abstain_error
from abstain.errors import UndefinedMetricError

from common import banner

banner("Labeling decisions against ground truth")

samples = [
    QuerySample(id="easy", prompt="2+2?\nA. 3\nB. 4", answerable=True, references=("B",)),
    QuerySample(id="hallucinated", prompt="2+2?\nA. 3\nB. 4", answerable=True, references=("B",)),
    QuerySample(id="unanswerable", prompt="How many crates arrive tomorrow?", answerable=False),
    QuerySample(id="overcautious", prompt="3+3?\nA. 6\nB. 7", answerable=True, references=("A",)),
]
decisions = [
    AbstainDecision(abstain=False, candidate=ModelAnswer("B", "B"), method="reflect"),   # TN
    AbstainDecision(abstain=False, candidate=ModelAnswer("A", "A"), method="reflect"),   # FN
    AbstainDecision(abstain=True, candidate=ModelAnswer("A", "A"), method="reflect"),    # TP
    AbstainDecision(abstain=True, candidate=ModelAnswer("A", "A"), method="reflect"),    # FP
]
counts = tally(decisions, samples)
print(f"counts: TP={counts.tp} TN={counts.tn} FP={counts.fp} FN={counts.fn}")
print(f"abstain accuracy  = {abstain_accuracy(counts):.3f}  (decision correctness)")
print(f"reliable accuracy = {reliable_accuracy(counts):.3f}  (correctness among answered)")

banner("Reliable accuracy is undefined when everything abstains")
try:
    reliable_accuracy(ConfusionCounts(tp=3, tn=0, fp=1, fn=0))
except UndefinedMetricError as exc:
    print(f"raised as expected: {exc}")
    print('reports render this as the "all-abstain" sentinel, never as 0.0')

banner("Calibrating an abstention threshold on a dev split")
dev = [
    ConfidenceRecord("d1", 0.95, correct=True),
    ConfidenceRecord("d2", 0.90, correct=True),
    ConfidenceRecord("d3", 0.60, correct=True),
    ConfidenceRecord("d4", 0.40, correct=False),
    ConfidenceRecord("d5", 0.30, correct=False),
    ConfidenceRecord("d6", 0.55, correct=False),
]
p_star = calibrate_threshold(dev)
print(f"p* = {p_star:.2f}  (smallest grid point minimizing the abstain error)")
for t in (0.01, 0.30, p_star, 0.70, 0.95):
    print(f"  E({t:.2f}) = {abstain_error(dev, t)}")
print("answer when confidence >= p*, abstain otherwise")
