from __future__ import annotations

import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from abstain.backends import ScriptedBackend
from abstain.baselines import MethodConfig
from abstain.core import ConfusionCounts, QuerySample
from abstain.engine import EngineContext
from abstain.errors import InputError, SchemaError, UndefinedMetricError
from abstain.evaluation import (
    DatasetFile,
    RunResult,
    aggregate,
    answerable_gap,
    emit_tables,
    gap_from_results,
    load_dataset,
    parse_accuracy_csv,
    render_accuracy_csv,
    run_experiment,
    run_result_from_json,
    run_result_to_json,
    sample_to_json,
    seed_mean,
    subsample,
    write_dataset,
)
from abstain.prompts import DEFAULT_PROMPTS


def _mk_samples(n, prefix="s"):
    return [
        QuerySample(id=f"{prefix}{i}", prompt=f"Q{i}?", answerable=False) for i in range(n)
    ]


# -- subsample -------------------------------------------------------------------


def test_subsample_formula_indices():
    samples = _mk_samples(10)
    picked = subsample(samples, cap=5)
    assert [s.id for s in picked] == ["s0", "s2", "s4", "s6", "s8"]


def test_subsample_identity_at_cap():
    samples = _mk_samples(5)
    assert subsample(samples, cap=5) == samples


def test_subsample_is_idempotent_and_order_preserving():
    samples = _mk_samples(23)
    once = subsample(samples, cap=7)
    assert subsample(once, cap=7) == once
    ids = [int(s.id[1:]) for s in once]
    assert ids == sorted(ids)


def test_subsample_repeated_calls_identical():
    samples = _mk_samples(101)
    assert subsample(samples, cap=17) == subsample(samples, cap=17)


@given(st.integers(min_value=1, max_value=300), st.integers(min_value=1, max_value=100))
def test_subsample_size_and_uniqueness(n, cap):
    samples = _mk_samples(n)
    picked = subsample(samples, cap)
    assert len(picked) == min(n, cap)
    assert len({s.id for s in picked}) == len(picked)


# -- dataset io ------------------------------------------------------------------


def _write_lines(path, lines):
    path.write_text("\n".join(json.dumps(line) for line in lines) + "\n")


def test_load_dataset_valid_file(tmp_path):
    path = tmp_path / "mmlu.jsonl"
    _write_lines(
        path,
        [
            {"id": "a", "prompt": "Q1?\nA. x\nB. y", "answerable": True, "references": ["B"], "dataset": "mmlu"},
            {"id": "b", "prompt": "Q2?", "answerable": False, "dataset": "mmlu"},
            {"id": "c", "prompt": "Q3?\nA. x\nB. y", "answerable": True, "references": ["A"], "dataset": "mmlu"},
        ],
    )
    dataset = load_dataset(path)
    assert dataset.name == "mmlu"
    assert dataset.domain_group == "math_knowledge"
    assert len(dataset.samples) == 3


def test_load_dataset_rejects_answerable_without_references(tmp_path):
    path = tmp_path / "bad.jsonl"
    _write_lines(
        path,
        [
            {"id": "a", "prompt": "ok?", "answerable": False},
            {"id": "b", "prompt": "broken?", "answerable": True, "references": []},
        ],
    )
    with pytest.raises(SchemaError) as exc_info:
        load_dataset(path)
    assert ":2:" in str(exc_info.value)


def test_load_dataset_requires_answerable_flag(tmp_path):
    path = tmp_path / "bad.jsonl"
    _write_lines(path, [{"id": "a", "prompt": "ok?"}])
    with pytest.raises(SchemaError) as exc_info:
        load_dataset(path)
    assert "answerable" in str(exc_info.value)


def test_load_dataset_rejects_invalid_json(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"id": "a", "prompt": "ok?", "answerable": false}\nnot json\n')
    with pytest.raises(SchemaError) as exc_info:
        load_dataset(path)
    assert ":2:" in str(exc_info.value)


def test_load_dataset_caps_at_3500(tmp_path):
    path = tmp_path / "big.jsonl"
    with path.open("w") as fh:
        for i in range(5000):
            fh.write(json.dumps({"id": str(i), "prompt": f"Q{i}?", "answerable": False}) + "\n")
    dataset = load_dataset(path)
    assert len(dataset.samples) == 3500


def test_dataset_round_trip(tmp_path):
    samples = [
        QuerySample(id="x", prompt="P?\nA. 1\nB. 2", answerable=True, references=("A",),
                    dataset="gsm", domain_group="math_knowledge", scenario="answerable"),
        QuerySample(id="y", prompt="unclear?", answerable=False, dataset="gsm",
                    domain_group="math_knowledge", scenario="underspecified_aim"),
    ]
    dataset = DatasetFile(name="gsm", domain_group="math_knowledge", samples=tuple(samples))
    path = tmp_path / "gsm.jsonl"
    write_dataset(dataset, path)
    loaded = load_dataset(path)
    assert [sample_to_json(s) for s in loaded.samples] == [sample_to_json(s) for s in samples]


# -- run_experiment -----------------------------------------------------------------


def _reflect_fixture(outcomes, dataset_name="gsm"):
    """Script a reflect run; outcomes are (answer_correct, verdict_a) pairs."""
    backend = ScriptedBackend()
    samples = []
    for i, (correct, verdict_a) in enumerate(outcomes):
        prompt = f"Question {i}: pick the even number.\nA. 3\nB. 4"
        sample = QuerySample(
            id=f"{dataset_name}-{i}", prompt=prompt, answerable=True, references=("B",),
            dataset=dataset_name, domain_group="math_knowledge",
        )
        samples.append(sample)
        reply = "Answer: B" if correct else "Answer: A"
        backend.add_chat([("user", prompt)], reply)
        verdict_prompt = DEFAULT_PROMPTS.render(
            "reflect", "verdict", question=prompt, answer=reply
        )
        backend.add_chat([("user", verdict_prompt)], "Final answer: A" if verdict_a else "Final answer: B")
    dataset = DatasetFile(name=dataset_name, domain_group="math_knowledge", samples=tuple(samples))
    return backend, dataset


def test_scripted_perfect_run_has_full_abstain_accuracy():
    backend, dataset = _reflect_fixture([(True, True)] * 6)
    result = run_experiment(
        MethodConfig(method="reflect"), dataset, EngineContext(model=backend), seed=0
    )
    assert result.a_acc == 1.0
    assert result.r_acc == 1.0
    assert result.counts == ConfusionCounts(tp=0, tn=6, fp=0, fn=0)
    assert result.status == "ok"


def test_scripted_run_reproduces_hand_built_confusion_counts():
    # verdict False on a wrong answer -> TP; verdict True on a correct -> TN;
    # verdict False on a correct -> FP; verdict True on a wrong -> FN
    outcomes = [(False, False)] * 3 + [(True, True)] * 4 + [(True, False)] * 2 + [(False, True)]
    backend, dataset = _reflect_fixture(outcomes)
    result = run_experiment(
        MethodConfig(method="reflect"), dataset, EngineContext(model=backend), seed=0
    )
    assert result.counts == ConfusionCounts(tp=3, tn=4, fp=2, fn=1)
    assert result.a_acc == pytest.approx(0.7)
    assert result.r_acc == pytest.approx(0.8)


def test_scripted_run_is_deterministic():
    outcomes = [(True, True), (False, False), (True, False), (False, True), (True, True)]
    backend, dataset = _reflect_fixture(outcomes)
    ctx = EngineContext(model=backend)
    cfg = MethodConfig(method="reflect")
    first = run_experiment(cfg, dataset, ctx, seed=1)
    second = run_experiment(cfg, dataset, ctx, seed=1)
    assert first == second
    assert json.dumps(run_result_to_json(first)) == json.dumps(run_result_to_json(second))


def test_all_abstain_run_reports_sentinel_not_zero():
    backend, dataset = _reflect_fixture([(True, False), (False, False), (True, False)])
    result = run_experiment(
        MethodConfig(method="reflect"), dataset, EngineContext(model=backend), seed=0
    )
    assert result.r_acc is None
    doc = run_result_to_json(result)
    assert doc["r_acc"] is None
    assert run_result_from_json(doc) == result


def test_run_marked_failed_above_failure_limit():
    backend, dataset = _reflect_fixture([(True, True)] * 8)
    # two extra samples with no fixtures -> hard failures (20% > 5%)
    extra = tuple(
        QuerySample(id=f"gsm-x{i}", prompt=f"unscripted {i}?", answerable=True,
                    references=("B",), dataset="gsm", domain_group="math_knowledge")
        for i in range(2)
    )
    dataset = DatasetFile(dataset.name, dataset.domain_group, dataset.samples + extra)
    result = run_experiment(
        MethodConfig(method="reflect"), dataset, EngineContext(model=backend), seed=0
    )
    assert result.failed_samples == 2
    assert result.status == "failed"
    assert result.counts.total == 8


def test_probs_run_calibrates_on_held_out_dev_split(tmp_path):
    backend = ScriptedBackend()
    samples = []
    for i in range(10):
        prompt = f"Question {i}: parity?\nA. 3\nB. 4"
        samples.append(
            QuerySample(id=f"gsm-{i}", prompt=prompt, answerable=True, references=("B",),
                        dataset="gsm", domain_group="math_knowledge")
        )
        backend.add_chat([("user", prompt)], "Answer: B", logprobs=[[("B", math.log(0.9))]])
    dataset = DatasetFile(name="gsm", domain_group="math_knowledge", samples=tuple(samples))
    cfg = MethodConfig(method="probs")  # threshold=None -> calibrate
    result = run_experiment(
        cfg, dataset, EngineContext(model=backend), seed=0, out_dir=tmp_path
    )
    # 20% of 10 held out; every dev record is correct at 0.9 -> p* = 0.01
    assert result.counts.total == 8
    assert result.a_acc == 1.0
    log_lines = [
        json.loads(line)
        for line in open(result.decision_log)
    ]
    assert len(log_lines) == 8
    assert all(line["scores"]["threshold"] == 0.01 for line in log_lines)
    assert all(line["abstain"] is False for line in log_lines)


def test_decision_log_written_and_parseable(tmp_path):
    backend, dataset = _reflect_fixture([(True, True), (False, False)])
    result = run_experiment(
        MethodConfig(method="reflect"), dataset, EngineContext(model=backend),
        seed=2, out_dir=tmp_path, backend_id="scripted",
    )
    assert result.decision_log is not None
    lines = [json.loads(line) for line in open(result.decision_log)]
    assert [line["sample_id"] for line in lines] == ["gsm-0", "gsm-1"]
    assert {line["method"] for line in lines} == {"reflect"}
    assert all("should_abstain" in line and "latency_ms" in line for line in lines)


# -- aggregation -----------------------------------------------------------------------


def test_aggregate_domain_overall_matches_hand_mean():
    row = aggregate({"mmlu": 0.477, "gsm": 0.509, "umwp": 0.488}, method="probs")
    assert row.domain_overalls["math_knowledge"] == pytest.approx((0.477 + 0.509 + 0.488) / 3)
    assert row.grand_overall == pytest.approx((0.477 + 0.509 + 0.488) / 3)
    assert set(row.missing) == {"kcrosswords", "hellaswag", "quail", "misconceptions", "propaganda", "bbq"}


def test_aggregate_single_dataset_equals_value():
    row = aggregate({"bbq": 0.42}, method="reflect")
    assert row.domain_overalls["biases_safety"] == pytest.approx(0.42)
    assert row.grand_overall == pytest.approx(0.42)


def _result(method, dataset, seed, a_acc, backend_id="b1"):
    return RunResult(
        method=method, dataset=dataset, backend_id=backend_id, seed=seed,
        counts=ConfusionCounts(tp=1, tn=1, fp=1, fn=1), a_acc=a_acc, r_acc=0.5,
    )


def test_aggregate_seed_means_then_domains():
    results = [
        _result("reflect", "mmlu", 0, 0.4),
        _result("reflect", "mmlu", 1, 0.6),
        _result("reflect", "gsm", 0, 0.8),
    ]
    assert seed_mean(results) == {"mmlu": pytest.approx(0.5), "gsm": pytest.approx(0.8)}
    row = aggregate(results)
    assert row.method == "reflect"
    assert row.cells["mmlu"] == pytest.approx(0.5)
    assert row.domain_overalls["math_knowledge"] == pytest.approx(0.65)


def test_aggregate_rejects_mixed_methods():
    with pytest.raises(InputError):
        aggregate([_result("reflect", "mmlu", 0, 0.5), _result("probs", "gsm", 0, 0.5)])


def test_aggregate_rejects_empty():
    with pytest.raises(InputError):
        aggregate([])


def test_failed_runs_are_excluded_from_means():
    ok = _result("reflect", "mmlu", 0, 0.6)
    failed = RunResult(
        method="reflect", dataset="mmlu", backend_id="b1", seed=1,
        counts=ConfusionCounts(1, 1, 1, 1), a_acc=0.0, r_acc=None, status="failed",
    )
    assert seed_mean([ok, failed]) == {"mmlu": pytest.approx(0.6)}


# -- answerable gap ------------------------------------------------------------------------


def test_gap_zero_when_scores_equal():
    scores = {"b1": {"mmlu": 0.5, "gsm": 0.5, "umwp": 0.5}}
    assert answerable_gap(scores, "math_knowledge") == pytest.approx(0.0)


def test_gap_hand_computed():
    scores = {"b1": {"mmlu": 0.6, "gsm": 0.8, "umwp": 0.4}}
    assert answerable_gap(scores, "math_knowledge") == pytest.approx(0.3)


def test_gap_averages_across_backends():
    scores = {
        "b1": {"misconceptions": 0.6, "propaganda": 0.6, "bbq": 0.4},
        "b2": {"misconceptions": 0.8, "propaganda": 0.8, "bbq": 0.4},
    }
    assert answerable_gap(scores, "biases_safety") == pytest.approx((0.2 + 0.4) / 2)


def test_gap_missing_dataset_is_unavailable():
    with pytest.raises(UndefinedMetricError):
        answerable_gap({"b1": {"mmlu": 0.5, "gsm": 0.5}}, "math_knowledge")


def test_gap_from_results_seed_means_first():
    results = [
        _result("reflect", "mmlu", 0, 0.6), _result("reflect", "mmlu", 1, 0.8),
        _result("reflect", "gsm", 0, 0.7), _result("reflect", "umwp", 0, 0.5),
    ]
    assert gap_from_results(results, "math_knowledge") == pytest.approx((0.7 + 0.7) / 2 - 0.5)


# -- tables ------------------------------------------------------------------------------


def _full_row(method="reflect", base=0.5):
    cells = {
        name: base + i * 0.01
        for i, name in enumerate(
            ["mmlu", "gsm", "umwp", "kcrosswords", "hellaswag", "quail",
             "misconceptions", "propaganda", "bbq"]
        )
    }
    return aggregate(cells, method=method)


def test_accuracy_csv_has_thirteen_numeric_columns():
    csv_text = render_accuracy_csv([_full_row()])
    header = csv_text.splitlines()[0].split(",")
    assert len(header) == 14  # method + 9 datasets + 3 domain overalls + grand
    first = csv_text.splitlines()[1].split(",")
    assert len(first) == 14
    assert all(cell for cell in first[1:])


def test_accuracy_csv_round_trips():
    rows = [_full_row("reflect", 0.5), _full_row("probs", 0.6)]
    parsed = parse_accuracy_csv(render_accuracy_csv(rows))
    assert [r.method for r in parsed] == ["reflect", "probs"]
    for original, reparsed in zip(rows, parsed):
        assert reparsed.cells == original.cells
        assert reparsed.grand_overall == pytest.approx(original.grand_overall)
        assert reparsed.domain_overalls == original.domain_overalls


def test_emit_tables_writes_requested_formats(tmp_path):
    rows = [_full_row()]
    gaps = {"reflect": {"math_knowledge": 0.1, "comprehension": 0.2, "biases_safety": 0.3}}
    cot = [("reflect", "regular", _full_row()), ("reflect", "cot", _full_row(base=0.45))]
    written = emit_tables(rows, tmp_path, formats=("csv", "txt"), gaps=gaps, cot_rows=cot)
    names = {p.name for p in written}
    assert names == {"accuracy.csv", "accuracy.txt", "gap.csv", "gap.txt", "cot_comparison.csv"}
    assert all(p.read_text() for p in written)


def test_emit_tables_rejects_empty():
    with pytest.raises(InputError):
        emit_tables([], "/tmp/nowhere")


def test_run_result_json_round_trip():
    result = _result("compete", "bbq", 2, 0.625)
    assert run_result_from_json(run_result_to_json(result)) == result
