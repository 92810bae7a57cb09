"""Dataset ingestion, seeded experiment runs, and table aggregation.

Datasets are JSONL, one sample per line:

    {"id": "...", "prompt": "...", "answerable": true,
     "references": ["B"], "dataset": "mmlu",
     "domain_group": "math_knowledge", "scenario": "answerable"}

Ingestion caps every dataset at 3500 samples via deterministic uniform
subsampling (fixed indices, independent of the experiment seed).

Aggregation mirrors the benchmark table layout: per-dataset seed means,
unweighted domain overalls, and an unweighted grand overall across all nine
datasets.  The answerable/unanswerable gap compares each domain's
answerable datasets against its mixed dataset, averaged across backends.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

from .baselines import (
    ConfidenceRecord,
    MethodConfig,
    answer_question,
    askcali_confidence,
    calibrate_threshold,
    probs_confidence,
)
from .core import (
    AbstainDecision,
    ConfusionCounts,
    QuerySample,
    abstain_accuracy,
    reliable_accuracy,
    should_abstain_label,
    tally,
)
from .engine import EngineContext, run_method
from .errors import (
    CalibrationError,
    EngineError,
    InputError,
    SchemaError,
    UndefinedMetricError,
)
from .scorers import cosine
from .trace_inversion import generate_trace, reconstruct_query

SUBSAMPLE_CAP = 3500

DOMAIN_DATASETS: dict[str, tuple[str, ...]] = {
    "math_knowledge": ("mmlu", "gsm", "umwp"),
    "comprehension": ("kcrosswords", "hellaswag", "quail"),
    "biases_safety": ("misconceptions", "propaganda", "bbq"),
}

# The dataset in each domain that mixes in unanswerable queries.
UNANSWERABLE_DATASET: dict[str, str] = {
    "math_knowledge": "umwp",
    "comprehension": "quail",
    "biases_safety": "bbq",
}

DATASET_DOMAIN: dict[str, str] = {
    name: domain for domain, names in DOMAIN_DATASETS.items() for name in names
}

DATASET_LABELS: dict[str, str] = {
    "mmlu": "MMLU",
    "gsm": "GSM",
    "umwp": "UMWP",
    "kcrosswords": "KC",
    "hellaswag": "HS",
    "quail": "Qu",
    "misconceptions": "Mis",
    "propaganda": "Prop",
    "bbq": "BBQ",
}

ALL_ABSTAIN = "all-abstain"  # sentinel for an undefined reliable accuracy


@dataclass(frozen=True)
class DatasetFile:
    name: str
    domain_group: str
    samples: tuple[QuerySample, ...]


@dataclass(frozen=True)
class RunResult:
    method: str
    dataset: str
    backend_id: str
    seed: int
    counts: ConfusionCounts
    a_acc: float
    r_acc: float | None  # None == every decision abstained
    decision_log: str | None = None
    failed_samples: int = 0
    status: str = "ok"  # "failed" when > 5% of samples errored
    cot_variant: bool = False


def subsample(samples: Sequence[QuerySample], cap: int = SUBSAMPLE_CAP) -> list[QuerySample]:
    """Deterministic uniform subsample keeping indices floor(i*n/cap).

    Identity when the list already fits; always order-preserving and
    independent of any experiment seed.
    """
    if cap <= 0:
        raise InputError("cap must be positive")
    n = len(samples)
    if n <= cap:
        return list(samples)
    return [samples[(i * n) // cap] for i in range(cap)]


def sample_from_json(doc: Mapping, fallback_id: str, default_dataset: str) -> QuerySample:
    if "prompt" not in doc:
        raise SchemaError("missing required field 'prompt'")
    if "answerable" not in doc:
        raise SchemaError("missing required field 'answerable'")
    dataset = doc.get("dataset", default_dataset)
    domain = doc.get("domain_group", DATASET_DOMAIN.get(dataset, "other"))
    try:
        return QuerySample(
            id=str(doc.get("id", fallback_id)),
            prompt=doc["prompt"],
            answerable=bool(doc["answerable"]),
            references=tuple(doc.get("references", ())),
            dataset=dataset,
            domain_group=domain,
            scenario=doc.get("scenario"),
        )
    except InputError as exc:
        raise SchemaError(str(exc)) from exc


def sample_to_json(sample: QuerySample) -> dict:
    doc = {
        "id": sample.id,
        "prompt": sample.prompt,
        "answerable": sample.answerable,
        "references": list(sample.references),
        "dataset": sample.dataset,
        "domain_group": sample.domain_group,
    }
    if sample.scenario is not None:
        doc["scenario"] = sample.scenario
    return doc


def load_dataset(path: str | Path, cap: int = SUBSAMPLE_CAP) -> DatasetFile:
    """Read and validate a JSONL dataset; schema violations carry line numbers."""
    path = Path(path)
    samples: list[QuerySample] = []
    default_dataset = path.stem
    try:
        handle = path.open()
    except OSError as exc:
        raise SchemaError(f"cannot read dataset {path}: {exc}") from exc
    with handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            try:
                samples.append(sample_from_json(doc, f"{default_dataset}-{lineno}", default_dataset))
            except SchemaError as exc:
                raise SchemaError(f"{path}:{lineno}: {exc}") from exc
    if not samples:
        raise SchemaError(f"{path}: dataset is empty")
    samples = subsample(samples, cap)
    return DatasetFile(
        name=samples[0].dataset, domain_group=samples[0].domain_group, samples=tuple(samples)
    )


def write_dataset(dataset: DatasetFile, path: str | Path) -> None:
    with Path(path).open("w") as handle:
        for sample in dataset.samples:
            handle.write(json.dumps(sample_to_json(sample)) + "\n")


# -- calibration within a run -------------------------------------------------------


def _dev_split(
    samples: Sequence[QuerySample], seed: int, dataset_name: str, fraction: float
) -> tuple[list[QuerySample], list[QuerySample]]:
    """Seeded held-out split; dev and scored never overlap."""
    n = len(samples)
    dev_count = min(max(1, round(fraction * n)), n - 1)
    rng = random.Random(f"split:{seed}:{dataset_name}")
    dev_idx = set(rng.sample(range(n), dev_count))
    dev = [samples[i] for i in sorted(dev_idx)]
    scored = [s for i, s in enumerate(samples) if i not in dev_idx]
    return dev, scored


def _confidence_records(
    cfg: MethodConfig, dev: Sequence[QuerySample], ctx: EngineContext
) -> list[ConfidenceRecord]:
    records: list[ConfidenceRecord] = []
    for sample in dev:
        try:
            if cfg.method == "probs":
                want = replace(ctx.params, want_logprobs=True)
                answer = answer_question(
                    ctx.model, sample, want, ctx.prompts, ctx.option_set, cfg.cot_variant, ctx.seed
                )
                p = min(probs_confidence(answer, k=want.top_k_logprobs), 1.0)
            else:  # ask_cali
                answer, p, _ = askcali_confidence(
                    ctx.model, sample, ctx.params, ctx.prompts, ctx.option_set, cfg.cot_variant, ctx.seed
                )
            records.append(
                ConfidenceRecord(
                    sample_id=sample.id,
                    confidence=p,
                    correct=not should_abstain_label(sample, answer),
                )
            )
        except EngineError:
            continue
    return records


def _cosine_records(dev: Sequence[QuerySample], ctx: EngineContext) -> list[ConfidenceRecord]:
    """Cosine-vs-correctness records used to calibrate the SE threshold."""
    if ctx.embedder is None:
        raise CalibrationError("se threshold calibration requires an embedding backend")
    records: list[ConfidenceRecord] = []
    for sample in dev:
        try:
            trace = generate_trace(ctx.model, sample, ctx.params, ctx.prompts, ctx.option_set, seed=ctx.seed)
            recon = reconstruct_query(ctx.model, trace, ctx.params, ctx.prompts, trace_id=sample.id, seed=ctx.seed)
            score = cosine(ctx.embedder.embed(sample.prompt), ctx.embedder.embed(recon.text))
            records.append(
                ConfidenceRecord(
                    sample_id=sample.id,
                    confidence=max(0.0, min(1.0, score)),
                    correct=not should_abstain_label(sample, trace.final_answer),
                )
            )
        except EngineError:
            continue
    return records


def _calibrated_config(
    cfg: MethodConfig, samples: Sequence[QuerySample], ctx: EngineContext, seed: int, dataset_name: str,
    fraction: float,
) -> tuple[MethodConfig, list[QuerySample]]:
    needs_p_star = cfg.method in ("probs", "ask_cali") and cfg.threshold is None
    needs_tau = cfg.method == "trace_inversion" and cfg.se_threshold is None and "se" in cfg.scorers
    if not needs_p_star and not needs_tau:
        return cfg, list(samples)
    if len(samples) < 2:
        raise CalibrationError("calibration needs at least two samples to hold out a dev split")
    dev, scored = _dev_split(samples, seed, dataset_name, fraction)
    if needs_p_star:
        records = _confidence_records(cfg, dev, ctx)
        if not records:
            raise CalibrationError("no usable confidence records from the dev split")
        cfg = replace(cfg, threshold=calibrate_threshold(records))
    if needs_tau:
        records = _cosine_records(dev, ctx)
        if not records:
            raise CalibrationError("no usable cosine records from the dev split")
        cfg = replace(cfg, se_threshold=calibrate_threshold(records))
    return cfg, scored


# -- the experiment loop --------------------------------------------------------------


def _decision_log_line(sample: QuerySample, decision: AbstainDecision) -> dict:
    return {
        "sample_id": sample.id,
        "method": decision.method,
        "abstain": decision.abstain,
        "parsed": decision.candidate.parsed,
        "votes": dict(decision.votes),
        "scores": dict(decision.scores),
        "flags": list(decision.flags),
        "latency_ms": decision.latency_ms,
        "should_abstain": should_abstain_label(sample, decision.candidate),
        "reconstructed_query": decision.reconstructed_query,
    }


def run_experiment(
    cfg: MethodConfig,
    dataset: DatasetFile,
    ctx: EngineContext,
    seed: int = 0,
    backend_id: str = "model",
    out_dir: str | Path | None = None,
    dev_fraction: float = 0.2,
    failure_limit: float = 0.05,
) -> RunResult:
    """Run one (method, dataset, backend, seed) cell and tally both metrics.

    Calibrates first when the method requires it (never on the scored
    split).  Individual sample failures are tolerated up to
    ``failure_limit``; past that the run is marked failed.
    """
    ctx = replace_context_seed(ctx, seed)
    cfg, scored = _calibrated_config(cfg, dataset.samples, ctx, seed, dataset.name, dev_fraction)

    decisions: list[AbstainDecision] = []
    kept: list[QuerySample] = []
    failed = 0
    log_lines: list[dict] = []
    for sample in scored:
        try:
            decision = run_method(cfg, sample, ctx)
        except EngineError:
            failed += 1
            continue
        decisions.append(decision)
        kept.append(sample)
        log_lines.append(_decision_log_line(sample, decision))

    if not decisions:
        raise CalibrationError(f"run produced no decisions on {dataset.name}")

    counts = tally(decisions, kept)
    a_acc = abstain_accuracy(counts)
    try:
        r_acc: float | None = reliable_accuracy(counts)
    except UndefinedMetricError:
        r_acc = None

    log_path: str | None = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        variant = "-cot" if cfg.cot_variant else ""
        log_file = out / f"decisions-{cfg.method}{variant}-{dataset.name}-{backend_id}-seed{seed}.jsonl"
        with log_file.open("w") as handle:
            for line in log_lines:
                handle.write(json.dumps(line) + "\n")
        log_path = str(log_file)

    status = "failed" if failed > failure_limit * len(scored) else "ok"
    return RunResult(
        method=cfg.method,
        dataset=dataset.name,
        backend_id=backend_id,
        seed=seed,
        counts=counts,
        a_acc=a_acc,
        r_acc=r_acc,
        decision_log=log_path,
        failed_samples=failed,
        status=status,
        cot_variant=cfg.cot_variant,
    )


def replace_context_seed(ctx: EngineContext, seed: int) -> EngineContext:
    return EngineContext(
        model=ctx.model,
        embedder=ctx.embedder,
        guard=ctx.guard,
        judge=ctx.judge,
        params=ctx.params,
        prompts=ctx.prompts,
        option_set=ctx.option_set,
        seed=seed,
    )


def run_result_to_json(result: RunResult) -> dict:
    return {
        "method": result.method,
        "dataset": result.dataset,
        "backend_id": result.backend_id,
        "seed": result.seed,
        "counts": {
            "tp": result.counts.tp,
            "tn": result.counts.tn,
            "fp": result.counts.fp,
            "fn": result.counts.fn,
        },
        "a_acc": result.a_acc,
        "r_acc": result.r_acc,
        "decision_log": result.decision_log,
        "failed_samples": result.failed_samples,
        "status": result.status,
        "cot_variant": result.cot_variant,
    }


def run_result_from_json(doc: Mapping) -> RunResult:
    counts = doc["counts"]
    return RunResult(
        method=doc["method"],
        dataset=doc["dataset"],
        backend_id=doc.get("backend_id", "model"),
        seed=int(doc.get("seed", 0)),
        counts=ConfusionCounts(
            tp=int(counts["tp"]), tn=int(counts["tn"]), fp=int(counts["fp"]), fn=int(counts["fn"])
        ),
        a_acc=float(doc["a_acc"]),
        r_acc=None if doc.get("r_acc") is None else float(doc["r_acc"]),
        decision_log=doc.get("decision_log"),
        failed_samples=int(doc.get("failed_samples", 0)),
        status=doc.get("status", "ok"),
        cot_variant=bool(doc.get("cot_variant", False)),
    )


# -- aggregation -----------------------------------------------------------------------


@dataclass(frozen=True)
class MethodRow:
    """One aggregated table row: dataset cells, domain overalls, grand overall."""

    method: str
    cells: Mapping[str, float]
    domain_overalls: Mapping[str, float]
    grand_overall: float
    missing: tuple[str, ...] = ()


def seed_mean(results: Sequence[RunResult], metric: str = "a_acc") -> dict[str, float]:
    """Mean metric per dataset across seeds; skips failed runs and None metrics."""
    by_dataset: dict[str, list[float]] = {}
    for result in results:
        if result.status != "ok":
            continue
        value = getattr(result, metric)
        if value is None:
            continue
        by_dataset.setdefault(result.dataset, []).append(value)
    return {name: sum(vals) / len(vals) for name, vals in by_dataset.items()}


def aggregate(
    results: Sequence[RunResult] | Mapping[str, float],
    method: str | None = None,
    metric: str = "a_acc",
) -> MethodRow:
    """Fold per-dataset scores into domain overalls and the grand overall.

    Accepts either RunResults (seed-averaged first; they must share one
    method) or an already-averaged {dataset: score} mapping.  Overalls are
    unweighted means of dataset cells; the grand overall is the unweighted
    mean over all nine datasets.  Missing datasets are reported, never
    imputed.
    """
    if isinstance(results, Mapping):
        cells = dict(results)
        if method is None:
            method = "scores"
    else:
        if not results:
            raise InputError("no results to aggregate")
        methods = {r.method for r in results}
        if len(methods) != 1:
            raise InputError(f"aggregate expects a single method, got {sorted(methods)}")
        method = methods.pop()
        cells = seed_mean(results, metric)

    missing: list[str] = []
    domain_overalls: dict[str, float] = {}
    for domain, names in DOMAIN_DATASETS.items():
        present = [cells[n] for n in names if n in cells]
        missing.extend(n for n in names if n not in cells)
        if present:
            domain_overalls[domain] = sum(present) / len(present)
    all_names = [n for names in DOMAIN_DATASETS.values() for n in names]
    present_all = [cells[n] for n in all_names if n in cells]
    if not present_all:
        raise InputError("no dataset cells to aggregate")
    grand = sum(present_all) / len(present_all)
    return MethodRow(
        method=method,
        cells=cells,
        domain_overalls=domain_overalls,
        grand_overall=grand,
        missing=tuple(missing),
    )


def answerable_gap(
    scores_by_backend: Mapping[str, Mapping[str, float]], domain_group: str
) -> float:
    """Mean over backends of (answerable-dataset mean - unanswerable-dataset score).

    Positive values mean the purely answerable datasets were easier than the
    domain's mixed dataset.
    """
    if domain_group not in UNANSWERABLE_DATASET:
        raise InputError(f"domain {domain_group!r} has no unanswerable dataset mapping")
    unanswerable = UNANSWERABLE_DATASET[domain_group]
    answerable = [d for d in DOMAIN_DATASETS[domain_group] if d != unanswerable]
    if not scores_by_backend:
        raise UndefinedMetricError("gap needs at least one backend's scores")
    gaps = []
    for backend, cells in scores_by_backend.items():
        needed = answerable + [unanswerable]
        absent = [d for d in needed if d not in cells]
        if absent:
            raise UndefinedMetricError(
                f"gap unavailable for {domain_group}: backend {backend!r} missing {absent}"
            )
        gaps.append(sum(cells[d] for d in answerable) / len(answerable) - cells[unanswerable])
    return sum(gaps) / len(gaps)


def gap_from_results(results: Sequence[RunResult], domain_group: str, metric: str = "a_acc") -> float:
    by_backend: dict[str, list[RunResult]] = {}
    for result in results:
        by_backend.setdefault(result.backend_id, []).append(result)
    scores = {backend: seed_mean(rs, metric) for backend, rs in by_backend.items()}
    return answerable_gap(scores, domain_group)


# -- table rendering ---------------------------------------------------------------------

_COLUMNS: list[tuple[str, str]] = [
    ("mmlu", "MMLU"),
    ("gsm", "GSM"),
    ("umwp", "UMWP"),
    ("math_knowledge", "M&K"),
    ("kcrosswords", "KC"),
    ("hellaswag", "HS"),
    ("quail", "Qu"),
    ("comprehension", "Compr"),
    ("misconceptions", "Mis"),
    ("propaganda", "Prop"),
    ("bbq", "BBQ"),
    ("biases_safety", "B&S"),
    ("overall", "Overall"),
]


def _row_values(row: MethodRow) -> dict[str, float | None]:
    values: dict[str, float | None] = {}
    for key, _ in _COLUMNS:
        if key == "overall":
            values[key] = row.grand_overall
        elif key in DOMAIN_DATASETS:
            values[key] = row.domain_overalls.get(key)
        else:
            values[key] = row.cells.get(key)
    return values


def render_accuracy_csv(rows: Sequence[MethodRow], label: str = "method") -> str:
    if not rows:
        raise InputError("no rows to render")
    header = [label] + [key for key, _ in _COLUMNS]
    lines = [",".join(header)]
    for row in rows:
        values = _row_values(row)
        lines.append(
            ",".join([row.method] + ["" if values[k] is None else repr(values[k]) for k, _ in _COLUMNS])
        )
    return "\n".join(lines) + "\n"


def parse_accuracy_csv(text: str) -> list[MethodRow]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    header = lines[0].split(",")
    rows: list[MethodRow] = []
    for line in lines[1:]:
        parts = line.split(",")
        record = dict(zip(header[1:], parts[1:]))
        cells = {
            key: float(record[key])
            for key in DATASET_LABELS
            if record.get(key) not in (None, "")
        }
        rows.append(aggregate(cells, method=parts[0]))
    return rows


def render_accuracy_text(rows: Sequence[MethodRow], title: str) -> str:
    if not rows:
        raise InputError("no rows to render")
    width = max(12, max(len(r.method) for r in rows) + 2)
    header = f"{'method':<{width}}" + "".join(f"{label:>8}" for _, label in _COLUMNS)
    out = [title, "=" * len(header), header, "-" * len(header)]
    for row in rows:
        values = _row_values(row)
        cells = "".join(
            f"{'':>8}" if values[k] is None else f"{values[k]:>8.3f}" for k, _ in _COLUMNS
        )
        out.append(f"{row.method:<{width}}" + cells)
    return "\n".join(out) + "\n"


def render_gap_csv(gaps: Mapping[str, Mapping[str, float]]) -> str:
    domains = list(DOMAIN_DATASETS)
    lines = [",".join(["method"] + domains)]
    for method, by_domain in gaps.items():
        lines.append(
            ",".join([method] + ["" if by_domain.get(d) is None else repr(by_domain[d]) for d in domains])
        )
    return "\n".join(lines) + "\n"


def render_gap_text(gaps: Mapping[str, Mapping[str, float]]) -> str:
    domains = list(DOMAIN_DATASETS)
    width = max(12, max((len(m) for m in gaps), default=12) + 2)
    header = f"{'method':<{width}}" + "".join(f"{d:>16}" for d in domains)
    out = ["answerable/unanswerable gap", header, "-" * len(header)]
    for method, by_domain in gaps.items():
        cells = "".join(
            f"{'':>16}" if by_domain.get(d) is None else f"{by_domain[d]:>16.4f}" for d in domains
        )
        out.append(f"{method:<{width}}" + cells)
    return "\n".join(out) + "\n"


def render_cot_comparison_csv(rows: Sequence[tuple[str, str, MethodRow]]) -> str:
    """Rows are (method, variant, aggregated row); variant is regular/cot."""
    if not rows:
        raise InputError("no rows to render")
    header = ["method", "variant"] + [key for key, _ in _COLUMNS]
    lines = [",".join(header)]
    for method, variant, row in rows:
        values = _row_values(row)
        lines.append(
            ",".join(
                [method, variant]
                + ["" if values[k] is None else repr(values[k]) for k, _ in _COLUMNS]
            )
        )
    return "\n".join(lines) + "\n"


def emit_tables(
    rows: Sequence[MethodRow],
    out_dir: str | Path,
    formats: Sequence[str] = ("csv", "txt"),
    gaps: Mapping[str, Mapping[str, float]] | None = None,
    cot_rows: Sequence[tuple[str, str, MethodRow]] | None = None,
    title: str = "abstain accuracy",
) -> list[Path]:
    """Write the aggregated tables; returns the files written."""
    if not rows:
        raise InputError("no aggregated rows: nothing to emit")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    def _write(name: str, text: str) -> None:
        path = out / name
        path.write_text(text)
        written.append(path)

    if "csv" in formats:
        _write("accuracy.csv", render_accuracy_csv(rows))
    if "txt" in formats:
        _write("accuracy.txt", render_accuracy_text(rows, title))
    if gaps is not None:
        if "csv" in formats:
            _write("gap.csv", render_gap_csv(gaps))
        if "txt" in formats:
            _write("gap.txt", render_gap_text(gaps))
    if cot_rows:
        if "csv" in formats:
            _write("cot_comparison.csv", render_cot_comparison_csv(cot_rows))
    return written
