"""Batch benchmark CLI: run / aggregate / gap.

    abstain-eval run --method trace_inversion --dataset data/mmlu.jsonl \
        --backend main --seed 0 --config engine.json --out results/
    abstain-eval aggregate --in results/ --format both
    abstain-eval gap --in results/
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from .config import load_config
from .core import METHOD_NAMES
from .errors import EngineError, UndefinedMetricError
from .evaluation import (
    ALL_ABSTAIN,
    DOMAIN_DATASETS,
    RunResult,
    aggregate,
    emit_tables,
    gap_from_results,
    load_dataset,
    render_accuracy_text,
    render_gap_text,
    run_experiment,
    run_result_from_json,
    run_result_to_json,
)


def _cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    if args.backend:
        config.roles["model"] = args.backend
    cfg = config.method
    if args.method and args.method != cfg.method:
        cfg = replace(cfg, method=args.method)
    ctx = config.build_context(seed=args.seed)
    dataset = load_dataset(args.dataset)
    out_dir = Path(args.out)
    result = run_experiment(
        cfg,
        dataset,
        ctx,
        seed=args.seed,
        backend_id=args.backend or config.roles["model"],
        out_dir=out_dir,
    )
    out_dir.mkdir(parents=True, exist_ok=True)
    variant = "-cot" if result.cot_variant else ""
    result_path = out_dir / (
        f"run-{result.method}{variant}-{result.dataset}-{result.backend_id}-seed{result.seed}.json"
    )
    result_path.write_text(json.dumps(run_result_to_json(result), indent=2))
    r_acc = ALL_ABSTAIN if result.r_acc is None else f"{result.r_acc:.3f}"
    print(
        f"{result.method} on {result.dataset} (backend={result.backend_id}, seed={result.seed}): "
        f"a_acc={result.a_acc:.3f} r_acc={r_acc} status={result.status}"
    )
    print(f"wrote {result_path}")
    return 0 if result.status == "ok" else 1


def _load_results(in_path: str) -> list[RunResult]:
    root = Path(in_path)
    paths = sorted(root.glob("run-*.json")) if root.is_dir() else [root]
    results = []
    for path in paths:
        results.append(run_result_from_json(json.loads(path.read_text())))
    if not results:
        raise EngineError(f"no run results found under {in_path}")
    return results


def _by_method(results: Sequence[RunResult]) -> dict[str, list[RunResult]]:
    grouped: dict[str, list[RunResult]] = {}
    for result in results:
        grouped.setdefault(result.method, []).append(result)
    return grouped


def _cmd_aggregate(args: argparse.Namespace) -> int:
    results = _load_results(args.in_path)
    grouped: dict[tuple[str, bool], list[RunResult]] = {}
    for result in results:
        grouped.setdefault((result.method, result.cot_variant), []).append(result)

    rows = []
    cot_rows = []
    for (method, variant), group in sorted(grouped.items()):
        row = aggregate(group, metric=args.metric)
        rows.append(replace(row, method=f"{method}+cot") if variant else row)
        cot_rows.append((method, "cot" if variant else "regular", row))
    has_variants = any(variant for _, variant in grouped)

    print(render_accuracy_text(rows, title=f"{args.metric} per dataset"))
    formats = ("csv", "txt") if args.format == "both" else (args.format,)
    out_dir = args.out_dir or args.in_path
    written = emit_tables(
        rows,
        out_dir,
        formats=formats,
        cot_rows=cot_rows if has_variants else None,
        title=f"{args.metric} per dataset",
    )
    for path in written:
        print(f"wrote {path}")
    return 0


def _cmd_gap(args: argparse.Namespace) -> int:
    results = _load_results(args.in_path)
    gaps: dict[str, dict[str, float]] = {}
    for method, group in _by_method(results).items():
        gaps[method] = {}
        for domain in DOMAIN_DATASETS:
            try:
                gaps[method][domain] = gap_from_results(group, domain, metric=args.metric)
            except UndefinedMetricError:
                continue
    print(render_gap_text(gaps))
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="abstain-eval", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run_parser = sub.add_parser("run", help="run one method on one dataset")
    run_parser.add_argument("--method", choices=METHOD_NAMES, help="override the configured method")
    run_parser.add_argument("--dataset", required=True, help="dataset JSONL path")
    run_parser.add_argument("--backend", help="backend name from the config to use as the model")
    run_parser.add_argument("--seed", type=int, default=0)
    run_parser.add_argument("--config", required=True, help="engine config JSON")
    run_parser.add_argument("--out", required=True, help="output directory")
    run_parser.set_defaults(func=_cmd_run)

    agg_parser = sub.add_parser("aggregate", help="aggregate run results into tables")
    agg_parser.add_argument("--in", dest="in_path", required=True, help="results directory")
    agg_parser.add_argument("--format", choices=("csv", "txt", "both"), default="both")
    agg_parser.add_argument("--metric", choices=("a_acc", "r_acc"), default="a_acc")
    agg_parser.add_argument("--out-dir", default=None)
    agg_parser.set_defaults(func=_cmd_aggregate)

    gap_parser = sub.add_parser("gap", help="answerable/unanswerable gap per domain")
    gap_parser.add_argument("--in", dest="in_path", required=True, help="results directory")
    gap_parser.add_argument("--metric", choices=("a_acc", "r_acc"), default="a_acc")
    gap_parser.set_defaults(func=_cmd_gap)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
