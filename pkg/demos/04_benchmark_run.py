"""Demo 4: a seeded benchmark run over synthetic datasets, aggregated into tables.

Builds mimic datasets for one domain (mmlu/gsm/umwp shapes), scripts a
reflect pipeline over every sample, runs three seeds per dataset, and folds
the results into the benchmark table layout plus the answerable-vs-
unanswerable gap.  Everything is offline and reproducible bit for bit.
"""

from pathlib import Path

from abstain import MethodConfig, ScriptedBackend
from abstain.adapters import make_mimic
from abstain.engine import EngineContext
from abstain.evaluation import (
    aggregate,
    emit_tables,
    gap_from_results,
    render_accuracy_text,
    run_experiment,
)

from common import banner, script_reflect

OUT = Path(__file__).parent / "output"

banner("Scripting a model that trusts itself everywhere")
datasets = {name: make_mimic(name, n=12, seed=0) for name in ("mmlu", "gsm", "umwp")}
backend = ScriptedBackend()
for dataset in datasets.values():
    for sample in dataset.samples:
        # answers correctly when possible, hallucinates option A otherwise,
        # and always endorses itself on review
        reply = f"Answer: {sample.references[0]}" if sample.answerable else "Answer: A"
        script_reflect(backend, sample, reply, "Final answer: A")
total = sum(len(d.samples) for d in datasets.values())
print(f"scripted reflect fixtures for {total} samples across {len(datasets)} datasets")

banner("Running reflect x 3 datasets x 3 seeds")
results = []
for dataset in datasets.values():
    for seed in (0, 1, 2):
        result = run_experiment(
            MethodConfig(method="reflect"),
            dataset,
            EngineContext(model=backend),
            seed=seed,
            backend_id="scripted",
            out_dir=OUT / "logs",
        )
        results.append(result)
        r_acc = "all-abstain" if result.r_acc is None else f"{result.r_acc:.3f}"
        print(f"  {result.dataset:<6} seed {seed}: a_acc={result.a_acc:.3f} r_acc={r_acc}")

banner("Aggregated table (seed means, domain overall, grand overall)")
row = aggregate(results)
print(render_accuracy_text([row], title="abstain accuracy"))

banner("Answerable vs unanswerable gap")
gap = gap_from_results(results, "math_knowledge")
print(f"math_knowledge gap = {gap:.4f}")
print("positive: the mixed dataset (umwp shape) is harder, because this")
print("scripted model never abstains and misses every unanswerable item")

written = emit_tables([row], OUT, gaps={"reflect": {"math_knowledge": gap}})
banner("Files written")
for path in written:
    print(f"  {path}")
