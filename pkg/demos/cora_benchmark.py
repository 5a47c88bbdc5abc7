"""A small slice of the method-matrix benchmark on the bundled Cora data.

Converts the raw Planetoid files, trains a few methods for a handful of
seeds each, and prints the per-method summary plus average ranks. Expect a
few minutes of runtime; pass more seeds/methods for a fuller matrix.
"""

import tempfile
from pathlib import Path

from tempgate.cli import parse_config, run_rank, run_train_matrix, write_table
from tempgate.planetoid import convert_planetoid

ROOT = Path(__file__).resolve().parent.parent
workdir = Path(tempfile.mkdtemp(prefix="tempgate_demo_"))
cora = workdir / "cora.txt"

stats = convert_planetoid(ROOT / "data" / "planetoid", "cora", cora)
print("converted Cora:", dict(zip(("nodes", "edges", "features", "classes"), stats)))

cfg = parse_config(
    f"""
dataset = {cora}
methods = GCN, GAT, Temp_only
epochs = 200
seeds = 3
threads = 2
""",
    "train",
)
fields, rows, _ = run_train_matrix(cfg)

print(f"\n{'method':<12} {'mean acc':>9} {'std':>7}")
for method in cfg["methods"]:
    mean = next(r for r in rows if r["method"] == method and r["seed"] == "mean")
    std = next(r for r in rows if r["method"] == method and r["seed"] == "std")
    print(f"{method:<12} {mean['test_metric']:>9.4f} {std['test_metric']:>7.4f}")

results_csv = workdir / "cora_results.csv"
write_table(results_csv, fields, rows)
_, ranks, _ = run_rank({"inputs": [str(results_csv)], "out": ""})
print("\naverage ranks (1 = best):")
for row in ranks:
    print(f"  {row['method']:<12} {row['average_rank']:.1f}")
print(f"\nresults written to {results_csv} (and its .json mirror)")
