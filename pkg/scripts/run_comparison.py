"""Method comparison: RMSE per dataset and MDB per (mechanism, proportion) cell.

    python3 scripts/run_comparison.py --dataset lowrank,gaussian --mechanism mcar,mar,mnar --B 12
"""

import argparse
from pathlib import Path

from mdae_impute.baselines import ImputerSpec
from mdae_impute.datasets import load_dataset
from mdae_impute.evaluation import Dataset, ExperimentPlan, run_comparison, write_json
from mdae_impute.plots import mdb_chart, rmse_chart

METHODS = "mean,knn,softimpute,chained_ridge,mdae"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dataset", default="lowrank,gaussian")
    ap.add_argument("--mechanism", default="mcar")
    ap.add_argument("--proportion", default="0.2")
    ap.add_argument("--method", default=METHODS)
    ap.add_argument("--B", type=int, default=12)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="out/comparison")
    a = ap.parse_args()

    plan = ExperimentPlan(
        [Dataset(name, load_dataset(name)) for name in a.dataset.split(",")],
        a.mechanism.split(","),
        [float(v) for v in a.proportion.split(",")],
        a.B,
        [ImputerSpec(m) for m in a.method.split(",")],
        master_seed=a.seed,
        workers=a.workers,
    )
    table, report = run_comparison(plan)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "trials.csv").write_text(table.to_csv())
    write_json(table.to_dict(), out / "rmse_table.json")
    write_json(report.to_dict(), out / "mdb.json")
    for e in report.entries:
        tag = f"{e.mechanism}_{round(e.proportion * 100)}"
        (out / f"rmse_{tag}.svg").write_text(rmse_chart(table, e.mechanism, e.proportion))
        if e.methods:
            (out / f"mdb_{tag}.svg").write_text(mdb_chart(e))
        ranked = ", ".join(f"{m} {e.mdb[e.methods.index(m)]:.4f}" for m in e.ranking)
        print(f"{e.mechanism} {e.proportion:.0%}: {ranked}")


if __name__ == "__main__":
    main()
