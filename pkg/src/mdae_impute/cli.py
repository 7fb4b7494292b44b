"""Command-line front end.

    mdae-impute fetch --dataset seeds
    mdae-impute amputate --input data.csv --mechanism mcar --proportion 0.2
    mdae-impute impute data_with_gaps.csv
    mdae-impute ablate --dataset lowrank --B 8
    mdae-impute benchmark --dataset lowrank,gaussian --method mean,knn,mdae
    mdae-impute sweep --dataset lowrank
    mdae-impute plot --trials out/trials.csv
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .amputation import MissingnessSpec, amputate
from .baselines import run_imputer
from .config import ConfigError, RunConfig, load_config
from .data import (
    DataMatrix,
    ParseError,
    TooFewObserved,
    ZeroVarianceFeature,
    destandardize,
    drop_constant_columns,
    read_csv,
    standardize,
    write_cells,
    write_csv,
)
from .datasets import default_cache_dir, fetch, load_dataset, load_manifest
from .evaluation import (
    Dataset,
    ExperimentPlan,
    RmseTable,
    mdb_report,
    run_ablation,
    run_comparison,
    structure_sweep,
    write_json,
)
from .mdae import fit_impute
from .network import TrainingConfig
from .plots import mdb_chart, rmse_chart

log = logging.getLogger("mdae_impute")

DEFAULT_B = {"benchmark": 12, "sweep": 12, "ablate": 8}


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="INI config file")
    for key in RunConfig.keys():
        flag = "--" + key.replace("_", "-") if key != "B" else "--B"
        if key == "drop_constant_columns":
            p.add_argument(flag, dest=key, action="store_const", const=True, default=None)
        else:
            p.add_argument(flag, dest=key, default=None, metavar=key.upper())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mdae-impute", description="mDAE imputation and benchmark harness")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fetch", help="download and cache manifest datasets")
    _add_config_flags(p)

    p = sub.add_parser("amputate", help="write a masked copy of a complete CSV plus its mask")
    p.add_argument("--input", help="complete CSV (default: first --dataset)")
    _add_config_flags(p)

    p = sub.add_parser("impute", help="fill the missing cells of a CSV")
    p.add_argument("input")
    p.add_argument("--output", help="output CSV (default: OUT_DIR/imputed.csv)")
    p.add_argument("--report", help="report JSON (default: OUT_DIR/report.json)")
    _add_config_flags(p)

    for name, text in (
        ("ablate", "ablation study of the mDAE components"),
        ("benchmark", "method comparison with RMSE tables and MDB"),
        ("sweep", "mDAE over the six grid structures"),
    ):
        p = sub.add_parser(name, help=text)
        _add_config_flags(p)

    p = sub.add_parser("plot", help="regenerate SVGs from a trial CSV")
    p.add_argument("--trials", required=True)
    _add_config_flags(p)
    return parser


def _config_from(args) -> RunConfig:
    overrides = {k: getattr(args, k, None) for k in RunConfig.keys()}
    return load_config(args.config, overrides)


def _datasets(cfg: RunConfig) -> list[Dataset]:
    out = []
    for name in cfg.dataset:
        m = load_dataset(name, cfg.cache_dir)
        if cfg.drop_constant_columns:
            m, dropped = drop_constant_columns(m)
            if dropped:
                log.info("%s: dropped constant columns %s", name, dropped)
        out.append(Dataset(Path(name).stem if Path(name).suffix else name, m))
    return out


def _out_dir(cfg: RunConfig) -> Path:
    d = Path(cfg.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write_charts(table: RmseTable, out: Path) -> list[Path]:
    paths = []
    report = mdb_report(table)
    for mech in table.mechanisms:
        for prop in table.proportions:
            tag = f"{mech}_{int(round(prop * 100))}"
            p = out / f"rmse_{tag}.svg"
            p.write_text(rmse_chart(table, mech, prop))
            paths.append(p)
            entry = report.get(mech, prop)
            if entry.methods:
                p = out / f"mdb_{tag}.svg"
                p.write_text(mdb_chart(entry))
                paths.append(p)
    return paths


def _finish(table: RmseTable, out: Path) -> int:
    if table.failures:
        write_json({"failures": [r.to_dict() for r in table.failures]}, out / "failures.json")
        log.error("%d trial(s) failed; see %s", len(table.failures), out / "failures.json")
        return 1
    return 0


def cmd_fetch(cfg: RunConfig) -> int:
    manifest = load_manifest()
    for name in cfg.dataset:
        if name in manifest.synthetic:
            print(f"{name}: synthetic, nothing to fetch")
            continue
        print(f"{name}: {fetch(manifest.datasets[name], cfg.cache_dir or default_cache_dir())}")
    return 0


def cmd_amputate(cfg: RunConfig, input_path: str | None) -> int:
    m = read_csv(input_path) if input_path else load_dataset(cfg.dataset[0], cfg.cache_dir)
    xs, _ = standardize(m)
    spec = MissingnessSpec(cfg.mechanism[0], cfg.proportion[0], cfg.seed, cfg.mar_observed_fraction)
    cells = amputate(xs, spec)
    out = _out_dir(cfg)
    write_csv(m.hide(cells), out / "masked.csv")
    write_cells(cells, out / "mask.csv")
    print(f"hid {len(cells)} of {m.n_rows * m.n_cols} cells -> {out / 'masked.csv'}, {out / 'mask.csv'}")
    return 0


def _restore_dropped(original: DataMatrix, kept: list[int], imputed: DataMatrix) -> DataMatrix:
    """Re-insert dropped columns, filling their gaps with the column's constant observed value."""
    vals = np.zeros(original.shape)
    vals[:, kept] = imputed.values
    for j in range(original.n_cols):
        if j in kept:
            continue
        obs = original.values[~original.missing[:, j], j]
        fill = obs[0] if obs.size else 0.0
        vals[:, j] = np.where(original.missing[:, j], fill, original.values[:, j])
    return DataMatrix(vals, None, original.column_names)


def cmd_impute(cfg: RunConfig, args) -> int:
    t0 = time.perf_counter()
    m = read_csv(args.input)
    work, kept = m, list(range(m.n_cols))
    if cfg.drop_constant_columns:
        work, dropped = drop_constant_columns(m)
        kept = [j for j in range(m.n_cols) if j not in dropped]
    xs, params = standardize(work)
    method = args.method_given or "mdae"
    report = None
    if method == "mdae":
        prm = cfg.mdae_params()
        imputed, sel, mu = fit_impute(
            xs, structure=prm["structure"], mu=prm["mu"], mu_grid=prm["mu_grid"],
            config=TrainingConfig(**prm["config"]), B=prm["B"], val_fraction=prm["val_fraction"],
            seed=cfg.seed, workers=cfg.workers,
        )
        report = {"selection": sel.to_dict() if sel else None, "mu": mu}
    else:
        imputed = run_imputer(xs, cfg.imputer_spec(method), cfg.seed)
    result = destandardize(imputed, params)
    # observed cells are copied from the input, not round-tripped through scaling
    result = DataMatrix(np.where(work.missing, result.values, work.values), None, work.column_names)
    if len(kept) != m.n_cols:
        result = _restore_dropped(m, kept, result)
    out = _out_dir(cfg)
    output = Path(args.output) if args.output else out / "imputed.csv"
    write_csv(result, output)
    rep = {
        "input": str(args.input), "output": str(output), "method": method, "seed": cfg.seed,
        "missing_cells": int(m.missing.sum()), "standardization": params.to_dict(),
        "kept_columns": kept, "mdae": report,
        "timings": {"total_seconds": time.perf_counter() - t0},
    }
    write_json(rep, Path(args.report) if args.report else out / "report.json")
    print(f"imputed {rep['missing_cells']} cells with {method} -> {output}")
    return 0


def _plan(cfg: RunConfig, command: str, with_methods: bool = True) -> ExperimentPlan:
    methods = [cfg.imputer_spec(m) for m in cfg.method] if with_methods else [cfg.imputer_spec("mdae")]
    return ExperimentPlan(
        datasets=_datasets(cfg), mechanisms=cfg.mechanism, proportions=cfg.proportion,
        B=cfg.B or DEFAULT_B[command], methods=methods, master_seed=cfg.seed, workers=cfg.workers,
    )


def cmd_benchmark(cfg: RunConfig) -> int:
    table, report = run_comparison(_plan(cfg, "benchmark"))
    out = _out_dir(cfg)
    (out / "trials.csv").write_text(table.to_csv())
    write_json(table.to_dict(), out / "rmse_table.json")
    write_json(report.to_dict(), out / "mdb.json")
    _write_charts(table, out)
    for e in report.entries:
        ranking = ", ".join(f"{m}={e.mdb[e.methods.index(m)]:.4f}" for m in e.ranking)
        print(f"MDB {e.mechanism} {e.proportion:g}: {ranking}")
    return _finish(table, out)


def cmd_ablate(cfg: RunConfig) -> int:
    abl = run_ablation(_plan(cfg, "ablate", with_methods=False))
    out = _out_dir(cfg)
    (out / "trials.csv").write_text(abl.table.to_csv())
    (out / "ablation.csv").write_text(abl.to_csv())
    write_json(abl.to_dict(), out / "ablation.json")
    for r in abl.rows():
        print(f"{r['dataset']} {r['mechanism']} {r['proportion']:g} {r['arm']:>17}: "
              f"{r['mean']:.3f} +- {r['sd']:.3f} ({100 * r['growth']:+.3f}%)")
    return _finish(abl.table, out)


def cmd_sweep(cfg: RunConfig) -> int:
    table = structure_sweep(_plan(cfg, "sweep", with_methods=False))
    out = _out_dir(cfg)
    (out / "trials.csv").write_text(table.to_csv())
    write_json(table.to_dict(), out / "structure_sweep.json")
    for mech in table.mechanisms:
        for prop in table.proportions:
            (out / f"structures_{mech}_{int(round(prop * 100))}.svg").write_text(rmse_chart(table, mech, prop))
    return _finish(table, out)


def cmd_plot(cfg: RunConfig, trials: str) -> int:
    table = RmseTable.from_csv(Path(trials).read_text())
    for p in _write_charts(table, _out_dir(cfg)):
        print(p)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    args.method_given = None
    if getattr(args, "method", None):
        args.method_given = str(args.method).split(",")[0].strip()
    try:
        cfg = _config_from(args)
    except ConfigError as exc:
        for k, v in exc.problems.items():
            print(f"config error: {k}: {v}", file=sys.stderr)
        return 2
    try:
        if args.command == "fetch":
            return cmd_fetch(cfg)
        if args.command == "amputate":
            return cmd_amputate(cfg, args.input)
        if args.command == "impute":
            return cmd_impute(cfg, args)
        if args.command == "ablate":
            return cmd_ablate(cfg)
        if args.command == "benchmark":
            return cmd_benchmark(cfg)
        if args.command == "sweep":
            return cmd_sweep(cfg)
        if args.command == "plot":
            return cmd_plot(cfg, args.trials)
    except (ParseError, ZeroVarianceFeature, TooFewObserved) as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"{args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    parser.error(f"unknown command {args.command}")
    return 2


if __name__ == "__main__":
    sys.exit(main())
