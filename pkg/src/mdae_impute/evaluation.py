"""Benchmark protocol: RMSE on artificial missing cells, B-repeat aggregation, MDB ranking,
the ablation runner and the structure sweep.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ._parallel import derive_seed, map_jobs
from .amputation import MECHANISMS, MissingnessSpec, amputate
from .baselines import ImputerSpec, run_imputer
from .data import CellSet, DataMatrix, destandardize, format_number, standardize

TRIAL_COLUMNS = ("dataset", "mechanism", "proportion", "method", "repeat", "seed", "rmse")
ABLATION_ARMS = ("full", "no_modified_loss", "random_mu", "undercomplete")


def rmse(x, z, omega_perp: CellSet) -> float:
    """Root mean squared error between ``x`` and ``z`` over the cells of ``omega_perp``."""
    xv = x.values if isinstance(x, DataMatrix) else np.asarray(x, dtype=np.float64)
    zv = z.values if isinstance(z, DataMatrix) else np.asarray(z, dtype=np.float64)
    if len(omega_perp) == 0:
        raise ValueError("rmse over an empty cell set")
    d = xv[omega_perp.mask] - zv[omega_perp.mask]
    return math.sqrt(float(d @ d) / d.size)


def mdb(r) -> np.ndarray:
    """Mean distance to the best: ``mean_i (R[i, j] - min_l R[i, l])`` for every method ``j``.

    Rows of ``r`` are datasets, columns are methods.
    """
    r = np.asarray(r, dtype=np.float64)
    if r.ndim != 2 or r.size == 0:
        raise ValueError("expected a non-empty datasets x methods matrix")
    return (r - r.min(axis=1, keepdims=True)).mean(axis=0)


def aggregate(values: Sequence[float]) -> tuple[float, float]:
    """Mean and sample (B - 1) standard deviation; the sd of a single value is 0."""
    a = np.asarray(values, dtype=np.float64)
    if a.size == 0:
        raise ValueError("cannot aggregate an empty list")
    if a.size == 1:
        return float(a[0]), 0.0
    return float(a.mean()), float(a.std(ddof=1))


@dataclass(frozen=True)
class Dataset:
    name: str
    matrix: DataMatrix


@dataclass
class ExperimentPlan:
    datasets: Sequence[Dataset]
    mechanisms: Sequence[str] = ("mcar",)
    proportions: Sequence[float] = (0.2,)
    B: int = 12
    methods: Sequence[ImputerSpec] = ()
    master_seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if not self.datasets or not self.mechanisms or not self.proportions:
            raise ValueError("datasets, mechanisms and proportions must be non-empty")
        for mech in self.mechanisms:
            if mech not in MECHANISMS:
                raise ValueError(f"unknown mechanism {mech!r}")
        for p in self.proportions:
            if not 0 < p < 1:
                raise ValueError(f"proportion {p} outside (0, 1)")
        if self.B < 1:
            raise ValueError("B must be >= 1")
        names = [d.name for d in self.datasets]
        if len(set(names)) != len(names):
            raise ValueError("dataset names must be unique")


def trial_seed(master_seed: int, dataset: str, mechanism: str, proportion: float, repeat: int) -> int:
    """Seed shared by every method on one trial, so all of them see the same mask."""
    return derive_seed(master_seed, "trial", dataset, mechanism, format_number(proportion), repeat)


@dataclass
class TrialRecord:
    dataset: str
    mechanism: str
    proportion: float
    method: str
    repeat: int
    seed: int
    rmse: float = math.nan
    rmse_original: float = math.nan
    mask_digest: str = ""
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        for k in ("rmse", "rmse_original"):
            if not math.isfinite(d[k]):
                d[k] = None
        return d


def _prepare(dataset: DataMatrix, mechanism: str, proportion: float, seed: int):
    if dataset.has_missing:
        raise ValueError("benchmark datasets must be complete")
    xs, params = standardize(dataset)
    mask = amputate(xs, MissingnessSpec(mechanism, proportion, seed=derive_seed(seed, "mask")))
    return xs, params, mask


def run_trial(
    dataset: DataMatrix, mechanism: str, proportion: float, method_spec: ImputerSpec, seed: int
) -> float:
    """Standardize, amputate, impute, and score the RMSE on the hidden cells."""
    xs, _, mask = _prepare(dataset, mechanism, proportion, seed)
    out = run_imputer(xs.hide(mask), method_spec, derive_seed(seed, "impute"))
    return rmse(xs, out, mask)


def _trial_job(job) -> TrialRecord:
    ds, mech, prop, spec, repeat, seed = job
    rec = TrialRecord(ds.name, mech, prop, spec.name, repeat, seed)
    try:
        xs, params, mask = _prepare(ds.matrix, mech, prop, seed)
        rec.mask_digest = hashlib.sha1(np.packbits(mask.mask).tobytes()).hexdigest()
        out = run_imputer(xs.hide(mask), spec, derive_seed(seed, "impute"))
        if out.has_missing or not np.array_equal(out.values[~mask.mask], xs.values[~mask.mask]):
            raise RuntimeError("imputer broke the observed-cell contract")
        rec.rmse = rmse(xs, out, mask)
        rec.rmse_original = rmse(ds.matrix, destandardize(out, params), mask)
    except Exception as exc:  # noqa: BLE001 - per-cell failures are recorded, not fatal
        rec.error = f"{type(exc).__name__}: {exc}"
    return rec


@dataclass
class RmseTable:
    records: list[TrialRecord]
    datasets: list[str] = field(default_factory=list)
    methods: list[str] = field(default_factory=list)
    mechanisms: list[str] = field(default_factory=list)
    proportions: list[float] = field(default_factory=list)

    def __post_init__(self):
        def ordered(attr):
            seen = []
            for r in self.records:
                v = getattr(r, attr)
                if v not in seen:
                    seen.append(v)
            return seen

        self.datasets = self.datasets or ordered("dataset")
        self.methods = self.methods or ordered("method")
        self.mechanisms = self.mechanisms or ordered("mechanism")
        self.proportions = self.proportions or ordered("proportion")

    def cell(self, dataset, mechanism, proportion, method) -> list[TrialRecord]:
        return sorted(
            (
                r
                for r in self.records
                if r.dataset == dataset and r.mechanism == mechanism
                and r.proportion == proportion and r.method == method
            ),
            key=lambda r: r.repeat,
        )

    def values(self, dataset, mechanism, proportion, method) -> list[float]:
        return [r.rmse for r in self.cell(dataset, mechanism, proportion, method)]

    def is_valid(self, dataset, mechanism, proportion, method) -> bool:
        recs = self.cell(dataset, mechanism, proportion, method)
        return bool(recs) and all(r.ok for r in recs)

    def summary(self, dataset, mechanism, proportion, method) -> tuple[float, float]:
        if not self.is_valid(dataset, mechanism, proportion, method):
            return math.nan, math.nan
        return aggregate(self.values(dataset, mechanism, proportion, method))

    def keys(self):
        for d in self.datasets:
            for mech in self.mechanisms:
                for p in self.proportions:
                    for m in self.methods:
                        yield d, mech, p, m

    @property
    def failures(self) -> list[TrialRecord]:
        return [r for r in self.records if not r.ok]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRIAL_COLUMNS)
        for r in self.records:
            w.writerow([
                r.dataset, r.mechanism, format_number(r.proportion), r.method, r.repeat, r.seed,
                format_number(r.rmse) if r.ok else "",
            ])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "RmseTable":
        recs = []
        for row in csv.DictReader(io.StringIO(text)):
            ok = row["rmse"] != ""
            recs.append(TrialRecord(
                row["dataset"], row["mechanism"], float(row["proportion"]), row["method"],
                int(row["repeat"]), int(row["seed"]),
                float(row["rmse"]) if ok else math.nan,
                error=None if ok else "failed",
            ))
        return cls(recs)

    def to_dict(self) -> dict:
        cells = []
        for d, mech, p, m in self.keys():
            mean, sd = self.summary(d, mech, p, m)
            recs = self.cell(d, mech, p, m)
            cells.append({
                "dataset": d, "mechanism": mech, "proportion": p, "method": m,
                "valid": self.is_valid(d, mech, p, m),
                "rmse": [r.rmse if r.ok else None for r in recs],
                "rmse_original_scale": [r.rmse_original if r.ok else None for r in recs],
                "mean": mean if math.isfinite(mean) else None,
                "sd": sd if math.isfinite(sd) else None,
            })
        return {
            "datasets": self.datasets, "mechanisms": self.mechanisms,
            "proportions": self.proportions, "methods": self.methods,
            "cells": cells, "failures": [r.to_dict() for r in self.failures],
            "note": "rmse is on the standardized scale; rmse_original_scale is a convenience echo",
        }


@dataclass
class MdbEntry:
    mechanism: str
    proportion: float
    methods: list[str]
    mdb: list[float]
    excluded: list[str]

    @property
    def ranking(self) -> list[str]:
        order = sorted(range(len(self.methods)), key=lambda j: (self.mdb[j], j))
        return [self.methods[j] for j in order]

    def to_dict(self) -> dict:
        return {
            "mechanism": self.mechanism, "proportion": self.proportion,
            "methods": self.methods, "mdb": self.mdb,
            "ranking": self.ranking, "excluded": self.excluded,
        }


@dataclass
class MdbReport:
    entries: list[MdbEntry]

    def get(self, mechanism: str, proportion: float) -> MdbEntry:
        for e in self.entries:
            if e.mechanism == mechanism and e.proportion == proportion:
                return e
        raise KeyError((mechanism, proportion))

    def to_dict(self) -> dict:
        return {"entries": [e.to_dict() for e in self.entries]}


def mdb_report(table: RmseTable) -> MdbReport:
    """MDB per (mechanism, proportion) over the methods valid on every dataset."""
    entries = []
    for mech in table.mechanisms:
        for p in table.proportions:
            ok = [m for m in table.methods if all(table.is_valid(d, mech, p, m) for d in table.datasets)]
            bad = [m for m in table.methods if m not in ok]
            if ok:
                r = np.array([[table.summary(d, mech, p, m)[0] for m in ok] for d in table.datasets])
                vals = [float(v) for v in mdb(r)]
            else:
                vals = []
            entries.append(MdbEntry(mech, p, ok, vals, bad))
    return MdbReport(entries)


def _run_specs(plan: ExperimentPlan, specs: Sequence[ImputerSpec]) -> RmseTable:
    jobs = []
    for ds in plan.datasets:
        for mech in plan.mechanisms:
            for p in plan.proportions:
                for b in range(plan.B):
                    seed = trial_seed(plan.master_seed, ds.name, mech, p, b)
                    for spec in specs:
                        jobs.append((ds, mech, p, spec, b, seed))
    records = map_jobs(_trial_job, jobs, plan.workers)
    return RmseTable(
        records,
        datasets=[d.name for d in plan.datasets],
        methods=[s.name for s in specs],
        mechanisms=list(plan.mechanisms),
        proportions=list(plan.proportions),
    )


def run_comparison(plan: ExperimentPlan) -> tuple[RmseTable, MdbReport]:
    """B paired trials per (dataset, mechanism, proportion); MDB from the mean-RMSE matrix."""
    if not plan.methods:
        raise ValueError("plan has no methods")
    names = [s.name for s in plan.methods]
    if len(set(names)) != len(names):
        raise ValueError("method labels must be unique")
    table = _run_specs(plan, plan.methods)
    return table, mdb_report(table)


def ablation_arms(base: ImputerSpec | None = None) -> list[ImputerSpec]:
    """The full mDAE and the three variants each missing one component."""
    prm = dict(base.params) if base is not None else {}
    prm.setdefault("mu", "select")
    full = {**prm, "structure": 5, "loss": "masked"}
    return [
        ImputerSpec("mdae", full, "full"),
        ImputerSpec("mdae", {**full, "loss": "full"}, "no_modified_loss"),
        ImputerSpec("mdae", {**full, "mu": "random"}, "random_mu"),
        ImputerSpec("mdae", {**full, "structure": 2}, "undercomplete"),
    ]


@dataclass
class AblationTable:
    table: RmseTable

    def growth(self, dataset, mechanism, proportion, arm) -> float:
        """Relative increase of the arm's mean RMSE over the full method's."""
        base = self.table.summary(dataset, mechanism, proportion, "full")[0]
        mean = self.table.summary(dataset, mechanism, proportion, arm)[0]
        return (mean - base) / base

    def rows(self) -> list[dict]:
        out = []
        for d, mech, p, arm in self.table.keys():
            mean, sd = self.table.summary(d, mech, p, arm)
            out.append({
                "dataset": d, "mechanism": mech, "proportion": p, "arm": arm,
                "mean": mean, "sd": sd, "growth": self.growth(d, mech, p, arm),
            })
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["dataset", "mechanism", "proportion", "arm", "mean", "sd", "growth"])
        for r in self.rows():
            w.writerow([r["dataset"], r["mechanism"], format_number(r["proportion"]), r["arm"],
                        format_number(r["mean"]), format_number(r["sd"]), format_number(r["growth"])])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"rows": self.rows(), "table": self.table.to_dict()}


def run_ablation(plan: ExperimentPlan) -> AblationTable:
    """Full mDAE versus: standard loss on all cells, random mu, undercomplete structure S2.

    The first mDAE spec in ``plan.methods`` (if any) supplies shared settings
    such as the training config and mu grid.
    """
    base = next((s for s in plan.methods if s.method == "mdae"), None)
    return AblationTable(_run_specs(plan, ablation_arms(base)))


def structure_arms(base: ImputerSpec | None = None) -> list[ImputerSpec]:
    prm = dict(base.params) if base is not None else {}
    prm.setdefault("mu", "select")
    return [ImputerSpec("mdae", {**prm, "structure": i}, f"S{i}") for i in range(1, 7)]


def structure_sweep(plan: ExperimentPlan) -> RmseTable:
    """Full mDAE once per grid structure, masks shared across structures."""
    base = next((s for s in plan.methods if s.method == "mdae"), None)
    return _run_specs(plan, structure_arms(base))


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def write_json(obj: dict, path: str | Path) -> None:
    """Deterministic JSON; non-finite floats become null."""
    Path(path).write_text(json.dumps(_json_safe(obj), indent=2, allow_nan=False) + "\n")
