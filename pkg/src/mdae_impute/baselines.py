"""Classical imputers (mean, KNN, SoftImpute, chained ridge) and the shared imputer interface.

Every imputer takes a standardized ``DataMatrix`` with missing cells and
returns a complete one that agrees exactly with its input on observed cells.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from ._parallel import derive_seed
from .data import CellSet, DataMatrix, observed_set, pre_impute, sample_validation_set

KNN_K_GRID = (1, 3, 5, 10, 15)
N_LAMBDA = 8
WEIGHTINGS = ("uniform", "inverse_distance")
DISTANCE_EPS = 1e-9
SELECT_B = 8

Imputer = Callable[[DataMatrix, "ImputerSpec", int], DataMatrix]
IMPUTERS: dict[str, Imputer] = {}

_POSITIVE = {
    "knn": ("k",),
    "softimpute": ("lam", "max_iter", "tol"),
    "chained_ridge": ("penalty", "max_sweeps", "tol"),
    "mdae": (),
    "mean": (),
}


@dataclass(frozen=True)
class ImputerSpec:
    """A method name plus its parameters.

    ``knn``: k (None selects by hold-out), weighting. ``softimpute``: lam
    (None selects), max_iter, tol. ``chained_ridge``: penalty, max_sweeps,
    tol. ``mdae``: see ``mdae.fit_impute`` keywords.
    """

    method: str
    params: Mapping[str, Any] = field(default_factory=dict)
    label: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "params", dict(self.params))
        for key in _POSITIVE.get(self.method, ()):
            v = self.params.get(key)
            if v is not None and not v > 0:
                raise ValueError(f"{self.method}: {key} must be positive, got {v}")
        w = self.params.get("weighting")
        if w is not None and w not in WEIGHTINGS:
            raise ValueError(f"knn: weighting must be one of {WEIGHTINGS}")

    @property
    def name(self) -> str:
        return self.label or self.method

    def with_params(self, **kw) -> "ImputerSpec":
        return replace(self, params={**self.params, **kw})

    def to_dict(self) -> dict:
        return {"method": self.method, "params": dict(self.params), "label": self.name}


def register_imputer(name: str):
    """Decorator adding an ``(x, spec, seed) -> DataMatrix`` function to the registry."""

    def deco(fn: Imputer) -> Imputer:
        IMPUTERS[name] = fn
        _POSITIVE.setdefault(name, ())
        return fn

    return deco


def run_imputer(x: DataMatrix, spec: ImputerSpec, seed: int = 0) -> DataMatrix:
    try:
        fn = IMPUTERS[spec.method]
    except KeyError:
        raise ValueError(f"unknown imputer {spec.method!r}; registered: {sorted(IMPUTERS)}") from None
    return fn(x, spec, seed)


def _restore(x: DataMatrix, z: np.ndarray) -> DataMatrix:
    return x.with_values(np.where(x.missing, z, x.values))


def impute_mean(x: DataMatrix) -> DataMatrix:
    """Column means are 0 on standardized data, so this is pre-imputation."""
    return pre_impute(x)


# -- KNN ---------------------------------------------------------------------


def nan_euclidean_distances(x: DataMatrix) -> np.ndarray:
    """Pairwise row distances over mutually observed coordinates, rescaled by ``p / n_shared``.

    Pairs with no shared coordinate get ``inf``.
    """
    obs = (~x.missing).astype(np.float64)
    v = x.values * obs
    sq = v * v
    d2 = sq @ obs.T + obs @ sq.T - 2.0 * v @ v.T
    shared = obs @ obs.T
    np.maximum(d2, 0.0, out=d2)
    with np.errstate(divide="ignore", invalid="ignore"):
        d = np.sqrt(d2 * (x.n_cols / shared))
    d[shared == 0] = np.inf
    return d


def impute_knn(x: DataMatrix, k: int = 5, weighting: str = "uniform") -> DataMatrix:
    """Fill (i, j) with the average ``x[:, j]`` of the k nearest rows that observe column j.

    A row with no observed cell has no distance to anyone and gets the plain column mean.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if weighting not in WEIGHTINGS:
        raise ValueError(f"weighting must be one of {WEIGHTINGS}")
    if not x.has_missing:
        return x
    d = nan_euclidean_distances(x)
    z = x.values.copy()
    empty = x.missing.all(axis=1)
    for i in np.flatnonzero(x.missing.any(axis=1)):
        for j in np.flatnonzero(x.missing[i]):
            # donors sharing no coordinate sit at distance inf and rank last
            donors = np.flatnonzero(~x.missing[:, j])
            if donors.size == 0:
                z[i, j] = 0.0
                continue
            if empty[i]:
                # no distance is defined: every donor is equally far
                z[i, j] = float(x.values[donors, j].mean())
                continue
            near = donors[np.argsort(d[i, donors], kind="stable")[:k]]
            vals = x.values[near, j]
            w = 1.0 / (d[i, near] + DISTANCE_EPS) if weighting == "inverse_distance" else np.ones(near.size)
            if not w.sum() > 0:
                w = np.ones(near.size)
            z[i, j] = float(w @ vals / w.sum())
    return _restore(x, z)


# -- SoftImpute --------------------------------------------------------------


def soft_impute_path(
    x: DataMatrix, lam: float, max_iter: int = 1000, tol: float = 1e-5
) -> tuple[np.ndarray, list[float]]:
    """Iterate ``Z <- SVT_lam(P_obs(X) + P_miss(Z))`` from ``Z = 0``.

    Returns the last iterate and the objective
    ``0.5 * ||P_obs(X - Z)||^2 + lam * ||Z||_*`` at every iterate, ``Z = 0`` included.
    """
    if not lam > 0:
        raise ValueError("lam must be positive")
    obs = ~x.missing
    xv = x.values
    if not np.isfinite(xv).all():
        raise ValueError("SoftImpute needs finite inputs")
    z = np.zeros_like(xv)
    objective = [0.5 * float(np.sum(xv[obs] ** 2))]
    for _ in range(max_iter):
        filled = np.where(obs, xv, z)
        u, s, vt = np.linalg.svd(filled, full_matrices=False)
        s = np.maximum(s - lam, 0.0)
        z_new = (u * s) @ vt
        r = (xv - z_new)[obs]
        objective.append(0.5 * float(r @ r) + lam * float(s.sum()))
        change = math.sqrt(float(np.sum((z_new - z) ** 2)) / max(float(np.sum(z * z)), 1e-300))
        z = z_new
        if change < tol:
            break
    return z, objective


def impute_softimpute(x: DataMatrix, lam: float, max_iter: int = 1000, tol: float = 1e-5) -> DataMatrix:
    if not x.has_missing:
        return x
    z, _ = soft_impute_path(x, lam, max_iter, tol)
    return _restore(x, z)


def lambda_grid(x: DataMatrix, n: int = N_LAMBDA, low: float = 0.01) -> tuple[float, ...]:
    """Log-spaced grid from ``low`` to the top singular value of the pre-imputed matrix."""
    top = float(np.linalg.svd(pre_impute(x).values, compute_uv=False)[0])
    top = max(top, low * 10)
    return tuple(float(v) for v in np.geomspace(low, top, n))


# -- chained-equation ridge --------------------------------------------------


def _ridge_fit(a: np.ndarray, y: np.ndarray, penalty: float) -> tuple[np.ndarray, float]:
    """Ridge coefficients with an unpenalized intercept (solved on centered data)."""
    am, ym = a.mean(axis=0), y.mean()
    ac = a - am
    coef = np.linalg.solve(ac.T @ ac + penalty * np.eye(a.shape[1]), ac.T @ (y - ym))
    return coef, float(ym - am @ coef)


def impute_chained_ridge(
    x: DataMatrix, penalty: float = 1.0, max_sweeps: int = 10, tol: float = 1e-3
) -> DataMatrix:
    """Round-robin ridge regression of each incomplete column on all others, in column order."""
    if x.n_cols < 2:
        raise ValueError("chained ridge needs at least 2 columns")
    if not penalty > 0:
        raise ValueError("penalty must be positive")
    if not x.has_missing:
        return x
    z = pre_impute(x).values.copy()
    miss = x.missing
    cols = [j for j in range(x.n_cols) if miss[:, j].any()]
    for _ in range(max_sweeps):
        delta = 0.0
        for j in cols:
            others = np.r_[0:j, j + 1 : x.n_cols]
            rows = ~miss[:, j]
            if not rows.any():
                continue
            coef, b0 = _ridge_fit(z[rows][:, others], z[rows, j], penalty)
            pred = z[miss[:, j]][:, others] @ coef + b0
            delta = max(delta, float(np.max(np.abs(pred - z[miss[:, j], j]))))
            z[miss[:, j], j] = pred
        if delta < tol:
            break
    return _restore(x, z)


# -- hold-out hyper-parameter selection -------------------------------------


@dataclass
class HyperparamReport:
    param: str
    grid: list[float]
    mse_values: list[list[float]]
    mse_means: list[float]
    chosen: int

    def to_dict(self) -> dict:
        return {
            "param": self.param,
            "grid": list(self.grid),
            "mse_values": self.mse_values,
            "mse_means": self.mse_means,
            "chosen": self.chosen,
        }


def _grid_for(x: DataMatrix, spec: ImputerSpec) -> tuple[str, Sequence]:
    if spec.method == "knn":
        return "k", tuple(spec.params.get("k_grid", KNN_K_GRID))
    if spec.method == "softimpute":
        return "lam", tuple(spec.params.get("lam_grid") or lambda_grid(x))
    raise ValueError(f"no hyper-parameter grid for {spec.method!r}")


def select_imputer_hyperparams(
    x: DataMatrix, spec: ImputerSpec, B: int = SELECT_B, val_fraction: float = 0.1, seed: int = 0
) -> tuple[ImputerSpec, HyperparamReport]:
    """Hold-out selection for KNN's k or SoftImpute's lambda.

    Each repeat hides a random tenth of the observed cells, imputes, and
    scores the MSE on them; all grid values share the same draws. Ties go to
    the earlier grid value.
    """
    param, grid = _grid_for(x, spec)
    if not grid:
        raise ValueError("hyper-parameter grid is empty")
    omega = observed_set(x)
    splits = [sample_validation_set(omega, val_fraction, derive_seed(seed, "split", b)) for b in range(B)]
    values = []
    for g in grid:
        cand = spec.with_params(**{param: g})
        row = []
        for v in splits:
            z = run_imputer(x.hide(v), cand, seed).values
            d = x.values[v.mask] - z[v.mask]
            row.append(float(d @ d) / len(v))
        values.append(row)
    means = [float(np.mean(r)) for r in values]
    chosen = int(np.argmin(means))
    return spec.with_params(**{param: grid[chosen]}), HyperparamReport(param, list(grid), values, means, chosen)


# -- registry ----------------------------------------------------------------


@register_imputer("mean")
def _mean(x, spec, seed):
    return impute_mean(x)


@register_imputer("knn")
def _knn(x, spec, seed):
    prm = spec.params
    if prm.get("k") is None:
        spec, _ = select_imputer_hyperparams(x, spec, prm.get("B", SELECT_B), prm.get("val_fraction", 0.1), seed)
        prm = spec.params
    return impute_knn(x, int(prm["k"]), prm.get("weighting", "uniform"))


@register_imputer("softimpute")
def _softimpute(x, spec, seed):
    prm = spec.params
    if prm.get("lam") is None:
        spec, _ = select_imputer_hyperparams(x, spec, prm.get("B", SELECT_B), prm.get("val_fraction", 0.1), seed)
        prm = spec.params
    return impute_softimpute(x, float(prm["lam"]), int(prm.get("max_iter", 1000)), float(prm.get("tol", 1e-5)))


@register_imputer("chained_ridge")
def _chained_ridge(x, spec, seed):
    prm = spec.params
    return impute_chained_ridge(
        x, float(prm.get("penalty", 1.0)), int(prm.get("max_sweeps", 10)), float(prm.get("tol", 1e-3))
    )


@register_imputer("mdae")
def _mdae(x, spec, seed):
    from . import mdae
    from .network import TrainingConfig

    prm = dict(spec.params)
    cfg = prm.pop("config", None)
    if isinstance(cfg, Mapping):
        cfg = TrainingConfig(**cfg)
    kw = {k: prm[k] for k in ("structure", "mu", "mu_grid", "B", "val_fraction", "loss") if k in prm}
    out, _, _ = mdae.fit_impute(x, config=cfg or TrainingConfig(), seed=seed, **kw)
    return out
