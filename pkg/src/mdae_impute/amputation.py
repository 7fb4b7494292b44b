"""Artificial missingness under MCAR, MAR and MNAR mechanisms.

All generators take a complete matrix and return the set of cells to hide.
MAR and MNAR follow a logistic masking model whose intercepts are solved by
bisection so that the expected missing rate hits the target.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .data import CellSet, DataMatrix

MECHANISMS = ("mcar", "mar", "mnar")
RATE_MARGIN = 1e-6


class InfeasibleMask(ValueError):
    pass


@dataclass(frozen=True)
class MissingnessSpec:
    mechanism: str
    proportion: float
    seed: int = 0
    mar_observed_fraction: float = 0.3

    def __post_init__(self):
        mech = self.mechanism.lower()
        if mech not in MECHANISMS:
            raise ValueError(f"unknown mechanism {self.mechanism!r}; expected one of {MECHANISMS}")
        object.__setattr__(self, "mechanism", mech)
        if not 0.0 < self.proportion < 1.0:
            raise ValueError(f"proportion must lie in (0, 1), got {self.proportion}")
        if not 0.0 < self.mar_observed_fraction < 1.0:
            raise ValueError("mar_observed_fraction must lie in (0, 1)")


def calibrate_intercept(scores, target_rate: float, tol: float = 1e-10, max_iter: int = 200) -> float:
    """Intercept ``b`` with ``mean(sigmoid(scores + b)) == target_rate``, by bisection on [-50, 50]."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    if s.size == 0:
        raise ValueError("scores must be non-empty")
    if not 0.0 < target_rate < 1.0:
        raise ValueError(f"target_rate must lie in (0, 1), got {target_rate}")
    lo, hi = -50.0, 50.0
    mid = 0.0
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        gap = expit(s + mid).mean() - target_rate
        if abs(gap) < tol:
            break
        if gap > 0:
            hi = mid
        else:
            lo = mid
    return mid


def _check_complete(m: DataMatrix):
    if m.has_missing:
        raise ValueError("amputation expects a complete matrix")


def amputate_mcar(m: DataMatrix, spec: MissingnessSpec, max_attempts: int = 100) -> CellSet:
    """Hide exactly ``round(proportion * n * p)`` uniformly drawn cells.

    No row or column is left fully missing: offending cells are swapped for
    safe observed ones; a draw that cannot be repaired is redrawn, at most
    ``max_attempts`` times.
    """
    _check_complete(m)
    n, p = m.shape
    k = int(round(spec.proportion * n * p))
    if k > n * p - max(n, p):
        raise InfeasibleMask(f"cannot hide {k} of {n}x{p} cells and keep every row and column observed")
    rng = np.random.default_rng(spec.seed)
    for _ in range(max_attempts):
        flat = np.zeros(n * p, dtype=bool)
        flat[rng.choice(n * p, size=k, replace=False)] = True
        mask = _repair(flat.reshape(n, p), k, rng)
        if mask is not None:
            return CellSet(mask)
    raise InfeasibleMask(f"no valid MCAR mask after {max_attempts} attempts")


def _repair(mask: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray | None:
    """Unhide one cell in every fully hidden row and column, then re-hide as many safe cells.

    A cell is safe when hiding it leaves its row and column with an observed
    cell. Returns None when no safe cell is left to restore the count.
    """
    n, p = mask.shape
    for i in np.flatnonzero(mask.all(axis=1)):
        mask[i, rng.integers(p)] = False
    for j in np.flatnonzero(mask.all(axis=0)):
        mask[rng.integers(n), j] = False
    while mask.sum() < k:
        row_obs = (~mask).sum(axis=1)
        col_obs = (~mask).sum(axis=0)
        cand = np.flatnonzero(~mask & (row_obs[:, None] >= 2) & (col_obs[None, :] >= 2))
        if cand.size == 0:
            return None
        c = rng.choice(cand)
        mask[c // p, c % p] = True
    return mask


def amputate_mar(m: DataMatrix, spec: MissingnessSpec, weights: np.ndarray | None = None) -> CellSet:
    """Logistic MAR mask driven by a random subset of fully observed predictor columns.

    ``weights`` (predictors x masked columns) overrides the random draw; passing
    zeros reduces the model to column-wise Bernoulli masking.
    """
    _check_complete(m)
    n, p = m.shape
    if p < 2:
        raise ValueError("MAR amputation needs at least 2 columns")
    rng = np.random.default_rng(spec.seed)
    n_pred = min(max(int(round(spec.mar_observed_fraction * p)), 1), p - 1)
    perm = rng.permutation(p)
    pred, targets = np.sort(perm[:n_pred]), np.sort(perm[n_pred:])
    # clamped: with few columns the target rate can exceed 1
    rate = min(spec.proportion * p / (p - n_pred), 1.0 - RATE_MARGIN)

    w = rng.standard_normal((n_pred, targets.size))
    if weights is not None:
        w = np.asarray(weights, dtype=np.float64).reshape(n_pred, targets.size)
    scores = m.values[:, pred] @ w
    sd = scores.std(axis=0)
    scores = np.where(sd > 0, scores / np.where(sd > 0, sd, 1.0), 0.0)

    mask = np.zeros((n, p), dtype=bool)
    u = rng.random((n, targets.size))
    for c, j in enumerate(targets):
        b = calibrate_intercept(scores[:, c], rate)
        mask[:, j] = u[:, c] < expit(scores[:, c] + b)
    return CellSet(mask)


def amputate_mnar(m: DataMatrix, spec: MissingnessSpec) -> CellSet:
    """Self-masked logistic MNAR: cell (i, j) is hidden with probability ``sigmoid(x_ij + b_j)``."""
    _check_complete(m)
    n, p = m.shape
    rng = np.random.default_rng(spec.seed)
    u = rng.random((n, p))
    mask = np.zeros((n, p), dtype=bool)
    for j in range(p):
        b = calibrate_intercept(m.values[:, j], spec.proportion)
        mask[:, j] = u[:, j] < expit(m.values[:, j] + b)
    return CellSet(mask)


def amputate(m: DataMatrix, spec: MissingnessSpec) -> CellSet:
    if spec.mechanism == "mcar":
        return amputate_mcar(m, spec)
    if spec.mechanism == "mar":
        return amputate_mar(m, spec)
    return amputate_mnar(m, spec)
