"""The mDAE imputer: masked-loss denoising autoencoder plus hold-out selection of mu and structure."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from ._parallel import derive_seed, map_jobs
from .data import CellSet, DataMatrix, observed_set, pre_impute, sample_validation_set
from .network import (
    NetworkStructure,
    Parameters,
    TrainingConfig,
    TrainingDiverged,
    reconstruct,
    train,
)

DEFAULT_MU_GRID = (0.1, 0.2, 0.3, 0.4, 0.5)
DEFAULT_STRUCTURE = 5
DEFAULT_B = 8
DEFAULT_VAL_FRACTION = 0.1
LOSS_MODES = ("masked", "full")

# (x_train with held-out cells hidden, structure, mu, config, loss) -> reconstruction Z
Reconstructor = Callable[[DataMatrix, NetworkStructure, float, TrainingConfig, str], np.ndarray]


class AllCandidatesDiverged(RuntimeError):
    pass


def default_structure_grid(p: int) -> tuple[NetworkStructure, ...]:
    """Six hidden-layer layouts: two undercomplete (S1, S2), four overcomplete (S3-S6)."""
    if p < 2:
        raise ValueError("structure grid needs p >= 2")
    half, quarter = math.ceil(p / 2), math.ceil(p / 4)
    layouts = (
        (half,),
        (half, quarter, half),
        (2 * p,),
        (3 * p,),
        (2 * p, 3 * p, 2 * p),
        (3 * p, 4 * p, 3 * p),
    )
    return tuple(NetworkStructure(p, w) for w in layouts)


def structure_by_index(p: int, index: int) -> NetworkStructure:
    """1-based lookup into ``default_structure_grid``."""
    if not 1 <= index <= 6:
        raise ValueError(f"structure index must be in 1..6, got {index}")
    return default_structure_grid(p)[index - 1]


def mdae_reconstruct(
    x: DataMatrix, structure: NetworkStructure, mu: float, config: TrainingConfig, loss: str = "masked"
) -> tuple[np.ndarray, Parameters]:
    """Train on the observed cells of ``x`` (or on every cell when ``loss='full'``) and reconstruct."""
    if loss not in LOSS_MODES:
        raise ValueError(f"loss must be one of {LOSS_MODES}")
    x_tilde = pre_impute(x)
    omega = observed_set(x) if loss == "masked" else CellSet.full(*x.shape)
    params, _ = train(x_tilde, omega, structure, mu, config)
    return reconstruct(params, x_tilde), params


def _default_reconstructor(x, structure, mu, config, loss):
    return mdae_reconstruct(x, structure, mu, config, loss)[0]


def estimate_validation_mse(
    x: DataMatrix,
    omega: CellSet,
    structure: NetworkStructure,
    mu: float,
    config: TrainingConfig = TrainingConfig(),
    B: int = DEFAULT_B,
    val_fraction: float = DEFAULT_VAL_FRACTION,
    *,
    seed: int = 0,
    candidate_index: int = 0,
    loss: str = "masked",
    reconstructor: Reconstructor | None = None,
) -> list[float]:
    """Hold-out MSE of ``B`` repeats, each trained on ``omega`` minus a random validation draw.

    Validation draws depend only on ``(seed, repeat)``, so every candidate of a
    grid search sees the same splits. Training seeds depend on the candidate too.
    """
    if B < 1:
        raise ValueError("B must be >= 1")
    recon = reconstructor or _default_reconstructor
    out = []
    for b in range(B):
        v = sample_validation_set(omega, val_fraction, derive_seed(seed, "split", b))
        x_train = x.hide(v)
        cfg = replace(config, seed=derive_seed(seed, "train", candidate_index, b))
        z = np.asarray(recon(x_train, structure, mu, cfg, loss))
        d = x.values[v.mask] - z[v.mask]
        mse = float(d @ d) / len(v)
        if not math.isfinite(mse):
            raise TrainingDiverged(f"non-finite validation MSE on repeat {b}")
        out.append(mse)
    return out


@dataclass
class Candidate:
    mu: float
    structure_widths: tuple[int, ...]
    structure_index: int
    mse_values: list[float] = field(default_factory=list)
    mse_mean: float = math.inf
    mse_std: float = math.nan
    diverged: bool = False

    def to_dict(self) -> dict:
        d = asdict(self)
        d["structure_widths"] = list(self.structure_widths)
        for k in ("mse_mean", "mse_std"):
            if not math.isfinite(d[k]):
                d[k] = None
        return d


@dataclass
class SelectionReport:
    candidates: list[Candidate]
    chosen: int

    @property
    def best(self) -> Candidate:
        return self.candidates[self.chosen]

    def to_dict(self) -> dict:
        return {"candidates": [c.to_dict() for c in self.candidates], "chosen": self.chosen}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "SelectionReport":
        cands = []
        for c in d["candidates"]:
            c = dict(c)
            c["structure_widths"] = tuple(c["structure_widths"])
            c["mse_mean"] = math.inf if c["mse_mean"] is None else c["mse_mean"]
            c["mse_std"] = math.nan if c["mse_std"] is None else c["mse_std"]
            cands.append(Candidate(**c))
        return cls(cands, d["chosen"])


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    a = np.asarray(values, dtype=np.float64)
    return float(a.mean()), float(a.std(ddof=1)) if a.size > 1 else 0.0


def _evaluate(job):
    x, omega, structure, mu, config, B, val_fraction, seed, idx, loss, recon = job
    try:
        return estimate_validation_mse(
            x, omega, structure, mu, config, B, val_fraction,
            seed=seed, candidate_index=idx, loss=loss, reconstructor=recon,
        )
    except TrainingDiverged:
        return None


def _search(
    x, omega, pairs, config, B, val_fraction, seed, loss, reconstructor, workers
) -> SelectionReport:
    """Evaluate ``pairs`` of ``(mu, structure, structure_index)`` and pick the winner."""
    jobs = [
        (x, omega, s, mu, config, B, val_fraction, seed, idx, loss, reconstructor)
        for idx, (mu, s, _) in enumerate(pairs)
    ]
    results = map_jobs(_evaluate, jobs, workers)
    cands = []
    for (mu, s, sidx), vals in zip(pairs, results):
        c = Candidate(float(mu), s.hidden_widths, sidx)
        if vals is None:
            c.diverged = True
        else:
            c.mse_values = vals
            c.mse_mean, c.mse_std = _mean_std(vals)
        cands.append(c)
    valid = [i for i, c in enumerate(cands) if not c.diverged]
    if not valid:
        raise AllCandidatesDiverged("training diverged for every candidate")
    chosen = min(valid, key=lambda i: (cands[i].mse_mean, cands[i].mu, cands[i].structure_index))
    return SelectionReport(cands, chosen)


def select_mu(
    x: DataMatrix,
    omega: CellSet,
    structure: NetworkStructure,
    mu_grid: Sequence[float] = DEFAULT_MU_GRID,
    config: TrainingConfig = TrainingConfig(),
    B: int = DEFAULT_B,
    val_fraction: float = DEFAULT_VAL_FRACTION,
    *,
    seed: int = 0,
    structure_index: int = 0,
    loss: str = "masked",
    reconstructor: Reconstructor | None = None,
    workers: int = 1,
) -> tuple[float, SelectionReport]:
    if not mu_grid:
        raise ValueError("mu_grid is empty")
    pairs = [(mu, structure, structure_index) for mu in mu_grid]
    report = _search(x, omega, pairs, config, B, val_fraction, seed, loss, reconstructor, workers)
    return report.best.mu, report


def select_structure(
    x: DataMatrix,
    omega: CellSet,
    grid: Sequence[NetworkStructure],
    mu: float,
    config: TrainingConfig = TrainingConfig(),
    B: int = DEFAULT_B,
    val_fraction: float = DEFAULT_VAL_FRACTION,
    *,
    seed: int = 0,
    loss: str = "masked",
    reconstructor: Reconstructor | None = None,
    workers: int = 1,
) -> tuple[NetworkStructure, SelectionReport]:
    if not grid:
        raise ValueError("structure grid is empty")
    pairs = [(mu, s, i + 1) for i, s in enumerate(grid)]
    report = _search(x, omega, pairs, config, B, val_fraction, seed, loss, reconstructor, workers)
    return grid[report.best.structure_index - 1], report


def select_joint(
    x: DataMatrix,
    omega: CellSet,
    grid: Sequence[NetworkStructure],
    mu_grid: Sequence[float] = DEFAULT_MU_GRID,
    config: TrainingConfig = TrainingConfig(),
    B: int = DEFAULT_B,
    val_fraction: float = DEFAULT_VAL_FRACTION,
    *,
    seed: int = 0,
    loss: str = "masked",
    reconstructor: Reconstructor | None = None,
    workers: int = 1,
) -> tuple[NetworkStructure, float, SelectionReport]:
    """Exhaustive search over every (structure, mu) pair."""
    if not grid or not mu_grid:
        raise ValueError("both grids must be non-empty")
    pairs = [(mu, s, i + 1) for i, s in enumerate(grid) for mu in mu_grid]
    report = _search(x, omega, pairs, config, B, val_fraction, seed, loss, reconstructor, workers)
    best = report.best
    return grid[best.structure_index - 1], best.mu, report


def impute(
    x: DataMatrix,
    structure: NetworkStructure,
    mu: float,
    config: TrainingConfig = TrainingConfig(),
    loss: str = "masked",
) -> tuple[DataMatrix, Parameters | None]:
    """Train on all observed cells and fill the missing ones with the reconstruction.

    Observed cells are copied through untouched. A complete input is returned
    as is, with no parameters.
    """
    if not x.has_missing:
        return x, None
    z, params = mdae_reconstruct(x, structure, mu, config, loss)
    filled = np.where(x.missing, z, x.values)
    return x.with_values(filled), params


def fit_impute(
    x: DataMatrix,
    *,
    structure: int | Sequence[int] = DEFAULT_STRUCTURE,
    mu: float | str = "select",
    mu_grid: Sequence[float] = DEFAULT_MU_GRID,
    config: TrainingConfig = TrainingConfig(),
    B: int = DEFAULT_B,
    val_fraction: float = DEFAULT_VAL_FRACTION,
    loss: str = "masked",
    seed: int = 0,
    workers: int = 1,
) -> tuple[DataMatrix, SelectionReport | None, float]:
    """Full mDAE pipeline on a standardized matrix.

    ``structure`` is a 1-based index into the default grid or explicit hidden
    widths. ``mu`` is a number, ``"select"`` (hold-out search over
    ``mu_grid``) or ``"random"`` (uniform on [0, 1]). Returns the imputed
    matrix, the selection report (if any) and the mu used.
    """
    p = x.n_cols
    if isinstance(structure, (int, np.integer)):
        sidx = int(structure)
        net = structure_by_index(p, sidx)
    else:
        sidx = 0
        net = NetworkStructure(p, tuple(structure))
    if not x.has_missing:
        return x, None, float("nan") if isinstance(mu, str) else float(mu)
    report = None
    if mu == "select":
        mu_val, report = select_mu(
            x, observed_set(x), net, mu_grid, config, B, val_fraction,
            seed=derive_seed(seed, "select"), structure_index=sidx, loss=loss, workers=workers,
        )
    elif mu == "random":
        mu_val = float(np.random.default_rng(derive_seed(seed, "random-mu")).uniform(0.0, 1.0))
    else:
        mu_val = float(mu)
    final_cfg = replace(config, seed=derive_seed(seed, "final"))
    out, _ = impute(x, net, mu_val, final_cfg, loss)
    return out, report, mu_val
