"""Dense feed-forward autoencoder with masked L2 loss, written against numpy.

Hidden layers use ReLU, the output layer is the identity. Encoder and
decoder weights are untied and stored as a single list of affine layers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._parallel import derive_seed
from .data import CellSet, DataMatrix, DimensionMismatch

CHECKPOINT_FORMAT = "mdae-params"
CHECKPOINT_VERSION = 1


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class NetworkStructure:
    input_width: int
    hidden_widths: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        if self.input_width < 1 or any(w < 1 for w in self.hidden_widths):
            raise ValueError(f"layer widths must be >= 1, got {self.widths}")

    @property
    def widths(self) -> tuple[int, ...]:
        """All layer widths, input and output included."""
        return (self.input_width, *self.hidden_widths, self.input_width)

    @property
    def n_layers(self) -> int:
        return len(self.hidden_widths) + 1


@dataclass
class Parameters:
    """Per-layer weights ``W_k`` (out x in) and biases ``b_k``; gradients share this shape."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if len(self.weights) != len(self.biases):
            raise ValueError("one bias vector per weight matrix")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise DimensionMismatch(f"layer {k}: weight {w.shape} and bias {b.shape} disagree")
            if k and w.shape[1] != self.weights[k - 1].shape[0]:
                raise DimensionMismatch(f"layer {k} input width {w.shape[1]} != previous output")

    @property
    def structure(self) -> NetworkStructure:
        return NetworkStructure(self.weights[0].shape[1], tuple(w.shape[0] for w in self.weights[:-1]))

    def arrays(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]

    def copy(self) -> "Parameters":
        return Parameters([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def is_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.arrays())

    def to_dict(self) -> dict:
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "layers": [
                {"shape": list(w.shape), "weights": w.ravel().tolist(), "bias": b.tolist()}
                for w, b in zip(self.weights, self.biases)
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Parameters":
        if d.get("format") != CHECKPOINT_FORMAT or d.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint {d.get('format')!r} v{d.get('version')}")
        ws, bs = [], []
        for layer in d["layers"]:
            ws.append(np.array(layer["weights"], dtype=np.float64).reshape(layer["shape"]))
            bs.append(np.array(layer["bias"], dtype=np.float64))
        return cls(ws, bs)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "Parameters":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    max_epochs: int = 1000
    batch_size: int = 64
    patience: int = 100
    min_improvement: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise ValueError("Adam betas must lie in (0, 1)")
        if self.max_epochs < 1 or self.batch_size < 1 or self.patience < 1:
            raise ValueError("max_epochs, batch_size and patience must be >= 1")
        if self.patience > self.max_epochs:
            raise ValueError("patience cannot exceed max_epochs")


@dataclass(frozen=True)
class CorruptionSpec:
    mu: float

    def __post_init__(self):
        if not 0.0 <= self.mu <= 1.0:
            raise ValueError(f"mu must lie in [0, 1], got {self.mu}")


def init_parameters(structure: NetworkStructure, seed: int) -> Parameters:
    """He-uniform weights for ReLU layers, Glorot-uniform for the output layer, zero biases."""
    rng = np.random.default_rng(seed)
    widths = structure.widths
    ws, bs = [], []
    for k in range(structure.n_layers):
        fan_in, fan_out = widths[k], widths[k + 1]
        last = k == structure.n_layers - 1
        bound = math.sqrt(6.0 / (fan_in + fan_out)) if last else math.sqrt(6.0 / fan_in)
        ws.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        bs.append(np.zeros(fan_out))
    return Parameters(ws, bs)


def _forward_trace(params: Parameters, x: np.ndarray) -> list[np.ndarray]:
    acts = [x]
    h = x
    last = len(params.weights) - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w.T + b
        if k < last:
            h = np.maximum(h, 0.0)
        acts.append(h)
    return acts


def forward(params: Parameters, x) -> np.ndarray:
    """Reconstruction of one input vector, or of each row of a 2-d batch."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.weights[0].shape[1]:
        raise DimensionMismatch(f"input width {x.shape[-1]} != network width {params.weights[0].shape[1]}")
    return _forward_trace(params, x)[-1]


def _k_of(mu: float, p: int) -> int:
    return int(round(mu * p))


def corrupt_rows(x: np.ndarray, mu: float, rng: np.random.Generator) -> np.ndarray:
    """Masking noise: zero exactly ``round(mu * p)`` random components of every row."""
    x = np.array(x, dtype=np.float64, copy=True)
    n, p = x.shape
    k = _k_of(mu, p)
    if k == 0:
        return x
    if k >= p:
        return np.zeros_like(x)
    picks = np.argsort(rng.random((n, p)), axis=1)[:, :k]
    np.put_along_axis(x, picks, 0.0, axis=1)
    return x


def corrupt(x, spec: CorruptionSpec, seed: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return corrupt_rows(x[None, :], spec.mu, np.random.default_rng(seed))[0]


def _as_mask(omega, shape) -> np.ndarray:
    m = omega.mask if isinstance(omega, CellSet) else np.asarray(omega, dtype=bool)
    if m.shape != tuple(shape):
        raise DimensionMismatch(f"mask {m.shape} vs matrix {tuple(shape)}")
    return m


def _pair(x_matrix, z_matrix) -> tuple[np.ndarray, np.ndarray]:
    x = x_matrix.values if isinstance(x_matrix, DataMatrix) else np.asarray(x_matrix, dtype=np.float64)
    z = z_matrix.values if isinstance(z_matrix, DataMatrix) else np.asarray(z_matrix, dtype=np.float64)
    if x.shape != z.shape:
        raise DimensionMismatch(f"{x.shape} vs {z.shape}")
    return x, z


def full_loss(x_matrix, z_matrix) -> float:
    """Plain squared Frobenius distance over every cell."""
    x, z = _pair(x_matrix, z_matrix)
    d = x - z
    return float(np.sum(d * d))


def masked_loss(x_matrix, z_matrix, omega) -> float:
    """Sum of squared errors over the cells of ``omega``.

    Cells outside ``omega`` enter as exact zeros, so the sum is bit-identical
    to ``full_loss`` when ``omega`` is the full grid.
    """
    x, z = _pair(x_matrix, z_matrix)
    m = _as_mask(omega, x.shape)
    d = np.where(m, x - z, 0.0)
    return float(np.sum(d * d))


def backward(params: Parameters, x_batch, target_batch, omega_batch) -> tuple[float, Parameters]:
    """Masked loss of a batch and its exact gradient w.r.t. every weight and bias.

    ReLU is taken to have derivative 0 at 0.
    """
    x = np.asarray(x_batch, dtype=np.float64)
    t = np.asarray(target_batch, dtype=np.float64)
    if x.ndim == 1:
        x, t = x[None, :], t[None, :]
    mask = _as_mask(omega_batch, t.shape).astype(np.float64)
    acts = _forward_trace(params, x)
    resid = (acts[-1] - t) * mask
    loss = float(np.sum(resid * resid))
    delta = 2.0 * resid
    n_layers = len(params.weights)
    gw: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    gb: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    for k in range(n_layers - 1, -1, -1):
        gw[k] = delta.T @ acts[k]
        gb[k] = delta.sum(axis=0)
        if k:
            delta = (delta @ params.weights[k]) * (acts[k] > 0)
    return loss, Parameters(gw, gb)


class _Adam:
    def __init__(self, params: Parameters, cfg: TrainingConfig):
        self.cfg = cfg
        self.m = [np.zeros_like(a) for a in params.arrays()]
        self.v = [np.zeros_like(a) for a in params.arrays()]
        self.t = 0

    def step(self, params: Parameters, grads: Parameters):
        c = self.cfg
        self.t += 1
        lr_t = c.learning_rate * math.sqrt(1 - c.adam_beta2**self.t) / (1 - c.adam_beta1**self.t)
        # overflow is detected by the caller through is_finite
        with np.errstate(over="ignore", invalid="ignore"):
            for a, g, m, v in zip(params.arrays(), grads.arrays(), self.m, self.v):
                m *= c.adam_beta1
                m += (1 - c.adam_beta1) * g
                v *= c.adam_beta2
                v += (1 - c.adam_beta2) * g * g
                a -= lr_t * m / (np.sqrt(v) + c.adam_epsilon)

    def is_finite(self) -> bool:
        # an overflowing second moment silently freezes updates
        return all(np.isfinite(a).all() for a in (*self.m, *self.v))


def train(
    x_tilde: DataMatrix,
    omega_train: CellSet,
    structure: NetworkStructure,
    mu: float,
    config: TrainingConfig = TrainingConfig(),
) -> tuple[Parameters, list[float]]:
    """Fit a denoising autoencoder to ``x_tilde`` with loss restricted to ``omega_train``.

    Each mini-batch input is freshly corrupted with masking noise of rate
    ``mu``; targets stay clean. Returns the final parameters and the
    per-entry training loss of every epoch.
    """
    x = x_tilde.values
    n, p = x.shape
    if structure.input_width != p:
        raise DimensionMismatch(f"structure width {structure.input_width} != {p} columns")
    mask = _as_mask(omega_train, x.shape)
    if not mask.any():
        raise ValueError("omega_train is empty")
    CorruptionSpec(mu)

    params = init_parameters(structure, derive_seed(config.seed, "init"))
    rng = np.random.default_rng(derive_seed(config.seed, "batches"))
    opt = _Adam(params, config)
    bs = min(config.batch_size, n)
    total = float(mask.sum())
    history: list[float] = []
    best, stale = math.inf, 0
    for epoch in range(config.max_epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, bs):
            idx = order[start : start + bs]
            mb = mask[idx]
            count = mb.sum()
            if count == 0:
                continue
            xin = corrupt_rows(x[idx], mu, rng)
            loss, grads = backward(params, xin, x[idx], mb)
            if not math.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch + 1}")
            epoch_loss += loss
            for g in grads.arrays():
                g /= count
            opt.step(params, grads)
            if not opt.is_finite():
                raise TrainingDiverged(f"optimizer state overflowed at epoch {epoch + 1}")
        per_entry = epoch_loss / total
        if not math.isfinite(per_entry) or not params.is_finite():
            raise TrainingDiverged(f"non-finite loss at epoch {epoch + 1}")
        history.append(per_entry)
        if per_entry < best - config.min_improvement:
            best, stale = per_entry, 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    return params, history


def reconstruct(params: Parameters, x_tilde: DataMatrix) -> np.ndarray:
    """Network output for every row of a pre-imputed matrix (no corruption)."""
    return forward(params, x_tilde.values)
