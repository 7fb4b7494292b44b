"""Run configuration: an INI file with sections, flattened to one key space, plus CLI overrides.

Section names are only for readability; every key must be unique across
sections and is overridable by the CLI flag of the same name.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields
from pathlib import Path

from ._parallel import default_workers
from .amputation import MECHANISMS
from .baselines import WEIGHTINGS, ImputerSpec
from .network import TrainingConfig

METHODS = ("mean", "knn", "softimpute", "chained_ridge", "mdae")


class ConfigError(ValueError):
    def __init__(self, problems: dict[str, str]):
        self.problems = problems
        super().__init__("; ".join(f"{k}: {v}" for k, v in problems.items()))


def _list(v) -> list[str]:
    if isinstance(v, (list, tuple)):
        return [str(x).strip() for x in v if str(x).strip()]
    return [s.strip() for s in str(v).split(",") if s.strip()]


@dataclass
class RunConfig:
    seed: int = 0
    workers: int = field(default_factory=default_workers)
    cache_dir: str | None = None
    out_dir: str = "out"
    dataset: list[str] = field(default_factory=lambda: ["lowrank"])
    mechanism: list[str] = field(default_factory=lambda: ["mcar"])
    proportion: list[float] = field(default_factory=lambda: [0.2])
    B: int | None = None
    method: list[str] = field(default_factory=lambda: list(METHODS))
    drop_constant_columns: bool = False
    # missingness
    mar_observed_fraction: float = 0.3
    # mdae
    mu: str = "select"
    mu_grid: list[float] = field(default_factory=lambda: [0.1, 0.2, 0.3, 0.4, 0.5])
    structure: int = 5
    select_B: int = 8
    val_fraction: float = 0.1
    # training
    learning_rate: float = TrainingConfig.learning_rate
    max_epochs: int = TrainingConfig.max_epochs
    batch_size: int = TrainingConfig.batch_size
    patience: int = TrainingConfig.patience
    # baselines
    knn_k: int | None = None
    knn_weighting: str = "uniform"
    softimpute_lambda: float | None = None
    softimpute_max_iter: int = 1000
    softimpute_tol: float = 1e-5
    ridge_penalty: float = 1.0
    ridge_max_sweeps: int = 10
    ridge_tol: float = 1e-3

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def update(self, raw: dict) -> "RunConfig":
        """Apply string or typed overrides; collects every bad field before raising."""
        problems = {}
        for key, value in raw.items():
            if value is None:
                continue
            if key not in self.keys():
                problems[key] = "unknown key"
                continue
            try:
                setattr(self, key, _coerce(key, value))
            except (TypeError, ValueError) as exc:
                problems[key] = str(exc)
        if problems:
            raise ConfigError(problems)
        return self

    def validate(self) -> "RunConfig":
        p = {}
        if self.workers < 1:
            p["workers"] = "must be >= 1"
        for m in self.mechanism:
            if m not in MECHANISMS:
                p["mechanism"] = f"{m!r} not in {MECHANISMS}"
        for v in self.proportion:
            if not 0 < v < 1:
                p["proportion"] = f"{v} outside (0, 1)"
        for m in self.method:
            if m not in METHODS:
                p["method"] = f"{m!r} not in {METHODS}"
        if self.B is not None and self.B < 1:
            p["B"] = "must be >= 1"
        if self.mu not in ("select", "random"):
            try:
                if not 0 <= float(self.mu) <= 1:
                    p["mu"] = "must lie in [0, 1]"
            except ValueError:
                p["mu"] = "must be 'select', 'random' or a number in [0, 1]"
        if not self.mu_grid or any(not 0 <= v <= 1 for v in self.mu_grid):
            p["mu_grid"] = "needs values in [0, 1]"
        if not 1 <= self.structure <= 6:
            p["structure"] = "must be in 1..6"
        if not 0 < self.val_fraction < 1:
            p["val_fraction"] = "must lie in (0, 1)"
        if not 0 < self.mar_observed_fraction < 1:
            p["mar_observed_fraction"] = "must lie in (0, 1)"
        if self.knn_k is not None and self.knn_k < 1:
            p["knn_k"] = "must be >= 1"
        if self.knn_weighting not in WEIGHTINGS:
            p["knn_weighting"] = f"must be one of {WEIGHTINGS}"
        for key in ("softimpute_lambda", "softimpute_tol", "ridge_penalty", "ridge_tol", "learning_rate"):
            v = getattr(self, key)
            if v is not None and not v > 0:
                p[key] = "must be positive"
        for key in ("select_B", "max_epochs", "batch_size", "patience", "softimpute_max_iter", "ridge_max_sweeps"):
            if getattr(self, key) < 1:
                p[key] = "must be >= 1"
        if self.patience > self.max_epochs:
            p["patience"] = "cannot exceed max_epochs"
        if p:
            raise ConfigError(p)
        return self

    def training_config(self) -> TrainingConfig:
        return TrainingConfig(
            learning_rate=self.learning_rate, max_epochs=self.max_epochs,
            batch_size=self.batch_size, patience=self.patience, seed=self.seed,
        )

    def mdae_params(self) -> dict:
        mu = self.mu if self.mu in ("select", "random") else float(self.mu)
        cfg = self.training_config()
        return {
            "structure": self.structure, "mu": mu, "mu_grid": tuple(self.mu_grid),
            "B": self.select_B, "val_fraction": self.val_fraction,
            "config": {
                "learning_rate": cfg.learning_rate, "max_epochs": cfg.max_epochs,
                "batch_size": cfg.batch_size, "patience": cfg.patience,
            },
        }

    def imputer_spec(self, method: str) -> ImputerSpec:
        if method == "mean":
            return ImputerSpec("mean")
        if method == "knn":
            return ImputerSpec("knn", {"k": self.knn_k, "weighting": self.knn_weighting,
                                       "B": self.select_B, "val_fraction": self.val_fraction})
        if method == "softimpute":
            return ImputerSpec("softimpute", {"lam": self.softimpute_lambda, "max_iter": self.softimpute_max_iter,
                                              "tol": self.softimpute_tol, "B": self.select_B,
                                              "val_fraction": self.val_fraction})
        if method == "chained_ridge":
            return ImputerSpec("chained_ridge", {"penalty": self.ridge_penalty, "max_sweeps": self.ridge_max_sweeps,
                                                 "tol": self.ridge_tol})
        if method == "mdae":
            return ImputerSpec("mdae", self.mdae_params())
        raise ValueError(f"unknown method {method!r}")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.keys()}


_LISTS = {"dataset": str, "mechanism": str, "method": str, "proportion": float, "mu_grid": float}
_OPTIONAL = {"cache_dir": str, "B": int, "knn_k": int, "softimpute_lambda": float}
_INTS = {"seed", "workers", "structure", "select_B", "max_epochs", "batch_size", "patience",
         "softimpute_max_iter", "ridge_max_sweeps"}
_FLOATS = {"mar_observed_fraction", "val_fraction", "learning_rate", "softimpute_tol",
           "ridge_penalty", "ridge_tol"}


def _coerce(key: str, value):
    if key in _LISTS:
        items = _list(value)
        return [_LISTS[key](v.lower() if _LISTS[key] is str and key != "dataset" else v) for v in items]
    if key in _OPTIONAL:
        if isinstance(value, str) and value.strip().lower() in ("", "none", "auto"):
            return None
        return _OPTIONAL[key](value)
    if key in _INTS:
        return int(value)
    if key in _FLOATS:
        return float(value)
    if key == "drop_constant_columns":
        if isinstance(value, bool):
            return value
        s = str(value).strip().lower()
        if s not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
            raise ValueError(f"not a boolean: {value!r}")
        return s in ("1", "true", "yes", "on")
    return str(value)


def read_config_file(path: str | Path) -> dict[str, str]:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keep key case (B)
    with open(path) as fh:
        parser.read_file(fh)
    flat: dict[str, str] = {}
    problems = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            if key in flat:
                problems[key] = f"defined in more than one section (again in [{section}])"
            flat[key] = value
    if problems:
        raise ConfigError(problems)
    return flat


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> RunConfig:
    cfg = RunConfig()
    if path is not None:
        cfg.update(read_config_file(path))
    if overrides:
        cfg.update(overrides)
    return cfg.validate()
