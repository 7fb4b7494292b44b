"""Tabular data model: matrices with missing cells, cell sets, standardization.

Missingness is an explicit per-cell state (``DataMatrix.missing``); the value
stored under a missing cell is always 0.0 and carries no meaning.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

__all__ = [
    "CellSet",
    "DataMatrix",
    "DimensionMismatch",
    "ParseError",
    "StandardizationParams",
    "TooFewObserved",
    "ValidationSetTooSmall",
    "ZeroVarianceFeature",
    "destandardize",
    "drop_constant_columns",
    "observed_set",
    "pre_impute",
    "project",
    "read_cells",
    "read_csv",
    "sample_validation_set",
    "standardize",
    "write_cells",
    "write_csv",
]

MISSING_TOKENS = ("", "nan")
CSV_DIGITS = 12


class DimensionMismatch(ValueError):
    pass


class ZeroVarianceFeature(ValueError):
    def __init__(self, column: int, name: str | None = None):
        self.column = column
        self.name = name
        label = f"{column} ({name!r})" if name else str(column)
        super().__init__(f"column {label} is constant on its observed cells")


class TooFewObserved(ValueError):
    def __init__(self, column: int, name: str | None = None):
        self.column = column
        self.name = name
        label = f"{column} ({name!r})" if name else str(column)
        super().__init__(f"column {label} has fewer than 2 observed cells")


class ValidationSetTooSmall(ValueError):
    pass


class ParseError(ValueError):
    def __init__(self, message: str, line: int):
        self.line = line
        super().__init__(f"line {line}: {message}")


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class CellSet:
    """A set of (row, col) indices on an ``n_rows x n_cols`` grid, stored as a boolean mask."""

    mask: np.ndarray

    def __post_init__(self):
        m = np.array(self.mask, dtype=bool, copy=True)
        if m.ndim != 2:
            raise ValueError("CellSet mask must be 2-dimensional")
        object.__setattr__(self, "mask", _frozen(m))

    @classmethod
    def from_pairs(cls, n_rows: int, n_cols: int, pairs: Iterable[tuple[int, int]]) -> "CellSet":
        m = np.zeros((n_rows, n_cols), dtype=bool)
        for i, j in pairs:
            if not (0 <= i < n_rows and 0 <= j < n_cols):
                raise IndexError(f"cell ({i}, {j}) outside {n_rows}x{n_cols} grid")
            m[i, j] = True
        return cls(m)

    @classmethod
    def full(cls, n_rows: int, n_cols: int) -> "CellSet":
        return cls(np.ones((n_rows, n_cols), dtype=bool))

    @classmethod
    def empty(cls, n_rows: int, n_cols: int) -> "CellSet":
        return cls(np.zeros((n_rows, n_cols), dtype=bool))

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape

    @property
    def n_rows(self) -> int:
        return self.mask.shape[0]

    @property
    def n_cols(self) -> int:
        return self.mask.shape[1]

    def pairs(self) -> np.ndarray:
        """Member indices as a ``(k, 2)`` integer array in row-major order."""
        return np.argwhere(self.mask)

    def __iter__(self) -> Iterator[tuple[int, int]]:
        for i, j in self.pairs():
            yield int(i), int(j)

    def __len__(self) -> int:
        return int(self.mask.sum())

    def __contains__(self, cell) -> bool:
        i, j = cell
        return bool(0 <= i < self.n_rows and 0 <= j < self.n_cols and self.mask[i, j])

    def __eq__(self, other) -> bool:
        if not isinstance(other, CellSet):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.mask, other.mask))

    def _check(self, other: "CellSet"):
        if self.shape != other.shape:
            raise DimensionMismatch(f"cell sets on {self.shape} and {other.shape} grids")

    def complement(self) -> "CellSet":
        return CellSet(~self.mask)

    def union(self, other: "CellSet") -> "CellSet":
        self._check(other)
        return CellSet(self.mask | other.mask)

    def intersection(self, other: "CellSet") -> "CellSet":
        self._check(other)
        return CellSet(self.mask & other.mask)

    def difference(self, other: "CellSet") -> "CellSet":
        self._check(other)
        return CellSet(self.mask & ~other.mask)

    def issubset(self, other: "CellSet") -> bool:
        self._check(other)
        return not bool((self.mask & ~other.mask).any())

    __or__ = union
    __and__ = intersection
    __sub__ = difference


@dataclass(frozen=True, eq=False)
class DataMatrix:
    """An ``n x p`` real table in which any cell may be missing."""

    values: np.ndarray
    missing: np.ndarray | None = None
    column_names: tuple[str, ...] | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, copy=True)
        if v.ndim == 1:
            v = v[None, :]
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError(f"DataMatrix needs a non-empty 2-d array, got shape {v.shape}")
        if self.missing is None:
            miss = np.zeros(v.shape, dtype=bool)
        else:
            miss = np.array(self.missing, dtype=bool, copy=True)
            if miss.shape != v.shape:
                raise DimensionMismatch(f"missing mask {miss.shape} vs values {v.shape}")
        if not np.isfinite(v[~miss]).all():
            raise ValueError("observed cells must be finite; use the missing mask for absent values")
        v[miss] = 0.0
        names = self.column_names
        if names is not None:
            names = tuple(str(c) for c in names)
            if len(names) != v.shape[1]:
                raise DimensionMismatch(f"{len(names)} column names for {v.shape[1]} columns")
        object.__setattr__(self, "values", _frozen(v))
        object.__setattr__(self, "missing", _frozen(miss))
        object.__setattr__(self, "column_names", names)

    @classmethod
    def from_array(cls, a, column_names: Sequence[str] | None = None) -> "DataMatrix":
        """Build from an array where NaN marks a missing cell."""
        a = np.asarray(a, dtype=np.float64)
        if a.ndim == 1:
            a = a[None, :]
        miss = np.isnan(a)
        return cls(np.where(miss, 0.0, a), miss, None if column_names is None else tuple(column_names))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    @property
    def has_missing(self) -> bool:
        return bool(self.missing.any())

    def to_array(self) -> np.ndarray:
        """Values with NaN in missing cells."""
        out = self.values.copy()
        out[self.missing] = np.nan
        return out

    def hide(self, cells: CellSet) -> "DataMatrix":
        """Copy with ``cells`` marked missing in addition to the current missing cells."""
        if cells.shape != self.shape:
            raise DimensionMismatch(f"cell set {cells.shape} vs matrix {self.shape}")
        return DataMatrix(self.values, self.missing | cells.mask, self.column_names)

    def with_values(self, values: np.ndarray) -> "DataMatrix":
        """Fully observed copy holding ``values`` with this matrix's column names."""
        return DataMatrix(values, None, self.column_names)

    def select_columns(self, columns: Sequence[int]) -> "DataMatrix":
        cols = list(columns)
        names = None if self.column_names is None else tuple(self.column_names[j] for j in cols)
        return DataMatrix(self.values[:, cols], self.missing[:, cols], names)

    def column_label(self, j: int) -> str | None:
        return None if self.column_names is None else self.column_names[j]


@dataclass(frozen=True, eq=False)
class StandardizationParams:
    means: np.ndarray
    stds: np.ndarray

    def __post_init__(self):
        means = np.array(self.means, dtype=np.float64, copy=True).ravel()
        stds = np.array(self.stds, dtype=np.float64, copy=True).ravel()
        if means.shape != stds.shape:
            raise DimensionMismatch("means and stds differ in length")
        if not (stds > 0).all():
            raise ValueError("standard deviations must be positive")
        object.__setattr__(self, "means", _frozen(means))
        object.__setattr__(self, "stds", _frozen(stds))

    def to_dict(self) -> dict:
        return {"means": self.means.tolist(), "stds": self.stds.tolist()}


def observed_set(m: DataMatrix) -> CellSet:
    return CellSet(~m.missing)


def standardize(m: DataMatrix) -> tuple[DataMatrix, StandardizationParams]:
    """Center and scale every column with statistics of its observed cells.

    Uses the population (divide-by-n) standard deviation.
    """
    obs = ~m.missing
    counts = obs.sum(axis=0)
    means = np.empty(m.n_cols)
    stds = np.empty(m.n_cols)
    for j in range(m.n_cols):
        col = m.values[obs[:, j], j]
        if counts[j] < 2:
            raise TooFewObserved(j, m.column_label(j))
        mu = col.mean()
        # rescale first so tiny spreads do not underflow when squared
        scale = np.max(np.abs(col))
        c = col / scale if scale > 0 else col
        sd = scale * np.sqrt(np.mean((c - c.mean()) ** 2)) if scale > 0 else 0.0
        if np.all(col == col[0]) or not sd > 0:
            raise ZeroVarianceFeature(j, m.column_label(j))
        means[j] = mu
        stds[j] = sd
    z = (m.values - means) / stds
    return DataMatrix(z, m.missing, m.column_names), StandardizationParams(means, stds)


def destandardize(m: DataMatrix, params: StandardizationParams) -> DataMatrix:
    if params.means.shape[0] != m.n_cols:
        raise DimensionMismatch(f"params for {params.means.shape[0]} columns, matrix has {m.n_cols}")
    return DataMatrix(m.values * params.stds + params.means, m.missing, m.column_names)


def drop_constant_columns(m: DataMatrix) -> tuple[DataMatrix, list[int]]:
    """Remove columns that ``standardize`` would reject; returns the dropped indices."""
    dropped = []
    for j in range(m.n_cols):
        col = m.values[~m.missing[:, j], j]
        if col.size < 2 or np.all(col == col[0]):
            dropped.append(j)
    kept = [j for j in range(m.n_cols) if j not in dropped]
    if not kept:
        raise ValueError("every column is constant or nearly empty")
    return m.select_columns(kept), dropped


def project(m: DataMatrix, s: CellSet) -> DataMatrix:
    """Keep cells in ``s`` and zero the rest; the result has no missing cells."""
    if s.shape != m.shape:
        raise DimensionMismatch(f"cell set {s.shape} vs matrix {m.shape}")
    return DataMatrix(np.where(s.mask, m.values, 0.0), None, m.column_names)


def pre_impute(m: DataMatrix) -> DataMatrix:
    """Mean pre-imputation of a standardized matrix: missing cells become 0."""
    return project(m, observed_set(m))


def sample_validation_set(omega: CellSet, fraction: float, seed: int) -> CellSet:
    """Draw a uniform subset of ``omega`` of size ``round(fraction * |omega|)``, clamped to [1, |omega| - 1]."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    flat = np.flatnonzero(omega.mask)
    if flat.size < 2:
        raise ValidationSetTooSmall(f"need at least 2 observed cells, got {flat.size}")
    k = min(max(int(round(fraction * flat.size)), 1), flat.size - 1)
    rng = np.random.default_rng(seed)
    chosen = rng.choice(flat, size=k, replace=False)
    v = np.zeros(omega.mask.size, dtype=bool)
    v[chosen] = True
    return CellSet(v.reshape(omega.shape))


def _parse_cell(token: str, line: int, col: int) -> float:
    t = token.strip()
    if t.lower() in MISSING_TOKENS:
        return math.nan
    try:
        x = float(t)
    except ValueError:
        raise ParseError(f"column {col + 1}: cannot parse {token!r} as a number", line) from None
    if not math.isfinite(x):
        raise ParseError(f"column {col + 1}: non-finite value {token!r}", line)
    return x


def read_csv(path: str | Path) -> DataMatrix:
    """Read a header-first CSV; empty fields and ``NaN`` (any case) are missing."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", 1) from None
        rows = []
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", line)
            rows.append([_parse_cell(tok, line, j) for j, tok in enumerate(row)])
    if not rows:
        raise ParseError("no data rows", 2)
    return DataMatrix.from_array(np.array(rows), column_names=[h.strip() for h in header])


def format_number(x: float) -> str:
    return format(float(x), f".{CSV_DIGITS}g")


def write_csv(m: DataMatrix, path: str | Path) -> None:
    """Write with 12 significant digits; missing cells become empty fields."""
    names = m.column_names or tuple(f"x{j}" for j in range(m.n_cols))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for i in range(m.n_rows):
            w.writerow(["" if m.missing[i, j] else format_number(m.values[i, j]) for j in range(m.n_cols)])


def read_cells(path: str | Path, n_rows: int, n_cols: int) -> CellSet:
    """Read a ``row,col`` CSV (0-indexed, with header) into a CellSet."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader, None)
        pairs = [(int(r[0]), int(r[1])) for r in reader if r]
    return CellSet.from_pairs(n_rows, n_cols, pairs)


def write_cells(cells: CellSet, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "col"])
        w.writerows((i, j) for i, j in cells)
