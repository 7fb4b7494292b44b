import sys

import numpy as np
import pytest
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from mdae_impute.amputation import MissingnessSpec, amputate_mcar
from mdae_impute.data import CellSet, DataMatrix, standardize
from mdae_impute.network import TrainingConfig


def matrices(min_n=2, max_n=8, min_p=1, max_p=6):
    """Finite float matrices of moderate magnitude."""
    shape = st.tuples(st.integers(min_n, max_n), st.integers(min_p, max_p))
    elems = st.floats(-100, 100, allow_nan=False, allow_infinity=False, width=64)
    return shape.flatmap(lambda s: hnp.arrays(np.float64, s, elements=elems))


def cellsets(shape):
    return hnp.arrays(np.bool_, shape).map(CellSet)


def masked_standard(n, p, prop, seed, rank=0, noise=1.0):
    """Standardized synthetic matrix, its complete version and the hidden cells."""
    rng = np.random.default_rng(seed)
    x = noise * rng.standard_normal((n, p))
    if rank:
        x += rng.standard_normal((n, rank)) @ rng.standard_normal((rank, p))
    xs, _ = standardize(DataMatrix(x))
    cells = amputate_mcar(xs, MissingnessSpec("mcar", prop, seed=seed))
    return xs, xs.hide(cells), cells


# small and short, for tests that only exercise plumbing
FAST = TrainingConfig(max_epochs=15, patience=5, batch_size=32)


@pytest.fixture
def fast_config():
    return FAST


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("C")[1].split()[0])):
            terminalreporter.write_line(line)
