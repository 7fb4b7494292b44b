import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import expit

from mdae_impute.amputation import (
    InfeasibleMask,
    MissingnessSpec,
    amputate,
    amputate_mar,
    amputate_mcar,
    amputate_mnar,
    calibrate_intercept,
)
from mdae_impute.data import DataMatrix


def normal(n, p, seed=0):
    return DataMatrix(np.random.default_rng(seed).standard_normal((n, p)))


def test_spec_validation():
    with pytest.raises(ValueError):
        MissingnessSpec("mcar", 0.0)
    with pytest.raises(ValueError):
        MissingnessSpec("mcar", 1.0)
    with pytest.raises(ValueError):
        MissingnessSpec("block", 0.2)
    assert MissingnessSpec("MNAR", 0.2).mechanism == "mnar"


@pytest.mark.parametrize("n, p, prop, expected", [(10, 4, 0.25, 10), (210, 7, 0.2, 294)])
def test_mcar_exact_count(n, p, prop, expected):
    assert len(amputate_mcar(normal(n, p), MissingnessSpec("mcar", prop, seed=1))) == expected


def test_mcar_deterministic():
    m = normal(20, 5)
    assert amputate_mcar(m, MissingnessSpec("mcar", 0.3, 7)) == amputate_mcar(m, MissingnessSpec("mcar", 0.3, 7))
    assert amputate_mcar(m, MissingnessSpec("mcar", 0.3, 7)) != amputate_mcar(m, MissingnessSpec("mcar", 0.3, 8))


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 12), st.integers(1, 6), st.floats(0.05, 0.7), st.integers(0, 10**6))
def test_mcar_never_empties_a_row_or_column(n, p, prop, seed):
    m = normal(n, p)
    k = round(prop * n * p)
    spec = MissingnessSpec("mcar", prop, seed)
    if k > n * p - max(n, p):
        with pytest.raises(InfeasibleMask):
            amputate_mcar(m, spec)
        return
    mask = amputate_mcar(m, spec).mask
    assert mask.sum() == k
    assert not mask.all(axis=1).any() and not mask.all(axis=0).any()


def test_mcar_rejects_incomplete_input():
    with pytest.raises(ValueError):
        amputate_mcar(DataMatrix.from_array([[1.0, math.nan], [2, 3]]), MissingnessSpec("mcar", 0.2))


def test_mar_predictors_stay_observed():
    m = normal(200, 10)
    spec = MissingnessSpec("mar", 0.3, seed=4)
    mask = amputate_mar(m, spec).mask
    untouched = np.flatnonzero(~mask.any(axis=0))
    assert len(untouched) >= 3  # round(0.3 * 10) predictor columns
    assert amputate_mar(m, spec) == amputate(m, spec)


def test_mar_needs_two_columns():
    with pytest.raises(ValueError):
        amputate_mar(normal(10, 1), MissingnessSpec("mar", 0.2))


def test_mar_zero_weights_is_columnwise_bernoulli():
    n, p, prop = 500, 10, 0.2
    rates = []
    for seed in range(10):
        mask = amputate_mar(normal(n, p, seed), MissingnessSpec("mar", prop, seed), weights=np.zeros((3, 7))).mask
        rates.append(mask[:, mask.any(axis=0)].mean())
    assert abs(np.mean(rates) - prop * p / (p - 3)) < 0.03


def test_mar_rate_is_clamped():
    # 0.8 * 3 / 2 > 1 per column: clamped instead of failing
    mask = amputate_mar(normal(50, 3), MissingnessSpec("mar", 0.8, 0)).mask
    assert mask.any()


def test_mnar_self_masking_slope():
    hits = 0
    for seed in range(20):
        m = normal(400, 3, seed)
        mask = amputate_mnar(m, MissingnessSpec("mnar", 0.3, seed)).mask
        col = m.values[:, 0]
        hits += col[mask[:, 0]].mean() > col[~mask[:, 0]].mean()
    assert hits == 20


@pytest.mark.parametrize("mech", ["mar", "mnar"])
def test_logistic_rates_over_seeds(mech):
    rates = [
        amputate(normal(500, 10, s), MissingnessSpec(mech, 0.2, seed=s)).mask.mean() for s in range(50)
    ]
    assert abs(np.mean(rates) - 0.2) < 0.02


def test_calibrate_examples():
    assert calibrate_intercept(np.zeros(5), 0.5) == pytest.approx(0.0, abs=1e-9)
    assert calibrate_intercept(np.zeros(5), 0.2) == pytest.approx(math.log(0.2 / 0.8), abs=1e-6)
    assert calibrate_intercept([-1.0, 1.0], 0.5) == pytest.approx(0.0, abs=1e-9)
    with pytest.raises(ValueError):
        calibrate_intercept([], 0.5)
    with pytest.raises(ValueError):
        calibrate_intercept([0.0], 1.0)


def test_mnar_zero_column_gives_zero_intercept():
    m = DataMatrix(np.zeros((100, 1)))
    assert calibrate_intercept(m.values[:, 0], 0.5) == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(-5, 5, allow_nan=False), min_size=1, max_size=50),
    st.floats(0.01, 0.99),
)
def test_calibrate_residual(scores, target):
    b = calibrate_intercept(scores, target)
    assert abs(expit(np.array(scores) + b).mean() - target) < 1e-6
