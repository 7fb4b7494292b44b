import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import cellsets, matrices
from mdae_impute.data import (
    CellSet,
    DataMatrix,
    DimensionMismatch,
    ParseError,
    StandardizationParams,
    TooFewObserved,
    ValidationSetTooSmall,
    ZeroVarianceFeature,
    destandardize,
    drop_constant_columns,
    observed_set,
    pre_impute,
    project,
    read_cells,
    read_csv,
    sample_validation_set,
    standardize,
    write_cells,
    write_csv,
)

M = math.nan


def test_cellset_algebra():
    a = CellSet.from_pairs(2, 2, [(0, 0), (1, 1)])
    b = CellSet.from_pairs(2, 2, [(0, 0), (0, 1)])
    assert set(a.union(b)) == {(0, 0), (0, 1), (1, 1)}
    assert set(a.intersection(b)) == {(0, 0)}
    assert set(a.difference(b)) == {(1, 1)}
    assert set(a.complement()) == {(0, 1), (1, 0)}
    assert len(CellSet.full(3, 4)) == 12 and len(CellSet.empty(3, 4)) == 0
    assert (1, 1) in a and (1, 0) not in a
    assert a.intersection(b).issubset(a)
    with pytest.raises(DimensionMismatch):
        a.union(CellSet.empty(3, 2))


def test_cellset_rejects_out_of_range():
    with pytest.raises(IndexError):
        CellSet.from_pairs(2, 2, [(2, 0)])


def test_observed_set_examples():
    assert len(observed_set(DataMatrix.from_array([[M, M], [M, M]]))) == 0
    got = observed_set(DataMatrix.from_array([[1, M], [M, 4]]))
    assert set(got) == {(0, 0), (1, 1)}


def test_datamatrix_is_read_only():
    m = DataMatrix.from_array([[1.0, M]])
    with pytest.raises(ValueError):
        m.values[0, 0] = 3.0
    assert m.values[0, 1] == 0.0 and m.missing[0, 1]
    np.testing.assert_array_equal(np.isnan(m.to_array()), m.missing)


def test_datamatrix_rejects_nonfinite_observed():
    with pytest.raises(ValueError):
        DataMatrix(np.array([[np.inf, 1.0]]))


def test_standardize_arithmetic():
    xs, prm = standardize(DataMatrix(np.array([[1.0], [2.0], [3.0]])))
    np.testing.assert_allclose(xs.values[:, 0], [-1.22474487, 0, 1.22474487], atol=1e-7)
    assert prm.means[0] == 2.0
    assert prm.stds[0] == pytest.approx(math.sqrt(2 / 3), abs=1e-12)


def test_standardize_idempotent():
    xs, _ = standardize(DataMatrix(np.random.default_rng(0).normal(size=(30, 3))))
    again, prm = standardize(xs)
    np.testing.assert_allclose(again.values, xs.values, atol=1e-9)
    np.testing.assert_allclose(prm.means, 0, atol=1e-9)
    np.testing.assert_allclose(prm.stds, 1, atol=1e-9)


def test_standardize_errors_name_the_column():
    with pytest.raises(ZeroVarianceFeature) as e:
        standardize(DataMatrix(np.array([[5.0, 1], [5, 2], [5, 3]]), column_names=["const", "ok"]))
    assert e.value.column == 0 and "const" in str(e.value)
    with pytest.raises(TooFewObserved):
        standardize(DataMatrix.from_array([[1.0, M], [2.0, M], [3.0, 4.0]]))


def test_standardize_ignores_missing_cells():
    m = DataMatrix.from_array([[1.0], [M], [3.0]])
    xs, prm = standardize(m)
    assert prm.means[0] == 2.0 and prm.stds[0] == 1.0
    assert xs.missing[1, 0]


@settings(max_examples=60, deadline=None)
@given(matrices(min_n=3, max_n=12, max_p=4))
def test_standardize_moments_and_round_trip(a):
    m = DataMatrix(a)
    # np.std of a constant column is not exactly 0, so compare spreads instead
    spread = np.ptp(a, axis=0)
    if np.any(spread == 0):
        with pytest.raises(ZeroVarianceFeature):
            standardize(m)
        return
    try:
        xs, prm = standardize(m)
    except ZeroVarianceFeature as e:
        assert spread[e.column] < 1e-300  # subnormal spread underflows
        return
    if np.any(prm.stds < 1e-6 * np.maximum(1.0, np.abs(prm.means))):
        return  # near-constant columns lose digits by construction
    np.testing.assert_allclose(xs.values.mean(axis=0), 0, atol=1e-9)
    np.testing.assert_allclose(xs.values.std(axis=0), 1, atol=1e-9)
    np.testing.assert_allclose(destandardize(xs, prm).values, a, atol=1e-9 * max(1.0, np.abs(a).max()))


def test_destandardize_examples():
    m = DataMatrix(np.array([[1.5]]))
    assert destandardize(m, StandardizationParams([10.0], [2.0])).values[0, 0] == 13.0
    ident = StandardizationParams(np.zeros(2), np.ones(2))
    x = DataMatrix(np.array([[0.3, -1.0]]))
    np.testing.assert_array_equal(destandardize(x, ident).values, x.values)
    with pytest.raises(DimensionMismatch):
        destandardize(x, StandardizationParams([0.0], [1.0]))


def test_project_examples():
    m = DataMatrix(np.array([[1.0, 2], [3, 4]]))
    np.testing.assert_array_equal(project(m, CellSet.full(2, 2)).values, m.values)
    np.testing.assert_array_equal(project(m, CellSet.empty(2, 2)).values, 0)
    got = project(m, CellSet.from_pairs(2, 2, [(0, 0), (1, 1)]))
    np.testing.assert_array_equal(got.values, [[1, 0], [0, 4]])
    assert not got.has_missing
    with pytest.raises(DimensionMismatch):
        project(m, CellSet.full(3, 2))


@settings(max_examples=50, deadline=None)
@given(matrices().flatmap(lambda a: cellsets(a.shape).map(lambda s: (a, s))))
def test_project_complement_reconstructs(pair):
    a, s = pair
    m = DataMatrix(a)
    total = project(m, s).values + project(m, s.complement()).values
    np.testing.assert_array_equal(total, a)


def test_pre_impute_examples():
    np.testing.assert_array_equal(pre_impute(DataMatrix.from_array([[1.0, M]])).values, [[1, 0]])
    np.testing.assert_array_equal(pre_impute(DataMatrix.from_array([[M, M]])).values, [[0, 0]])
    full = DataMatrix(np.array([[1.0, 2.0]]))
    np.testing.assert_array_equal(pre_impute(full).values, full.values)


@settings(max_examples=50, deadline=None)
@given(matrices().flatmap(lambda a: cellsets(a.shape).map(lambda s: (a, s))))
def test_pre_impute_keeps_observed_bits(pair):
    a, s = pair
    m = DataMatrix(a).hide(s)
    out = pre_impute(m)
    obs = ~m.missing
    assert np.array_equal(out.values[obs], a[obs])
    assert np.all(out.values[m.missing] == 0.0)


def test_sample_validation_set_examples():
    omega = CellSet.full(10, 10)
    v = sample_validation_set(omega, 0.1, seed=3)
    assert len(v) == 10 and v.issubset(omega)
    assert v == sample_validation_set(omega, 0.1, seed=3)
    assert len(sample_validation_set(CellSet.full(1, 5), 0.01, seed=0)) == 1
    assert len(sample_validation_set(CellSet.full(1, 5), 0.99, seed=0)) == 4
    with pytest.raises(ValidationSetTooSmall):
        sample_validation_set(CellSet.full(1, 1), 0.5, seed=0)


def test_sample_validation_set_varies_with_seed():
    omega = CellSet(np.random.default_rng(1).random((6, 5)) < 0.8)
    assert len(omega) >= 20
    draws = {tuple(map(tuple, sample_validation_set(omega, 0.2, s).pairs())) for s in range(10)}
    assert len(draws) > 1


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32), st.floats(0.01, 0.99))
def test_sample_validation_set_subset_and_size(seed, frac):
    omega = CellSet(np.random.default_rng(seed).random((7, 4)) < 0.6)
    if len(omega) < 2:
        return
    v = sample_validation_set(omega, frac, seed)
    assert v.issubset(omega)
    assert len(v) == min(max(round(frac * len(omega)), 1), len(omega) - 1)


def test_csv_round_trip_and_missing_tokens(tmp_path):
    p = tmp_path / "in.csv"
    p.write_text("a,b,c\n1,,NaN\n2.5,nan,3\n")
    m = read_csv(p)
    assert m.column_names == ("a", "b", "c")
    np.testing.assert_array_equal(m.missing, [[False, True, True], [False, True, False]])
    out = tmp_path / "out.csv"
    write_csv(m, out)
    assert out.read_text() == "a,b,c\n1,,\n2.5,,3\n"


def test_csv_twelve_digits(tmp_path):
    p = tmp_path / "x.csv"
    write_csv(DataMatrix(np.array([[1 / 3, 2e-15]])), p)
    assert p.read_text().splitlines()[1] == "0.333333333333,2e-15"


@pytest.mark.parametrize(
    "text, line",
    [("a,b\n1,2\n3,x\n", 3), ("a,b\n1,2,3\n", 2), ("", 1), ("a,b\n1,inf\n", 2)],
)
def test_csv_parse_errors_carry_line(tmp_path, text, line):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(ParseError) as e:
        read_csv(p)
    assert e.value.line == line


def test_cells_round_trip(tmp_path):
    c = CellSet.from_pairs(3, 2, [(0, 1), (2, 0)])
    write_cells(c, tmp_path / "m.csv")
    assert (tmp_path / "m.csv").read_text() == "row,col\n0,1\n2,0\n"
    assert read_cells(tmp_path / "m.csv", 3, 2) == c


def test_drop_constant_columns():
    m = DataMatrix.from_array([[1.0, 7, 2], [2, 7, M], [3, 7, 5]], column_names=["a", "k", "b"])
    kept, dropped = drop_constant_columns(m)
    assert dropped == [1] and kept.column_names == ("a", "b")
    assert kept.missing[1, 1]
