import json
import math

import numpy as np
import pytest

from conftest import FAST, masked_standard
from mdae_impute.data import CellSet, DataMatrix, observed_set, project
from mdae_impute.evaluation import rmse
from mdae_impute.mdae import (
    AllCandidatesDiverged,
    SelectionReport,
    default_structure_grid,
    estimate_validation_mse,
    fit_impute,
    impute,
    mdae_reconstruct,
    select_joint,
    select_mu,
    select_structure,
    structure_by_index,
)
from mdae_impute.network import NetworkStructure, TrainingConfig, TrainingDiverged


def oracle(truth):
    """Reconstructor hook that returns the ground truth."""
    return lambda x, s, mu, cfg, loss: truth.values


def test_structure_grid_widths():
    grid = default_structure_grid(7)
    assert [s.hidden_widths for s in grid] == [(4,), (4, 2, 4), (14,), (21,), (14, 21, 14), (21, 28, 21)]
    assert default_structure_grid(4)[0].hidden_widths == (2,)
    assert structure_by_index(7, 5) == grid[4]
    with pytest.raises(ValueError):
        structure_by_index(7, 0)
    with pytest.raises(ValueError):
        default_structure_grid(1)


@pytest.mark.parametrize("p", range(2, 40))
def test_grid_under_and_overcomplete(p):
    grid = default_structure_grid(p)
    assert all(w < p for s in grid[:2] for w in s.hidden_widths)
    assert all(w > p for s in grid[2:] for w in s.hidden_widths)


def test_validation_mse_oracle_is_zero():
    xs, xm, _ = masked_standard(30, 4, 0.2, seed=0)
    vals = estimate_validation_mse(xm, observed_set(xm), structure_by_index(4, 5), 0.2, B=5,
                                   reconstructor=oracle(xs))
    assert vals == [0.0] * 5


def test_validation_mse_is_rmse_squared_on_v():
    xs, xm, _ = masked_standard(30, 4, 0.2, seed=1)
    shift = lambda x, s, mu, cfg, loss: x.values + 0.5
    vals = estimate_validation_mse(xm, observed_set(xm), structure_by_index(4, 5), 0.2, B=3,
                                   reconstructor=shift)
    # pre-imputed hidden cells are 0, so the error on V is the observed value minus 0.5
    from mdae_impute.data import sample_validation_set
    from mdae_impute._parallel import derive_seed
    for b, got in enumerate(vals):
        v = sample_validation_set(observed_set(xm), 0.1, derive_seed(0, "split", b))
        z = xm.hide(v).values + 0.5
        assert got == pytest.approx(rmse(xm, DataMatrix(z), v) ** 2, rel=1e-12)


def test_validation_mse_real_training():
    xs, xm, _ = masked_standard(60, 7, 0.2, seed=3, rank=2, noise=0.3)
    vals = estimate_validation_mse(xm, observed_set(xm), structure_by_index(7, 5), 0.2, FAST, B=8)
    assert len(vals) == 8 and all(math.isfinite(v) and v >= 0 for v in vals)


def test_validation_mse_errors():
    xs, xm, _ = masked_standard(20, 3, 0.2, seed=0)
    with pytest.raises(ValueError):
        estimate_validation_mse(xm, observed_set(xm), structure_by_index(3, 1), 0.2, B=0)

    def boom(*a):
        return np.full(xm.shape, np.nan)
    with pytest.raises(TrainingDiverged):
        estimate_validation_mse(xm, observed_set(xm), structure_by_index(3, 1), 0.2, B=1, reconstructor=boom)


def by_mu(table):
    def recon(x, s, mu, cfg, loss):
        return np.where(x.missing, table[mu], x.values)
    return recon


def test_select_mu_singleton_and_ties():
    xs, xm, _ = masked_standard(20, 3, 0.2, seed=0)
    om, s = observed_set(xm), structure_by_index(3, 5)
    mu, rep = select_mu(xm, om, s, [0.2], B=2, reconstructor=by_mu({0.2: 0.0}))
    assert mu == 0.2 and len(rep.candidates) == 1
    mu, rep = select_mu(xm, om, s, [0.4, 0.1, 0.3], B=2, reconstructor=by_mu({0.4: 0.0, 0.1: 0.0, 0.3: 5.0}))
    assert mu == 0.1
    assert rep.candidates[0].mse_mean == rep.candidates[1].mse_mean


def test_select_mu_picks_minimum_and_shares_splits():
    xs, xm, _ = masked_standard(20, 3, 0.2, seed=0)
    seen = []

    def recon(x, s, mu, cfg, loss):
        seen.append((mu, x.missing.tobytes()))
        return np.where(x.missing, {0.1: 2.0, 0.2: 0.1, 0.3: 1.0}[mu], x.values)

    mu, rep = select_mu(xm, observed_set(xm), structure_by_index(3, 5), [0.1, 0.2, 0.3], B=3, reconstructor=recon)
    assert mu == 0.2
    assert rep.best.mse_mean == min(c.mse_mean for c in rep.candidates)
    masks = {m: [b for mm, b in seen if mm == m] for m in (0.1, 0.2, 0.3)}
    assert masks[0.1] == masks[0.2] == masks[0.3]


def test_all_diverged():
    xs, xm, _ = masked_standard(20, 3, 0.2, seed=0)
    bad = lambda *a: np.full(xm.shape, np.inf)
    with pytest.raises(AllCandidatesDiverged):
        select_mu(xm, observed_set(xm), structure_by_index(3, 5), [0.1, 0.2], B=1, reconstructor=bad)


def test_diverged_candidate_is_disqualified():
    xs, xm, _ = masked_standard(20, 3, 0.2, seed=0)

    def recon(x, s, mu, cfg, loss):
        return np.full(x.shape, np.nan) if mu == 0.1 else np.where(x.missing, 3.0, x.values)

    mu, rep = select_mu(xm, observed_set(xm), structure_by_index(3, 5), [0.1, 0.2], B=1, reconstructor=recon)
    assert mu == 0.2 and rep.candidates[0].diverged


def test_select_structure_and_joint_shapes():
    xs, xm, _ = masked_standard(20, 4, 0.2, seed=0)
    grid = default_structure_grid(4)
    width = lambda x, s, mu, cfg, loss: np.where(x.missing, 1.0 / sum(s.hidden_widths), x.values)
    s, rep = select_structure(xm, observed_set(xm), grid, 0.2, B=2, reconstructor=width)
    assert len(rep.candidates) == 6
    s1, rep1 = select_structure(xm, observed_set(xm), grid[:1], 0.2, B=2, reconstructor=width)
    assert s1 == grid[0]
    s, mu, rep = select_joint(xm, observed_set(xm), grid, [0.1, 0.2, 0.3, 0.4, 0.5], B=2, reconstructor=width)
    assert len(rep.candidates) == 30
    mu5, rep5 = select_mu(xm, observed_set(xm), grid[4], [0.1, 0.2, 0.3, 0.4, 0.5], B=2, reconstructor=width)
    assert rep.best.mse_mean <= rep5.best.mse_mean
    s, mu, rep = select_joint(xm, observed_set(xm), grid[2:3], [0.3], B=1, reconstructor=width)
    assert (s, mu) == (grid[2], 0.3)


def test_structure_tie_goes_to_lower_index():
    xs, xm, _ = masked_standard(20, 4, 0.2, seed=0)
    same = lambda x, s, mu, cfg, loss: np.where(x.missing, 0.0, x.values)
    s, rep = select_structure(xm, observed_set(xm), default_structure_grid(4), 0.2, B=1, reconstructor=same)
    assert rep.best.structure_index == 1


def test_select_mu_deterministic_and_worker_independent():
    xs, xm, _ = masked_standard(40, 4, 0.2, seed=5)
    args = (xm, observed_set(xm), structure_by_index(4, 3), [0.1, 0.3], FAST, 2)
    a = select_mu(*args)[1].to_json()
    assert a == select_mu(*args)[1].to_json()
    assert a == select_mu(*args, workers=2)[1].to_json()


def test_report_json_round_trip():
    xs, xm, _ = masked_standard(20, 3, 0.2, seed=0)
    def recon(x, s, mu, cfg, loss):
        return xm.values if mu == 0.2 else np.where(x.missing, 0.5, x.values)

    _, rep = select_mu(xm, observed_set(xm), structure_by_index(3, 5), [0.1, 0.2], B=2, reconstructor=recon)
    d = json.loads(rep.to_json())
    assert set(d["candidates"][0]) >= {"mu", "structure_widths", "mse_values", "mse_mean", "mse_std"}
    assert d["chosen"] == 1
    assert SelectionReport.from_dict(d).to_json() == rep.to_json()


def test_impute_contract():
    xs, xm, cells = masked_standard(50, 5, 0.2, seed=0)
    out, params = impute(xm, structure_by_index(5, 3), 0.2, FAST)
    omega = observed_set(xm)
    assert np.array_equal(project(out, omega).values, project(xm, omega).values)
    z, _ = mdae_reconstruct(xm, structure_by_index(5, 3), 0.2, FAST)
    assert np.array_equal(out.values[cells.mask], z[cells.mask])
    assert not out.has_missing and params is not None


def test_impute_complete_input_unchanged():
    x = DataMatrix(np.random.default_rng(0).standard_normal((10, 3)))
    out, params = impute(x, structure_by_index(3, 5), 0.2)
    assert out is x and params is None
    out, rep, mu = fit_impute(x)
    assert out is x and rep is None


def test_fit_impute_modes():
    xs, xm, _ = masked_standard(40, 4, 0.2, seed=0)
    out, rep, mu = fit_impute(xm, mu=0.3, config=FAST)
    assert rep is None and mu == 0.3
    out, rep, mu = fit_impute(xm, mu="random", config=FAST, seed=4)
    assert 0 <= mu <= 1 and rep is None
    _, _, mu2 = fit_impute(xm, mu="random", config=FAST, seed=4)
    assert mu == mu2
    out, rep, mu = fit_impute(xm, structure=[3, 3], mu_grid=(0.1, 0.2), B=2, config=FAST)
    assert mu in (0.1, 0.2) and rep.candidates[0].structure_widths == (3, 3)
    with pytest.raises(ValueError):
        mdae_reconstruct(xm, structure_by_index(4, 1), 0.1, FAST, loss="other")


def test_mdae_beats_mean_on_rank_one():
    xs, xm, cells = masked_standard(200, 8, 0.2, seed=0, rank=1, noise=0.0)
    cfg = TrainingConfig(max_epochs=200, patience=50)
    out, rep, mu = fit_impute(xm, mu_grid=(0.1, 0.3, 0.5), B=2, config=cfg)
    assert rep.best.mse_mean == min(c.mse_mean for c in rep.candidates)
    mean_rmse = rmse(xs, DataMatrix(np.where(xm.missing, 0.0, xm.values)), cells)
    assert rmse(xs, out, cells) < mean_rmse
