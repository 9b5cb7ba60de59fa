import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st

from helpers import synth_design
from oracles import crps_gaussian, crps_naive
from tvpvecm.data import DeterministicRecipe, Panel, build_design
from tvpvecm.errors import ContractError
from tvpvecm.evaluate import (backtest, crps_sample, loss_matrix, mcs, predict_one_step, rmse, score_table,
                              vol_pca)
from tvpvecm.sampler import DrawArchive, ModelConfig, build_problem, run_mcmc

NO_DOW = DeterministicRecipe(day_of_week=False)


def test_rmse_examples():
    a = np.arange(6.0).reshape(3, 2)
    per, tot = rmse(a, a)
    assert tot == 0 and np.all(per == 0)
    assert rmse(a + 2, a)[1] == pytest.approx(2.0)
    assert rmse([3.0, 4.0], [0.0, 0.0])[1] == pytest.approx(np.sqrt(12.5))
    with pytest.raises(ContractError):
        rmse(np.zeros(3), np.zeros(4))


def test_crps_examples():
    assert crps_sample(np.full(5, 2.0), 2.0) == 0
    assert crps_sample(np.array([-1.0, 1.0]), 0.0) == 0.5
    x = np.random.default_rng(0).standard_normal(100_000)
    assert crps_sample(x, 0.0) == pytest.approx(crps_gaussian(0.0, 1.0, 0.0), abs=0.005)
    assert crps_gaussian(0.0, 1.0, 0.0) == pytest.approx(0.2337, abs=1e-4)
    with pytest.raises(ContractError):
        crps_sample(np.array([1.0]), 0.0)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 100_000), S=st.integers(2, 60), y=st.floats(-5, 5))
def test_crps_sorted_equals_naive(seed, S, y):
    x = np.random.default_rng(seed).standard_normal(S) * 2
    val = crps_sample(x, y)
    assert val == pytest.approx(crps_naive(x, y), abs=1e-10)
    assert val >= -1e-12


def test_crps_vectorized_over_series():
    rng = np.random.default_rng(1)
    ens = rng.standard_normal((50, 3))
    y = np.array([0.1, -2.0, 3.0])
    np.testing.assert_allclose(crps_sample(ens, y), [crps_naive(ens[:, j], y[j]) for j in range(3)],
                               atol=1e-12)


def test_mcs_examples():
    rng = np.random.default_rng(2)
    base = rng.gamma(2.0, 1.0, 100)
    res = mcs(np.column_stack([base, base + 1]), ["good", "bad"], alpha=0.25)
    assert res.pvalue["bad"] < 0.01 and res.surviving == ["good"]
    assert res.rank == {"good": 1, "bad": 2}
    same = mcs(np.column_stack([base, base]), ["a", "b"], alpha=0.5)
    assert same.surviving == ["a", "b"] and same.ties
    one = mcs(base[:, None], ["solo"])
    assert one.surviving == ["solo"]
    with pytest.raises(ContractError):
        mcs(np.ones((10, 2)))
    frame = res.to_frame()
    assert list(frame.columns) == ["model", "rank", "p_value", "in_set"]


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_mcs_monotone_in_alpha(seed):
    rng = np.random.default_rng(seed)
    H, K = 60, 4
    common = rng.standard_normal((H, 1))
    L = common + rng.standard_normal((H, K)) + rng.uniform(0, 0.5, K)
    sets = [set(mcs(L, alpha=a, reps=500, seed=1).surviving) for a in (0.5, 0.25, 0.1)]
    assert sets[0] <= sets[1] <= sets[2]


def test_vol_pca_examples():
    rng = np.random.default_rng(3)
    col = rng.standard_normal(100)
    scores, share, _ = vol_pca(np.column_stack([col, col, col]))
    assert abs(np.corrcoef(scores, col)[0, 1] - 1) < 1e-10
    assert share == pytest.approx(1.0)
    two = np.column_stack([np.r_[1.0, -1, 0, 0], np.r_[0.0, 0, 1, -1]])
    assert vol_pca(two)[1] == pytest.approx(0.5)
    f = rng.standard_normal(200)
    V = np.outer(f, [1.0, 0.8, 1.2, 0.9]) + 0.2 * rng.standard_normal((200, 4))
    sc = vol_pca(V)[0]
    assert np.corrcoef(sc, f)[0, 1] > 0.95
    # sign convention follows the cross-sectional mean, not the input sign
    assert np.corrcoef(vol_pca(-V)[0], -V.mean(1))[0, 1] > 0
    with pytest.raises(ContractError):
        vol_pca(np.ones((5, 1)))


def panel_from(levels, start="2020-01-01"):
    levels = np.asarray(levels, dtype=float)
    if levels.ndim == 1:
        levels = levels[:, None]
    names = [f"s{i}" for i in range(levels.shape[1])]
    return Panel(pd.date_range(start, periods=levels.shape[0], freq="D"), levels, None, names)


def injected_archive(config, design, b_last, sqrt_theta, sv, logh_last, nu=None):
    """A hand-built archive holding S identical draws of known parameters."""
    prob = build_problem(config, design)
    lay = prob.layout
    S = b_last[0].shape[0]
    T, M = design.T, design.M
    return DrawArchive(
        config=config, layout=lay, names=list(design.names), T=T, pi=None,
        a=np.zeros((S, T, M, lay.J)), linv=np.broadcast_to(np.eye(M), (S, T, M, M)).copy(),
        logh=np.broadcast_to(logh_last, (S, T, M)).copy(), sv=np.broadcast_to(sv, (S, M, 3)).copy(),
        nu=nu, beta=None, beta_raw=None, b_last=b_last, sqrt_theta=sqrt_theta,
        x_sq_norms=np.ones(lay.J), meta={"timestamps": [str(t) for t in design.timestamps]},
    )


def test_ar1_predictive_matches_closed_form():
    rng = np.random.default_rng(4)
    y = np.cumsum(rng.standard_normal(60))
    design = build_design(panel_from(y), 1, NO_DOW)
    conf = ModelConfig(model_class="AR-differences", sparsify=False, P=1, tvp=False,
                       deterministics=NO_DOW, draws=2, burnin=1, thin=1)
    S = 200_000
    a1, c = 0.4, 0.2
    mu, phi, sig, last = -1.0, 0.9, 0.3, -0.5
    train = design.rows(0, design.T - 1)
    arc = injected_archive(conf, train, [np.tile([a1, c], (S, 1))], [np.zeros((S, 2))],
                           np.array([mu, phi, sig]), np.array([last]))
    row = design.T - 1
    ens = predict_one_step(arc, design, row, rng)[:, 0]
    mean = design.y_prev[row, 0] + a1 * design.dy[row - 1, 0] + c
    m_log = mu + phi * (last - mu)
    var = np.exp(m_log + sig ** 2 / 2)
    assert abs(ens.mean() - mean) < 3 * np.sqrt(var / S)
    assert ens.var() == pytest.approx(var, rel=0.02)


def test_random_walk_degenerate_case():
    rng = np.random.default_rng(5)
    y = np.cumsum(rng.standard_normal((40, 2)), axis=0)
    design = build_design(panel_from(y), 1, NO_DOW)
    conf = ModelConfig(model_class="VAR-differences", sparsify=False, P=1, deterministics=NO_DOW,
                       draws=2, burnin=1, thin=1)
    train = design.rows(0, design.T - 1)
    lay = build_problem(conf, train).layout
    S = 50_000
    arc = injected_archive(conf, train, [np.zeros((S, lay.K(i))) for i in range(2)],
                           [np.zeros((S, lay.K(i))) for i in range(2)],
                           np.array([0.0, 0.5, 0.0]), np.zeros(2))
    row = design.T - 1
    ens = predict_one_step(arc, design, row, rng)
    assert np.all(np.abs(ens.mean(0) - design.y_prev[row]) < 3 * ens.std(0) / np.sqrt(S))
    np.testing.assert_allclose(np.cov(ens.T), np.eye(2), atol=0.03)


def test_constant_parameter_archive_keeps_last_coefficients():
    design, _ = synth_design(M=2, T=80, rank=1, seed=6)
    conf = ModelConfig(model_class="VECM", P=1, tvp=False, deterministics=NO_DOW, draws=6, burnin=2,
                       thin=1, seed=1)
    train = design.rows(0, design.T - 1)
    arc = run_mcmc(conf, train)
    assert all(np.all(st == 0) for st in arc.sqrt_theta)
    # with negligible error variance, the forecast is the deterministic mean
    arc.logh[:] = -60.0
    arc.sv[:, :, 2] = 0.0
    arc.sv[:, :, 0] = -60.0
    rng = np.random.default_rng(0)
    a1 = predict_one_step(arc, design, design.T - 1, rng, sparse=False)
    a2 = predict_one_step(arc, design, design.T - 1, rng, sparse=False)
    np.testing.assert_allclose(a1, a2, atol=1e-9)


def test_window_mismatch_is_rejected():
    design, _ = synth_design(M=2, T=80, rank=1, seed=7)
    conf = ModelConfig(model_class="VAR-differences", sparsify=False, P=1, deterministics=NO_DOW,
                       draws=4, burnin=2, thin=1)
    arc = run_mcmc(conf, design.rows(0, 50))
    rng = np.random.default_rng(0)
    with pytest.raises(ContractError):
        predict_one_step(arc, design, 40, rng)
    other, _ = synth_design(M=2, T=80, rank=1, seed=7, start="2001-01-01")
    with pytest.raises(ContractError):
        predict_one_step(arc, other, 60, rng)
    assert predict_one_step(arc, design, 50, rng).shape == (2, 2)


def test_backtest_determinism_and_tables():
    design, _ = synth_design(M=2, T=90, rank=1, seed=8)
    conf = ModelConfig(model_class="VECM", P=1, deterministics=NO_DOW, draws=30, burnin=10, thin=2, seed=3)
    r1 = backtest(conf, design, window=50, n_origins=20, stride=5)
    r2 = backtest(conf, design, window=50, n_origins=20, stride=5)
    assert r1.estimations == 4
    l1, l2 = loss_matrix([r1], "crps"), loss_matrix([r2], "crps")
    pd.testing.assert_frame_equal(l1, l2)
    assert l1.shape == (20, 1)
    se = loss_matrix([r1], "se")
    assert np.all(se.values >= 0)
    tab = score_table([r1], design.names[:2])
    assert tab.loc[0, "rmse_Total"] == pytest.approx(rmse(r1.points(), r1.actuals)[1])
    assert tab.loc[0, "crps_Total"] == pytest.approx(l1.values.mean())
    with pytest.raises(ContractError):
        backtest(conf, design, window=80, n_origins=20)
