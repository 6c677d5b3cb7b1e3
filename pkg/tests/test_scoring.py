import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from extload.distributions import GevParams, gev_sample
from extload.mle import RegressionData
from extload.rjs import ChainConfig
from extload.scoring import (DEFAULT_BS, DEFAULT_TAUS, ScoreReport, compare_methods, gpl_score,
                             quantile_difference_grid,
                             mean_score, reduction_pct, score_table)

pos = st.floats(1e-3, 1e3)
taus = st.floats(0.01, 0.99)


def _pinball(q, y, tau):
    # written independently: tau * residual above, (1 - tau) * residual below
    return tau * (y - q) if y > q else (1 - tau) * (q - y)


def test_pinball_example():
    assert gpl_score(2.0, 1.0, 0.9, 1) == pytest.approx(0.1, abs=1e-15)


def test_log_branch_example():
    assert gpl_score(math.e * 3.0, 3.0, 0.5, 0) == pytest.approx(0.5, abs=1e-15)


@given(pos, taus, st.sampled_from([0.0, 1.0, 2.0, 0.5, -1.0]))
def test_zero_at_truth(y, tau, b):
    assert gpl_score(y, y, tau, b) == 0.0


@given(pos, pos, taus, st.sampled_from([0.0, 1.0, 2.0]))
def test_nonnegative(q, y, tau, b):
    assert gpl_score(q, y, tau, b) >= 0.0


@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), taus)
def test_b1_is_pinball(q, y, tau):
    assert gpl_score(q, y, tau, 1) == pytest.approx(_pinball(q, y, tau), abs=1e-12, rel=1e-12)


def test_mean_matches_loop():
    rng = np.random.default_rng(0)
    q, y = rng.uniform(0.1, 5, 300), rng.uniform(0.1, 5, 300)
    for b in DEFAULT_BS:
        loop = sum(gpl_score(qi, yi, 0.9, b) for qi, yi in zip(q, y)) / q.size
        assert mean_score(q, y, 0.9, b) == pytest.approx(loop, abs=1e-12)
    assert mean_score([2.0], [1.0], 0.9, 1) == pytest.approx(0.1)
    assert mean_score(y, y, 0.99, 0) == 0.0


@given(st.integers(0, 2 ** 32 - 1))
def test_mean_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    q, y = rng.uniform(0.1, 5, 50), rng.uniform(0.1, 5, 50)
    p = rng.permutation(50)
    assert mean_score(q[p], y[p], 0.9, 2) == pytest.approx(mean_score(q, y, 0.9, 2), rel=1e-12)


def test_errors():
    with pytest.raises(ValueError):
        gpl_score(1.0, 1.0, 1.0, 1)
    with pytest.raises(ValueError):
        gpl_score(-1.0, 1.0, 0.5, 0)
    with pytest.raises(ValueError):
        mean_score([1.0, 2.0], [1.0], 0.5, 1)
    with pytest.raises(ValueError):
        mean_score([], [], 0.5, 1)


def test_reduction():
    assert reduction_pct(2.0, 2.0) == 0.0
    assert reduction_pct(2.0, 1.5) == pytest.approx(25.0)
    r = ScoreReport(0.9, 1.0, {"spline": 0.3, "binning": 0.3}, 10)
    assert r.reduction_pct == 0.0
    with pytest.raises(ValueError):
        ScoreReport(0.9, 1.0, {"spline": 0.3, "binning": 0.3}, 0)


def test_defaults():
    assert DEFAULT_TAUS == (0.9, 0.99) and DEFAULT_BS == (0.0, 1.0, 2.0)


@pytest.fixture(scope="module")
def small_data():
    rng = np.random.default_rng(1)
    n = 250
    v = rng.uniform(4, 20, n)
    y = gev_sample(GevParams(1.0 + 0.1 * v, 0.2, 0.0), rng)
    return RegressionData(y, v, 0.0)


def _compare(data, seed):
    return compare_methods(data, (0.9,), (1.0, 2.0), n_repeats=2,
                           rng=np.random.default_rng(seed),
                           chain_config=ChainConfig(burn_in=10, n_draws=10),
                           n_post=5, n_l=20, grid_shape=(5, 1))


def test_compare_layout_and_reproducible(small_data):
    a, b = _compare(small_data, 3), _compare(small_data, 3)
    assert [(r.tau, r.b) for r in a] == [(0.9, 1.0), (0.9, 2.0)]
    assert all(r.n_repeats == 2 and len(r.per_repeat["spline"]) == 2 for r in a)
    assert [r.mean_scores for r in a] == [r.mean_scores for r in b]
    rows = score_table(a)
    assert rows[0]["reduction_pct"] == pytest.approx(a[0].reduction_pct)


def test_compare_rejects_bad_split(small_data):
    with pytest.raises(ValueError):
        compare_methods(small_data, split_frac=1.0)


def test_difference_grid_zero_when_models_agree():
    from extload.basis import PhiState
    from extload.binning import BinGrid, fit_binned
    from extload.mle import ParamDraw
    rng = np.random.default_rng(6)
    v = rng.uniform(4, 20, 400)
    data = RegressionData(gev_sample(GevParams(1.0, 0.3, 0.05), rng, size=400), v, 0.0)
    binned = fit_binned(data, BinGrid.from_data(v, np.zeros(400), 1, 1))
    f = binned.per_bin[0]
    phi = PhiState((), {1})
    draw = ParamDraw(phi, phi, np.array([f.mu]), np.array([math.log(f.sigma)]),
                     np.array([binned.xi_shared]))
    out = quantile_difference_grid(binned, [draw], data, 0.99, 400_000, rng)
    assert list(out["bin"]) == [0] and out["count"][0] == 400
    assert abs(out["difference"][0]) < 0.02
    assert out["v_median"][0] == pytest.approx(np.median(v))


def test_difference_grid_standardized(small_data):
    from extload.binning import BinGrid, fit_binned
    from extload.rjs import RegressionModel, run_chain
    binned = fit_binned(small_data, BinGrid.from_data(small_data.cov.v, small_data.cov.s, 5, 1))
    chain = run_chain(RegressionModel(small_data, {1}, {1}, 10), ChainConfig(burn_in=10, n_draws=5))
    out = quantile_difference_grid(binned, chain.draws, small_data, n_l=200)
    assert out["bin"].size == 5
    assert np.std(out["standardized"], ddof=1) == pytest.approx(1.0)
    assert np.allclose(out["difference"], out["binning"] - out["spline"])
