import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from extload.basis import PhiState, BasisTerm
from extload.distributions import GevParams, target_exceedance
from extload.estimator import (EmptySlab, ExtremeRankWarning, QuantileResult,
                               extreme_load_from_draws, long_term_quantile,
                               pointwise_credible_band, short_term_params, upper_quantile)
from extload.mle import ParamDraw, RegressionData

# frozen high-precision oracles (mpmath, 40 digits)
GUMBEL_Q_1E3 = 6.907255070523716500
MIX_Q_1E3 = 7.527262730805703020      # equal mixture of Gumbel(0,1) and Gumbel(1,1)
GEV_025, GEV_975 = 0.388140839178160955, 3.221499643766545562   # GEV(1, 0.5, 0.1)


def _intercept_draw(mu, sigma, xi, k_max=10):
    phi = PhiState((), {1}, k_max)
    return ParamDraw(phi, phi, np.array([mu]), np.array([math.log(sigma)]), np.array([xi]))


def _hinge_draw():
    loc = PhiState((BasisTerm(1, (1,), (8.0,)),), {1}, 10)
    scale = PhiState((BasisTerm(1, (-1,), (12.0,)),), {1}, 10)
    return ParamDraw(loc, scale, np.array([1.0, 0.2]), np.array([-1.0, 0.05]), np.array([0.1]))


class TestUpperQuantile:
    def test_linear_interpolation(self):
        pool = np.arange(11.0)
        assert upper_quantile(pool, 0.25) == (7.5, False)
        assert upper_quantile(pool, 0.5)[0] == pytest.approx(np.quantile(pool, 0.5))

    def test_clamps_to_max(self):
        value, clamped = upper_quantile(np.arange(100.0), 1e-3)
        assert value == 99.0 and clamped

    def test_constant_pool(self):
        for p in (1e-5, 0.1, 0.9):
            assert upper_quantile(np.full(50, 2.5), p)[0] == 2.5

    @given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=60),
           st.floats(0.01, 0.99))
    def test_matches_numpy_or_clamps(self, xs, p):
        value, clamped = upper_quantile(xs, p)
        if len(xs) * p < 1:
            assert clamped and value == max(xs)
        else:
            expected = np.quantile(np.array(xs), 1 - p)
            assert not clamped
            assert value == pytest.approx(expected, rel=1e-9, abs=1e-9)

    def test_errors(self):
        with pytest.raises(ValueError):
            upper_quantile([], 0.1)
        with pytest.raises(ValueError):
            upper_quantile([1.0, 2.0], 1.0)


class TestLongTermQuantile:
    def test_single_entry_closed_form(self):
        table = GevParams(np.array([0.0]), np.array([1.0]), 0.0)
        q = long_term_quantile(table, 1_000_000, 1e-3, np.random.default_rng(0))
        assert q == pytest.approx(GUMBEL_Q_1E3, rel=0.03)

    def test_mixture_root_oracle(self):
        table = GevParams(np.array([0.0, 1.0]), np.array([1.0, 1.0]), 0.0)
        q = long_term_quantile(table, 500_000, 1e-3, np.random.default_rng(1))
        assert q == pytest.approx(MIX_Q_1E3, rel=0.03)

    def test_identical_entries_match_single(self):
        table = GevParams(np.zeros(50), np.ones(50), 0.0)
        q = long_term_quantile(table, 20_000, 1e-3, np.random.default_rng(2))
        assert q == pytest.approx(GUMBEL_Q_1E3, rel=0.03)

    def test_median(self):
        table = GevParams(np.array([2.0]), np.array([0.5]), 0.0)
        q = long_term_quantile(table, 200_000, 0.5, np.random.default_rng(3))
        assert q == pytest.approx(2.0 - 0.5 * math.log(math.log(2)), abs=0.01)

    def test_vector_of_levels_from_one_pool(self):
        table = GevParams(np.array([0.0]), np.array([1.0]), 0.1)
        out = long_term_quantile(table, 10_000, [1e-2, 1e-3], np.random.default_rng(4))
        assert out.shape == (2,) and out[0] < out[1]

    def test_clamp_warns(self):
        table = GevParams(np.array([0.0]), np.array([1.0]), 0.0)
        with pytest.warns(ExtremeRankWarning):
            long_term_quantile(table, 10, 1e-5, np.random.default_rng(0))


class TestShortTermParams:
    def test_intercept_only_is_constant(self):
        p = short_term_params(_intercept_draw(1.0, 0.5, 0.1), np.linspace(3, 25, 7))
        assert np.all(p.mu == 1.0) and np.allclose(p.sigma, 0.5) and p.xi == 0.1

    def test_matches_hand_evaluation(self):
        d = _hinge_draw()
        v = np.array([4.0, 8.0, 9.5, 12.0, 20.0])
        p = short_term_params(d, v)
        for i, vi in enumerate(v):
            mu = 1.0 + 0.2 * max(vi - 8.0, 0.0)
            sigma = math.exp(-1.0 + 0.05 * max(12.0 - vi, 0.0))
            assert p.mu[i] == pytest.approx(mu, abs=1e-12)
            assert p.sigma[i] == pytest.approx(sigma, rel=1e-12)
        assert np.all(p.sigma > 0)


class TestQuantileResult:
    @given(st.lists(st.floats(-100, 100), min_size=1, max_size=200))
    def test_interval_contains_median(self, xs):
        r = QuantileResult(np.array(xs), 1e-4)
        assert r.ci_lower <= r.median <= r.ci_upper
        assert r.width >= 0

    def test_rejects_empty_and_nan(self):
        with pytest.raises(ValueError):
            QuantileResult(np.array([]), 1e-4)
        with pytest.raises(ValueError):
            QuantileResult(np.array([1.0, np.nan]), 1e-4)

    def test_summary_keys(self):
        s = QuantileResult(np.arange(5.0), 1e-4, 20.0).summary()
        assert s["n_draws"] == 5 and s["t_years"] == 20.0


def test_draw_count_and_targets():
    draws = [_intercept_draw(1.0, 0.5, 0.05)] * 7
    v = np.linspace(4, 20, 30)
    res = extreme_load_from_draws(draws, v, 0.0, [1e-3], 50, np.random.default_rng(0))
    assert len(res) == 1 and res[0].draws.size == 7


def test_monotone_in_service_life():
    draws = [_hinge_draw(), _intercept_draw(1.0, 0.5, 0.05)] * 5
    v = np.random.default_rng(1).uniform(4, 20, 400)
    p20, p50 = target_exceedance(20), target_exceedance(50)
    res = extreme_load_from_draws(draws, v, 0.0, [p20, p50], 20_000,
                                  np.random.default_rng(2), [20, 50])
    assert res[1].mean >= res[0].mean
    assert np.all(res[1].draws >= res[0].draws)


class TestCredibleBand:
    @pytest.fixture
    def data(self):
        rng = np.random.default_rng(3)
        v = rng.uniform(4, 20, 200)
        return RegressionData(rng.standard_normal(200), v, rng.uniform(0.5, 2.5, 200))

    def test_intercept_only_matches_gev(self, data):
        draws = [_intercept_draw(1.0, 0.5, 0.1)] * 400
        lo, hi = pointwise_credible_band(data, draws, "v", 12.0, halfwidth=100.0,
                                         rng=np.random.default_rng(0))
        assert lo == pytest.approx(GEV_025, abs=0.03)
        assert hi == pytest.approx(GEV_975, abs=0.06)

    def test_bounds_ordered(self, data):
        lo, hi = pointwise_credible_band(data, [_hinge_draw()] * 20, "s", 1.5)
        assert lo < hi

    def test_empty_slab(self, data):
        with pytest.raises(EmptySlab):
            pointwise_credible_band(data, [_hinge_draw()], "v", 100.0, halfwidth=0.5)

    def test_bad_axis(self, data):
        with pytest.raises(ValueError):
            pointwise_credible_band(data, [_hinge_draw()], "x", 1.0)
