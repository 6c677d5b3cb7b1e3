import dataclasses
import math

import numpy as np
import pytest
from scipy import stats

from extload.basis import BasisTerm, PhiState
from extload.distributions import GevParams, gev_sample
from extload.mle import (GEV, NotConverged, RegressionData, TruncNormFamily,
                         draw_params_normal_approx, fit_mle, gev_regression_loglik,
                         numeric_hessian, regression_loglik, regression_score)

PHI0 = PhiState()
T_V8 = BasisTerm(1, (1,), (8.0,))
T_V12 = BasisTerm(1, (-1,), (12.0,))
T_S1 = BasisTerm(2, (1,), (1.0,))


def _records(n, seed):
    rng = np.random.default_rng(seed)
    v = rng.uniform(4, 20, n)
    s = rng.uniform(0.3, 2.5, n)
    mu = 1.0 + 0.08 * np.maximum(v - 8, 0)
    sigma = np.exp(-1.2 + 0.2 * np.maximum(s - 1, 0))
    y = gev_sample(GevParams(mu, sigma, 0.1), rng)
    return RegressionData(y, v, s)


def test_loglik_matches_pointwise_loop():
    data = _records(10, 0)
    phi_mu = PhiState((T_V8, T_S1))
    phi_sigma = PhiState((T_V12,))
    beta, theta, xi = np.array([1.0, 0.05, 0.1]), np.array([-1.0, 0.02]), 0.15
    total = 0.0
    for i in range(data.n):
        v, s, y = data.cov.v[i], data.cov.s[i], data.y[i]
        mu = beta[0] + beta[1] * max(v - 8, 0) + beta[2] * max(s - 1, 0)
        sigma = math.exp(theta[0] + theta[1] * max(12 - v, 0))
        total += stats.genextreme(-xi, loc=mu, scale=sigma).logpdf(y)
    assert gev_regression_loglik(beta, theta, xi, phi_mu, phi_sigma, data) == pytest.approx(total, rel=1e-12)


def test_identical_records_additive():
    data = RegressionData(np.full(7, 1.3), np.full(7, 9.0), 0.5)
    single = stats.genextreme(-0.1, loc=1.0, scale=0.4).logpdf(1.3)
    val = gev_regression_loglik([1.0], [math.log(0.4)], 0.1, PHI0, PHI0, data)
    assert val == pytest.approx(7 * single, rel=1e-12)


def test_off_support_gives_floor():
    data = RegressionData(np.array([0.0, 10.0]), np.array([1.0, 2.0]))
    assert gev_regression_loglik([0.0], [0.0], -0.5, PHI0, PHI0, data) <= -1e299


@pytest.mark.parametrize("family", [GEV, TruncNormFamily(0.0)], ids=["gev", "tn2"])
def test_gradient_matches_finite_differences(family):
    data = _records(60, 1)
    if family is not GEV:
        data = RegressionData(np.abs(data.y) + 0.05, data.cov.v, data.cov.s)
    phi_loc = PhiState((T_V8, T_S1))
    phi_scale = PhiState((T_V12,))
    rng = np.random.default_rng(2)
    checked = 0
    while checked < 20:
        p = np.concatenate([[1.0, 0.05, 0.1] + rng.normal(0, 0.03, 3),
                            [-1.0, 0.01] + rng.normal(0, 0.03, 2)])
        if family is GEV:
            p = np.append(p, rng.choice([-1, 1]) * rng.uniform(0.05, 0.3))

        def f(x):
            return regression_loglik(x[:3], x[3:5], x[5:], phi_loc, phi_scale, data, family)

        g = regression_score(p, phi_loc, phi_scale, data, family)
        if g is None or f(p) <= -1e299:
            continue
        h = 1e-6
        fd = np.array([(f(p + h * e) - f(p - h * e)) / (2 * h) for e in np.eye(p.size)])
        np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-5 * np.abs(g).max())
        checked += 1


def test_recovery_intercept_only():
    y = gev_sample(GevParams(1.0, 0.5, 0.05), np.random.default_rng(3), size=5000)
    fit = fit_mle(PHI0, PHI0, RegressionData(y, np.zeros(5000)))
    assert fit.converged
    se = fit.std_errors
    assert abs(fit.beta[0] - 1.0) < 3 * se[0]
    assert abs(fit.theta[0] - math.log(0.5)) < 3 * se[1]
    assert abs(fit.xi_hat - 0.05) < 3 * se[2]


def test_gumbel_shape_near_zero():
    y = gev_sample(GevParams(0.0, 1.0, 0.0), np.random.default_rng(4), size=3000)
    fit = fit_mle(PHI0, PHI0, RegressionData(y, np.zeros(3000)))
    assert abs(fit.xi_hat) < 3 * fit.std_errors[2]


def test_sic_definition():
    data = _records(300, 5)
    fit = fit_mle(PhiState((T_V8,)), PHI0, data)
    assert fit.sic == pytest.approx(fit.loglik - 0.5 * 4 * math.log(300), rel=1e-14)
    assert fit.n_params == 4


def test_duplicate_column_penalty():
    data = _records(800, 6)
    base = fit_mle(PhiState((T_V8,)), PHI0, data)
    dup = fit_mle(PhiState((T_V8, T_V8)), PHI0, data)
    assert base.converged and dup.converged
    assert abs(dup.loglik - base.loglik) <= 1e-6
    assert dup.sic - base.sic == pytest.approx(-0.5 * math.log(800), abs=1e-4)
    assert dup.ridge_repaired


def test_regression_recovery_improves_sic():
    data = _records(1500, 7)
    flat = fit_mle(PHI0, PHI0, data)
    hinge = fit_mle(PhiState((T_V8,)), PhiState((T_S1,)), data)
    assert hinge.sic > flat.sic
    assert hinge.beta[1] == pytest.approx(0.08, abs=0.02)


def test_permutation_invariance():
    data = _records(400, 8)
    perm = np.random.default_rng(9).permutation(400)
    phi = PhiState((T_V8,))
    a = fit_mle(phi, PHI0, data)
    b = fit_mle(phi, PHI0, data.subset(perm))
    assert abs(a.loglik - b.loglik) <= 1e-6


def test_too_few_observations():
    data = _records(4, 10)
    with pytest.raises(ValueError):
        fit_mle(PHI0, PHI0, data)


def test_covariance_spd_and_symmetric():
    fit = fit_mle(PhiState((T_V8,)), PhiState((T_S1,)), _records(500, 11))
    assert np.allclose(fit.cov, fit.cov.T)
    assert np.all(np.linalg.eigvalsh(fit.cov) > 0)


def test_numeric_hessian_quadratic():
    A = np.array([[2.0, 0.5], [0.5, 1.0]])
    H = numeric_hessian(lambda x: -A @ x, np.array([0.3, -0.2]))
    np.testing.assert_allclose(H, -A, atol=1e-10)


class TestDraws:
    def _fit(self):
        y = gev_sample(GevParams(1.0, 0.5, 0.05), np.random.default_rng(12), size=2000)
        return fit_mle(PHI0, PHI0, RegressionData(y, np.zeros(2000)))

    def test_sample_mean(self):
        fit = self._fit()
        rng = np.random.default_rng(13)
        draws = np.array([draw_params_normal_approx(fit, rng) for _ in range(100_000)],
                         dtype=object)
        x = np.array([np.concatenate([d.beta, d.theta, d.extra]) for d in draws])
        tol = 4 * fit.std_errors / math.sqrt(100_000)
        assert np.all(np.abs(x.mean(axis=0) - fit.params) < tol)

    def test_zero_covariance_returns_mle(self):
        fit = dataclasses.replace(self._fit(), cov=np.eye(3) * 1e-300)
        d = draw_params_normal_approx(fit, np.random.default_rng(0))
        np.testing.assert_allclose(np.concatenate([d.beta, d.theta, d.extra]), fit.params,
                                   rtol=1e-12)

    def test_deterministic(self):
        fit = self._fit()
        a = draw_params_normal_approx(fit, np.random.default_rng(5))
        b = draw_params_normal_approx(fit, np.random.default_rng(5))
        assert np.array_equal(a.beta, b.beta) and np.array_equal(a.extra, b.extra)

    def test_not_converged(self):
        fit = dataclasses.replace(self._fit(), converged=False)
        with pytest.raises(NotConverged):
            draw_params_normal_approx(fit, np.random.default_rng(0))

    def test_not_positive_definite(self):
        fit = dataclasses.replace(self._fit(), cov=-np.eye(3))
        with pytest.raises(np.linalg.LinAlgError):
            draw_params_normal_approx(fit, np.random.default_rng(0))

    def test_scale_positive_everywhere(self):
        fit = fit_mle(PhiState((T_V8,)), PhiState((T_V12,)), _records(300, 14))
        d = draw_params_normal_approx(fit, np.random.default_rng(1))
        assert np.all(d.scale(np.linspace(-50, 80, 200)) > 0)
