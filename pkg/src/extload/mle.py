"""Conditional maximum likelihood for hinge-basis location/scale regressions.

Given knot configurations for the location function ``f`` and the log-scale
function ``g``, :func:`fit_mle` maximizes the likelihood over the basis
coefficients (plus the GEV shape where the family has one), computes the
observed information by central differences of the analytic score, and
reports the Schwarz criterion ``loglik - d/2 log n``. The inverse negative
Hessian drives the normal-approximation draws used downstream.

Two families share this machinery: the nonhomogeneous GEV for 10-minute
maximum loads and the truncated normal for wind-speed standard deviation.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from .basis import Covariates, PhiState
from .distributions import LOG_FLOOR, XI_EPS

log = logging.getLogger(__name__)

XI_BOUNDS = (-0.5, 0.5)
EIG_FLOOR = 1e-8
_LOG_SCALE_CLIP = 700.0
_HALF_LOG_2PI = 0.5 * math.log(2 * math.pi)


class NotConverged(RuntimeError):
    pass


# --------------------------------------------------------------------------
# families
# --------------------------------------------------------------------------


class GevFamily:
    """GEV(mu, exp(log_sigma), xi) with a single shared shape."""

    name = "gev"
    n_extra = 1
    extra_bounds = (XI_BOUNDS,)

    def init_extra(self):
        return np.array([0.05])

    def init_location_scale(self, y):
        # Gumbel moment matching
        sd = max(float(np.std(y)), 1e-8)
        sigma = sd * math.sqrt(6.0) / math.pi
        return float(np.mean(y)) - 0.5772156649 * sigma, math.log(sigma)

    def terms(self, y, mu, log_sigma, extra):
        """Total log-likelihood and its derivatives.

        Returns ``(ll, d_mu, d_log_sigma, d_extra)`` with the first two
        per observation. ``ll`` is ``None`` when any point is outside the
        support.
        """
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            return self._terms(y, mu, log_sigma, float(extra[0]))

    def _terms(self, y, mu, log_sigma, xi):
        sigma = np.exp(log_sigma)
        z = (y - mu) / sigma
        if abs(xi) <= XI_EPS:
            t = 1.0
            L = 0.0
            a = z
            da = -0.5 * z * z
        else:
            u = xi * z
            if np.any(u <= -1.0):
                return None, None, None, None
            t = 1.0 + u
            L = np.log1p(u)
            a = L / xi
            small = np.abs(u) < 1e-3
            u_s = np.where(small, u, 0.0)
            series = z * z * (-0.5 + u_s * (2 / 3 - u_s * (0.75 - 0.8 * u_s)))
            exact = (u / t - L) / (xi * xi)
            da = np.where(small, series, exact)
        ea = np.exp(-a)
        ll = float(np.sum(-log_sigma - L - a - ea))
        if not math.isfinite(ll):
            return None, None, None, None
        core = ((1.0 + xi) - ea) / t
        d_mu = core / sigma
        d_ls = -1.0 + z * core
        d_xi = np.sum(-z / t - (1.0 - ea) * da)
        if not (np.all(np.isfinite(d_mu)) and np.all(np.isfinite(d_ls)) and math.isfinite(d_xi)):
            return None, None, None, None
        return ll, d_mu, d_ls, np.array([d_xi])


class TruncNormFamily:
    """Normal(eta, exp(log_delta)) truncated below at ``lower``."""

    name = "tn2"
    n_extra = 0
    extra_bounds = ()

    def __init__(self, lower=0.0):
        self.lower = float(lower)

    def init_extra(self):
        return np.empty(0)

    def init_location_scale(self, y):
        return float(np.mean(y)), math.log(max(float(np.std(y)), 1e-8))

    def terms(self, y, eta, log_delta, extra):
        if np.any(y < self.lower):
            return None, None, None, None
        delta = np.exp(log_delta)
        z = (y - eta) / delta
        alpha = (eta - self.lower) / delta
        log_mass = special.log_ndtr(alpha)
        ll = float(np.sum(-0.5 * z * z - _HALF_LOG_2PI - log_delta - log_mass))
        if not math.isfinite(ll):
            return None, None, None, None
        mills = np.exp(-0.5 * alpha * alpha - _HALF_LOG_2PI - log_mass)
        d_eta = (z - mills) / delta
        d_ld = -1.0 + z * z + mills * alpha
        return ll, d_eta, d_ld, np.empty(0)


GEV = GevFamily()


# --------------------------------------------------------------------------
# data with cached basis columns
# --------------------------------------------------------------------------


class RegressionData:
    """Response plus covariates, with a per-term column cache."""

    def __init__(self, y, v, s=0.0):
        self.y = np.asarray(y, dtype=float)
        self.cov = Covariates(v, s)
        if self.y.shape != self.cov.v.shape:
            raise ValueError("response and covariates differ in length")
        if not np.all(np.isfinite(self.y)):
            raise ValueError("non-finite response values")
        self._columns = {}

    @property
    def n(self) -> int:
        return self.y.size

    def column(self, term):
        col = self._columns.get(term)
        if col is None:
            col = term(self.cov.v, self.cov.s)
            if len(self._columns) > 4096:
                self._columns.clear()
            self._columns[term] = col
        return col

    def design(self, phi: PhiState) -> np.ndarray:
        X = np.empty((self.n, phi.K))
        X[:, 0] = 1.0
        for k, term in enumerate(phi.terms, start=1):
            X[:, k] = self.column(term)
        return X

    def subset(self, idx) -> "RegressionData":
        return RegressionData(self.y[idx], self.cov.v[idx], self.cov.s[idx])


# --------------------------------------------------------------------------
# likelihood
# --------------------------------------------------------------------------


def _split(params, k_loc, k_scale):
    return params[:k_loc], params[k_loc:k_loc + k_scale], params[k_loc + k_scale:]


def _loglik_and_grad(params, X_loc, X_scale, y, family):
    beta, theta, extra = _split(params, X_loc.shape[1], X_scale.shape[1])
    loc = X_loc @ beta
    log_scale = np.clip(X_scale @ theta, -_LOG_SCALE_CLIP, _LOG_SCALE_CLIP)
    ll, d_loc, d_ls, d_extra = family.terms(y, loc, log_scale, extra)
    if ll is None:
        return LOG_FLOOR, None
    grad = np.concatenate([X_loc.T @ d_loc, X_scale.T @ d_ls, d_extra])
    return ll, grad


def regression_loglik(beta, theta, extra, phi_loc, phi_scale, data: RegressionData,
                      family=GEV) -> float:
    """Sum of per-record log densities; a large negative floor off-support."""
    params = np.concatenate([np.ravel(beta), np.ravel(theta), np.ravel(extra)])
    ll, _ = _loglik_and_grad(params, data.design(phi_loc), data.design(phi_scale),
                             data.y, family)
    return ll


def gev_regression_loglik(beta, theta, xi, phi_mu, phi_sigma, data: RegressionData) -> float:
    return regression_loglik(beta, theta, [xi], phi_mu, phi_sigma, data, GEV)


def regression_score(params, phi_loc, phi_scale, data: RegressionData, family=GEV):
    """Analytic gradient of :func:`regression_loglik` (``None`` off-support)."""
    return _loglik_and_grad(np.asarray(params, dtype=float), data.design(phi_loc),
                            data.design(phi_scale), data.y, family)[1]


# --------------------------------------------------------------------------
# fitting
# --------------------------------------------------------------------------


@dataclass
class FitResult:
    phi_loc: PhiState
    phi_scale: PhiState
    beta: np.ndarray
    theta: np.ndarray
    extra: np.ndarray
    cov: np.ndarray
    loglik: float
    sic: float
    n_obs: int
    converged: bool
    ridge_repaired: bool = False
    family: str = "gev"
    message: str = field(default="", repr=False)

    @property
    def xi_hat(self):
        return float(self.extra[0]) if self.extra.size else None

    @property
    def params(self) -> np.ndarray:
        return np.concatenate([self.beta, self.theta, self.extra])

    @property
    def n_params(self) -> int:
        return self.params.size

    @property
    def std_errors(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov))


def sic(loglik: float, n_params: int, n_obs: int) -> float:
    return loglik - 0.5 * n_params * math.log(n_obs)


def numeric_hessian(grad_fn, x, rel_step=1e-4):
    """Central differences of an analytic gradient, symmetrized."""
    x = np.asarray(x, dtype=float)
    d = x.size
    H = np.empty((d, d))
    for j in range(d):
        h = rel_step * (1.0 + abs(x[j]))
        e = np.zeros(d)
        e[j] = h
        gp, gm = grad_fn(x + e), grad_fn(x - e)
        if gp is None or gm is None:
            return None
        H[:, j] = (gp - gm) / (2 * h)
    return 0.5 * (H + H.T)


def _invert_information(neg_hess):
    """Inverse of the negative Hessian with eigenvalues floored at EIG_FLOOR."""
    w, V = np.linalg.eigh(neg_hess)
    repaired = bool(np.any(w < EIG_FLOOR))
    w = np.maximum(w, EIG_FLOOR)
    cov = (V / w) @ V.T
    return 0.5 * (cov + cov.T), repaired


def _default_init(phi_loc, phi_scale, data, family):
    loc0, ls0 = family.init_location_scale(data.y)
    beta = np.zeros(phi_loc.K)
    theta = np.zeros(phi_scale.K)
    beta[0], theta[0] = loc0, ls0
    return np.concatenate([beta, theta, family.init_extra()])


def fit_mle(phi_loc: PhiState, phi_scale: PhiState, data: RegressionData, init=None,
            family=GEV, rng: np.random.Generator | None = None,
            max_restarts: int = 3, maxiter: int = 2000) -> FitResult:
    """Maximize the regression likelihood given both knot configurations.

    ``init`` is a full parameter vector ``(beta, theta, extra)``; by default
    the intercepts are anchored at moment estimates and every hinge
    coefficient starts at zero. On failure the fit is retried from jittered
    starting points before giving up with ``converged=False``.
    """
    k_loc, k_scale = phi_loc.K, phi_scale.K
    d = k_loc + k_scale + family.n_extra
    n = data.n
    if n < d + 2:
        raise ValueError(f"need at least {d + 2} observations for {d} parameters")
    X_loc, X_scale = data.design(phi_loc), data.design(phi_scale)
    y = data.y

    def negfun(p):
        ll, g = _loglik_and_grad(p, X_loc, X_scale, y, family)
        if g is None:
            return -LOG_FLOOR, np.zeros_like(p)
        return -ll, -g

    def grad(p):
        return _loglik_and_grad(p, X_loc, X_scale, y, family)[1]

    # the optimizer works on coefficients times column rms, so that a unit
    # step moves every fitted value by a comparable amount
    D = np.concatenate([_column_rms(X_loc), _column_rms(X_scale), np.ones(family.n_extra)])

    def negfun_scaled(q):
        f, g = negfun(q / D)
        return f, g / D

    bounds = [(None, None)] * (k_loc + k_scale) + list(family.extra_bounds)
    lo = np.array([-np.inf if b[0] is None else b[0] for b in bounds])
    hi = np.array([np.inf if b[1] is None else b[1] for b in bounds])

    default = _default_init(phi_loc, phi_scale, data, family)
    starts = []
    if init is not None:
        init = np.clip(np.asarray(init, dtype=float), lo, hi)
        if init.size != d:
            raise ValueError(f"init has {init.size} entries, expected {d}")
        starts.append(init)
    starts.append(default)
    jitter_rng = rng if rng is not None else np.random.default_rng(0)

    best = None
    message = ""
    x_prev = None
    for attempt in range(len(starts) + max_restarts):
        if x_prev is not None:
            # resume from where a stalled run stopped
            x0, x_prev = x_prev, None
        elif attempt < len(starts):
            x0 = starts[attempt]
        else:
            x0 = default + jitter_rng.normal(scale=0.1, size=d) * (1 + np.abs(default))
            x0[k_loc + k_scale:] = np.clip(x0[k_loc + k_scale:], lo[k_loc + k_scale:],
                                           hi[k_loc + k_scale:])
        if negfun(x0)[0] >= -LOG_FLOOR:
            continue
        res = optimize.minimize(negfun_scaled, x0 * D, jac=True, method="L-BFGS-B",
                                bounds=[(None if a is None else a * s, None if b is None else b * s)
                                        for (a, b), s in zip(bounds, D)],
                                options={"maxiter": maxiter, "ftol": 1e-14, "gtol": 1e-9,
                                         "maxcor": 20})
        message = str(res.message)
        if not np.isfinite(res.fun) or res.fun >= -LOG_FLOOR:
            continue
        x_res = res.x / D
        improved = best is None or res.fun < best[0] - 1e-9 * abs(best[0])
        if best is None or res.fun < best[0]:
            best = (res.fun, x_res)
        if _projected_grad_ok(x_res, grad(x_res), lo, hi, n):
            break
        if improved:
            x_prev = x_res

    if best is None:
        return _failed(phi_loc, phi_scale, d, n, family, message or "no feasible start")

    x = _newton_polish(best[1], negfun, grad, lo, hi)
    g = grad(x)
    ll = -negfun(x)[0]
    H = numeric_hessian(grad, x)
    if H is None or not np.all(np.isfinite(H)):
        return _failed(phi_loc, phi_scale, d, n, family, "hessian off support")
    cov, repaired = _invert_information(-H)
    converged = g is not None and _projected_grad_ok(x, g, lo, hi, n)
    beta, theta, extra = _split(x, k_loc, k_scale)
    return FitResult(phi_loc, phi_scale, beta.copy(), theta.copy(), extra.copy(), cov, ll,
                     sic(ll, d, n), n, converged, repaired, family.name, message)


def _column_rms(X):
    rms = np.sqrt(np.mean(X * X, axis=0))
    return np.where(rms > 0, rms, 1.0)


def _projected_grad_ok(x, g, lo, hi, n, tol=1e-4):
    if g is None:
        return False
    g = g.copy()
    at_lo = (x <= lo + 1e-10) & (g < 0)
    at_hi = (x >= hi - 1e-10) & (g > 0)
    g[at_lo | at_hi] = 0.0
    return bool(np.max(np.abs(g)) <= tol * max(n, 1) ** 0.5)


def _newton_polish(x, negfun, grad, lo, hi, steps=3):
    """A few damped Newton steps on top of the quasi-Newton optimum."""
    f = negfun(x)[0]
    for _ in range(steps):
        g = grad(x)
        if g is None:
            break
        H = numeric_hessian(grad, x)
        if H is None:
            break
        try:
            w = np.linalg.eigvalsh(-H)
            if w[0] <= EIG_FLOOR:
                break
            step = np.linalg.solve(-H, g)
        except np.linalg.LinAlgError:
            break
        improved = False
        for scale in (1.0, 0.5, 0.25):
            cand = np.clip(x + scale * step, lo, hi)
            fc = negfun(cand)[0]
            if fc <= f:
                x, improved = cand, fc < f
                f = fc
                break
        if not improved:
            break
    return x


def _failed(phi_loc, phi_scale, d, n, family, message):
    log.debug("MLE failed: %s", message)
    k_loc, k_scale = phi_loc.K, phi_scale.K
    return FitResult(phi_loc, phi_scale, np.full(k_loc, np.nan), np.full(k_scale, np.nan),
                     np.full(family.n_extra, np.nan), np.full((d, d), np.nan), -np.inf,
                     -np.inf, n, False, False, family.name, message)


# --------------------------------------------------------------------------
# normal-approximation draws
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ParamDraw:
    """One posterior draw of a location/scale regression."""

    phi_loc: PhiState
    phi_scale: PhiState
    beta: np.ndarray
    theta: np.ndarray
    extra: np.ndarray

    @property
    def xi(self):
        return float(self.extra[0]) if self.extra.size else None

    def location(self, v, s=0.0):
        from .basis import design_matrix
        return design_matrix(self.phi_loc, v, s) @ self.beta

    def scale(self, v, s=0.0):
        from .basis import design_matrix
        return np.exp(np.clip(design_matrix(self.phi_scale, v, s) @ self.theta,
                              -_LOG_SCALE_CLIP, _LOG_SCALE_CLIP))


def draw_params_normal_approx(fit: FitResult, rng: np.random.Generator) -> ParamDraw:
    """One multivariate-normal draw centered at the MLE."""
    if not fit.converged:
        raise NotConverged("cannot draw from a non-converged fit")
    try:
        chol = np.linalg.cholesky(fit.cov)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("covariance is not positive definite") from exc
    x = fit.params + chol @ rng.standard_normal(fit.n_params)
    beta, theta, extra = _split(x, fit.phi_loc.K, fit.phi_scale.K)
    return ParamDraw(fit.phi_loc, fit.phi_scale, beta, theta, extra)
