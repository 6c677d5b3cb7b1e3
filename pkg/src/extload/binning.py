"""The binning baseline.

The covariate plane is cut into a grid. A single GEV shape is fitted to all
loads pooled together and then held fixed, while each nonempty bin gets its
own location and scale by maximum likelihood. Empty bins borrow a weighted
average of the fitted bins, with weights proportional to inverse squared
distance between bin centers. The extreme load level and its interval come
from repeated normal-approximation draws of the per-bin parameters.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from .basis import PhiState
from .distributions import GevParams, gev_quantile
from .estimator import QuantileResult, _pool, upper_quantile
from .mle import GEV, RegressionData, _invert_information, fit_mle, numeric_hessian

log = logging.getLogger(__name__)


class BinningError(RuntimeError):
    pass


def _edges(values, n_bins):
    lo, hi = float(np.min(values)), float(np.max(values))
    if hi - lo <= 1e-12:
        return np.array([lo - 0.5, hi + 0.5])
    return np.linspace(lo, hi, n_bins + 1)


@dataclass(frozen=True)
class BinGrid:
    v_edges: np.ndarray
    s_edges: np.ndarray
    excluded: frozenset = frozenset()
    # standardization used for bin-center distances
    v_scale: float = 1.0
    s_scale: float = 1.0

    def __post_init__(self):
        for name in ("v_edges", "s_edges"):
            e = np.asarray(getattr(self, name), dtype=float)
            if e.ndim != 1 or e.size < 2 or np.any(np.diff(e) <= 0):
                raise ValueError(f"{name} must be strictly increasing with >= 2 entries")
            object.__setattr__(self, name, e)
        object.__setattr__(self, "excluded", frozenset(int(i) for i in self.excluded))
        if self.v_scale <= 0 or self.s_scale <= 0:
            raise ValueError("standardization scales must be positive")

    @classmethod
    def from_data(cls, v, s, n_v: int = 10, n_s: int = 6, excluded=frozenset()):
        v, s = np.asarray(v, dtype=float), np.asarray(s, dtype=float)
        sv, ss = float(np.std(v)), float(np.std(s))
        return cls(_edges(v, n_v), _edges(s, n_s), frozenset(excluded),
                   sv if sv > 0 else 1.0, ss if ss > 0 else 1.0)

    @property
    def n_v(self) -> int:
        return self.v_edges.size - 1

    @property
    def n_s(self) -> int:
        return self.s_edges.size - 1

    @property
    def n_bins(self) -> int:
        return self.n_v * self.n_s

    def index(self, v, s):
        """Flat bin index; values outside the grid go to the nearest edge bin."""
        iv = np.searchsorted(self.v_edges[1:-1], np.asarray(v, dtype=float), side="right")
        is_ = np.searchsorted(self.s_edges[1:-1], np.asarray(s, dtype=float), side="right")
        return iv * self.n_s + is_

    def ranges(self, idx: int):
        iv, is_ = divmod(int(idx), self.n_s)
        return ((self.v_edges[iv], self.v_edges[iv + 1]),
                (self.s_edges[is_], self.s_edges[is_ + 1]))

    def centers(self) -> np.ndarray:
        """Standardized bin centers, shape ``(n_bins, 2)``."""
        cv = 0.5 * (self.v_edges[1:] + self.v_edges[:-1]) / self.v_scale
        cs = 0.5 * (self.s_edges[1:] + self.s_edges[:-1]) / self.s_scale
        return np.column_stack([np.repeat(cv, self.n_s), np.tile(cs, self.n_v)])


def low_likelihood_bins(grid: BinGrid, wind_v, wind_s, n_obs: int, threshold: float = 0.5):
    """Bins whose expected count among ``n_obs`` records is below ``threshold``.

    The expectation uses the empirical bin frequencies of predictive wind
    draws.
    """
    idx = grid.index(wind_v, wind_s)
    freq = np.bincount(idx, minlength=grid.n_bins) / idx.size
    return frozenset(int(i) for i in np.flatnonzero(freq * n_obs < threshold))


@dataclass
class BinFit:
    mu: float
    sigma: float
    count: int
    source: str
    # covariance of (mu, log sigma); None for interpolated bins
    cov: np.ndarray | None = None


@dataclass
class BinnedModel:
    per_bin: dict
    xi_shared: float
    grid: BinGrid
    xi_se: float = float("nan")
    pooled: object = field(default=None, repr=False)

    @property
    def fitted_bins(self):
        return sorted(i for i, b in self.per_bin.items() if b.source != "interpolated")

    def params_at(self, v, s=0.0) -> GevParams:
        idx = np.atleast_1d(self.grid.index(v, s))
        mu = np.array([self.per_bin[i].mu for i in idx])
        sigma = np.array([self.per_bin[i].sigma for i in idx])
        return GevParams(mu, sigma, self.xi_shared)

    def quantile_at(self, tau, v, s=0.0):
        """Closed-form ``tau``-quantile of the short-term distribution."""
        return gev_quantile(1.0 - tau, self.params_at(v, s))


def interpolation_weights(target: int, sources, grid: BinGrid) -> np.ndarray:
    centers = grid.centers()
    d2 = np.sum((centers[list(sources)] - centers[target]) ** 2, axis=1)
    if np.any(d2 <= 0):
        raise ValueError("target bin coincides with a source bin")
    w = 1.0 / d2
    return w / w.sum()


def interpolate_empty_bin(target: int, fitted: dict, grid: BinGrid):
    """Inverse-squared-distance average of ``(mu, sigma)`` over fitted bins."""
    if not fitted:
        raise BinningError("no fitted bins to interpolate from")
    sources = sorted(fitted)
    w = interpolation_weights(target, sources, grid)
    vals = np.array([fitted[j] for j in sources], dtype=float)
    mu, sigma = w @ vals
    return float(mu), float(sigma)


def _fit_bin(y, xi):
    """MLE of (mu, log sigma) with the shape held at ``xi``."""
    extra = np.array([xi])

    def neg(p):
        ll, d_mu, d_ls, _ = GEV.terms(y, p[0], p[1], extra)
        if ll is None:
            return 1e300, np.zeros(2)
        return -ll, -np.array([np.sum(d_mu), np.sum(d_ls)])

    def grad(p):
        ll, d_mu, d_ls, _ = GEV.terms(y, p[0], p[1], extra)
        return None if ll is None else np.array([np.sum(d_mu), np.sum(d_ls)])

    x0 = np.array(_mom(y, xi, None))
    x0[1] = math.log(x0[1])
    res = optimize.minimize(neg, x0, jac=True, method="L-BFGS-B",
                            options={"ftol": 1e-14, "gtol": 1e-9, "maxiter": 500})
    if not np.isfinite(res.fun) or res.fun >= 1e300:
        return None
    H = numeric_hessian(grad, res.x)
    if H is None or not np.all(np.isfinite(H)):
        return None
    cov, _ = _invert_information(-H)
    return float(res.x[0]), float(math.exp(res.x[1])), cov


def _mom(y, xi, sigma_fallback):
    """Method-of-moments (mu, sigma) for a fixed shape."""
    y = np.asarray(y, dtype=float)
    if abs(xi) < 1e-6:
        c_mean, c_var = 0.5772156649, math.pi ** 2 / 6
    else:
        g1, g2 = special.gamma(1 - xi), special.gamma(1 - 2 * xi)
        c_mean, c_var = (g1 - 1) / xi, (g2 - g1 ** 2) / xi ** 2
    sd = float(np.std(y, ddof=1)) if y.size > 1 else 0.0
    if sd > 0:
        sigma = sd / math.sqrt(c_var)
    elif sigma_fallback is not None:
        sigma = sigma_fallback
    else:
        sigma = max(abs(float(np.mean(y))) * 0.1, 1e-3)
    return float(np.mean(y)) - sigma * c_mean, sigma


def fit_binned(data: RegressionData, grid: BinGrid) -> BinnedModel:
    """Per-bin GEV fits with a shared shape from a pooled fit."""
    v, s, y = data.cov.v, data.cov.s, data.y
    idx = grid.index(v, s)
    keep = ~np.isin(idx, list(grid.excluded))
    if not keep.any():
        raise BinningError("every observation falls in an excluded bin")
    pooled = fit_mle(PhiState(), PhiState(), data.subset(keep) if not keep.all() else data)
    if not pooled.converged:
        raise BinningError("pooled GEV fit did not converge")
    xi = float(pooled.xi_hat)
    pooled_cov = pooled.cov[np.ix_([0, 1], [0, 1])]
    n_pool = int(keep.sum())

    per_bin = {}
    for b in range(grid.n_bins):
        if b in grid.excluded:
            continue
        yb = y[idx == b]
        if yb.size == 0:
            continue
        fit = _fit_bin(yb, xi) if yb.size >= 3 else None
        if fit is not None:
            per_bin[b] = BinFit(fit[0], fit[1], int(yb.size), "mle", fit[2])
        else:
            mu, sigma = _mom(yb, xi, float(math.exp(pooled.theta[0])))
            per_bin[b] = BinFit(mu, sigma, int(yb.size), "mom", pooled_cov * n_pool / yb.size)
    if not per_bin:
        raise BinningError("no nonempty bins")
    fitted = {b: (f.mu, f.sigma) for b, f in per_bin.items()}
    for b in range(grid.n_bins):
        if b not in per_bin:
            mu, sigma = interpolate_empty_bin(b, fitted, grid)
            per_bin[b] = BinFit(mu, sigma, 0, "interpolated")
    return BinnedModel(per_bin, xi, grid, float(pooled.std_errors[-1]), pooled)


def _draw_bin_params(model: BinnedModel, rng):
    """One set of per-bin (mu, sigma) drawn from the bin normal approximations."""
    fitted = model.fitted_bins
    mus = np.empty(model.grid.n_bins)
    sigmas = np.empty(model.grid.n_bins)
    for b in fitted:
        f = model.per_bin[b]
        z = np.linalg.cholesky(f.cov) @ rng.standard_normal(2)
        mus[b] = f.mu + z[0]
        sigmas[b] = f.sigma * math.exp(z[1])
    drawn = {b: (mus[b], sigmas[b]) for b in fitted}
    for b in range(model.grid.n_bins):
        if b not in drawn:
            mus[b], sigmas[b] = interpolate_empty_bin(b, drawn, model.grid)
    return mus, sigmas


def binned_extreme_load(model: BinnedModel, wind_pairs, probs, m_l: int, n_l: int,
                        rng: np.random.Generator, t_years=None):
    """Repeated-draw extreme load levels for the binning method.

    Each of the ``m_l`` repetitions draws every bin's parameters, routes the
    predictive wind pairs to their bins, pools ``n_l`` loads per pair and
    takes the empirical quantile. Returns one :class:`QuantileResult` per
    probability.
    """
    probs = [float(p) for p in np.atleast_1d(probs)]
    t_years = list(t_years) if t_years is not None else [None] * len(probs)
    v, s = (np.asarray(a, dtype=float) for a in wind_pairs)
    route = model.grid.index(v, np.broadcast_to(s, v.shape))
    values = np.empty((m_l, len(probs)))
    clamped = np.zeros(len(probs), dtype=int)
    for r in range(m_l):
        mus, sigmas = _draw_bin_params(model, rng)
        pool = _pool(GevParams(mus[route], sigmas[route], model.xi_shared), n_l, rng)
        for j, p in enumerate(probs):
            values[r, j], c = upper_quantile(pool, p)
            clamped[j] += c
    return [QuantileResult(values[:, j], probs[j], t_years[j], int(clamped[j]))
            for j in range(len(probs))]


def bin_summary(model: BinnedModel):
    """Rows of (index, v-range, s-range, count, mu, sigma, interpolated)."""
    rows = []
    for b in range(model.grid.n_bins):
        (v0, v1), (s0, s1) = model.grid.ranges(b)
        f = model.per_bin.get(b)
        if f is None:
            continue
        rows.append({"bin": b, "v_lo": v0, "v_hi": v1, "s_lo": s0, "s_hi": s1,
                     "count": f.count, "mu": f.mu, "sigma": f.sigma,
                     "source": f.source, "interpolated": f.source == "interpolated"})
    return rows
