"""Closed-form probability machinery.

GEV density, CDF, quantile and inverse-transform sampling; the six candidate
wind-speed families; the two-parameter truncated normal used for turbulence;
and the target exceedance probability for a T-year service life.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

# shapes with |xi| <= XI_EPS use the Gumbel formulas
XI_EPS = 1e-8
# floor used by optimizers in place of -inf (keeps line searches alive)
LOG_FLOOR = -1e300

MINUTES_PER_YEAR = 365.25 * 24 * 60


def target_exceedance(t_years):
    """Probability that a 10-minute maximum exceeds the T-year load level.

    This is the reciprocal of the number of 10-minute intervals in
    ``t_years`` years.
    """
    t_years = float(t_years)
    if not math.isfinite(t_years) or t_years <= 0:
        raise ValueError(f"t_years must be positive, got {t_years}")
    return 10.0 / (t_years * MINUTES_PER_YEAR)


# --------------------------------------------------------------------------
# GEV
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GevParams:
    """Location, scale and shape of a GEV distribution.

    ``mu`` and ``sigma`` may be numpy arrays (a table of distributions that
    share one shape parameter); everything below broadcasts.
    """

    mu: float | np.ndarray
    sigma: float | np.ndarray
    xi: float

    def __post_init__(self):
        sigma = np.asarray(self.sigma, dtype=float)
        if not np.all(np.isfinite(sigma)) or np.any(sigma <= 0):
            raise ValueError("GEV scale must be finite and positive")
        if not np.all(np.isfinite(np.asarray(self.mu, dtype=float))):
            raise ValueError("GEV location must be finite")
        if not math.isfinite(float(self.xi)):
            raise ValueError("GEV shape must be finite")


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(np.asarray(a, dtype=float))):
            raise ValueError("non-finite input")


def _gev_logpdf_raw(y, mu, sigma, xi):
    """Log density without validation; -inf outside support."""
    z = (np.asarray(y, dtype=float) - mu) / sigma
    if abs(xi) <= XI_EPS:
        with np.errstate(over="ignore"):
            return -np.log(sigma) - z - np.exp(-z)
    u = xi * z
    inside = u > -1.0
    u_safe = np.where(inside, u, 0.0)
    log_t = np.log1p(u_safe)
    out = -np.log(sigma) - (1.0 + 1.0 / xi) * log_t - np.exp(-log_t / xi)
    return np.where(inside, out, -np.inf)


def gev_log_pdf(y, p: GevParams):
    """Log GEV density at ``y``; exactly ``-inf`` outside the support."""
    _check_finite(y)
    out = _gev_logpdf_raw(y, p.mu, p.sigma, float(p.xi))
    return float(out) if np.ndim(out) == 0 else out


def gev_cdf(y, p: GevParams):
    _check_finite(y)
    xi = float(p.xi)
    z = (np.asarray(y, dtype=float) - p.mu) / p.sigma
    if abs(xi) <= XI_EPS:
        with np.errstate(over="ignore"):
            out = np.exp(-np.exp(-z))
    else:
        u = xi * z
        inside = u > -1.0
        log_t = np.log1p(np.where(inside, u, 0.0))
        out = np.where(inside, np.exp(-np.exp(-log_t / xi)), 0.0 if xi > 0 else 1.0)
    return float(out) if np.ndim(out) == 0 else out


def gev_quantile(p_exceed, p: GevParams):
    """Level ``l`` with ``P[Y > l] = p_exceed``.

    Written as ``mu + sigma * expm1(-xi * log w) / xi`` with
    ``w = -log(1 - p_exceed)``, which is accurate for tiny ``p_exceed`` and
    continuous through the Gumbel limit.
    """
    pe = np.asarray(p_exceed, dtype=float)
    if np.any(~np.isfinite(pe)) or np.any(pe <= 0) or np.any(pe >= 1):
        raise ValueError("p_exceed must lie strictly inside (0, 1)")
    out = _gev_quantile_raw(pe, p.mu, p.sigma, float(p.xi))
    return float(out) if np.ndim(out) == 0 else out


def _gev_quantile_raw(pe, mu, sigma, xi):
    log_w = np.log(-np.log1p(-pe))
    if abs(xi) <= XI_EPS:
        return mu - sigma * log_w
    return mu + sigma * np.expm1(-xi * log_w) / xi


def gev_sample(p: GevParams, rng: np.random.Generator, size=None):
    """Inverse-transform draws from GEV(p).

    With array-valued ``mu``/``sigma`` and ``size=None`` one draw is made
    per table entry.
    """
    if size is None:
        size = np.broadcast(np.asarray(p.mu), np.asarray(p.sigma)).shape or None
    u = rng.random(size)
    # rng.random lies in [0, 1); map 0 to the smallest positive double
    u = np.where(u > 0, u, np.finfo(float).tiny)
    out = _gev_quantile_raw(u, p.mu, p.sigma, float(p.xi))
    return float(out) if np.ndim(out) == 0 else out


# --------------------------------------------------------------------------
# wind-speed families
# --------------------------------------------------------------------------


class WindDistKind(enum.Enum):
    W2 = "W2"
    W3 = "W3"
    RAY = "RAY"
    LN3 = "LN3"
    G3 = "G3"
    IG3 = "IG3"

    @property
    def n_params(self) -> int:
        return {"W2": 2, "RAY": 1}.get(self.value, 3)

    @property
    def has_shift(self) -> bool:
        return self.n_params == 3


@dataclass(frozen=True)
class WindDistParams:
    """Parameters of one wind-speed family.

    ``nu`` is ``(shape, scale)`` for W2, ``(scale,)`` for RAY and
    ``(shape, scale, shift)`` for the three-parameter families. For LN3 the
    shape is the log-space standard deviation and the scale ``exp`` of the
    log-space mean; for IG3 the shape is the mean-to-scale ratio (scipy's
    ``invgauss`` convention).
    """

    kind: WindDistKind
    nu: tuple

    def __post_init__(self):
        nu = tuple(float(x) for x in self.nu)
        object.__setattr__(self, "nu", nu)
        if len(nu) != self.kind.n_params:
            raise ValueError(f"{self.kind.value} takes {self.kind.n_params} parameters")
        if not all(math.isfinite(x) for x in nu):
            raise ValueError("wind parameters must be finite")
        positive = nu[:2] if self.kind.has_shift else nu
        if any(x <= 0 for x in positive):
            raise ValueError("shape and scale parameters must be positive")

    @property
    def shift(self) -> float:
        return self.nu[2] if self.kind.has_shift else 0.0

    def frozen(self):
        """The equivalent frozen ``scipy.stats`` distribution."""
        k, nu = self.kind, self.nu
        if k is WindDistKind.W2:
            return stats.weibull_min(nu[0], scale=nu[1])
        if k is WindDistKind.RAY:
            return stats.rayleigh(scale=nu[0])
        family = {
            WindDistKind.W3: stats.weibull_min,
            WindDistKind.LN3: stats.lognorm,
            WindDistKind.G3: stats.gamma,
            WindDistKind.IG3: stats.invgauss,
        }[k]
        return family(nu[0], loc=nu[2], scale=nu[1])


def wind_log_pdf(v, p: WindDistParams):
    """Log density of the wind family; ``-inf`` at or below the shift."""
    v = np.asarray(v, dtype=float)
    _check_finite(v)
    with np.errstate(divide="ignore"):
        out = p.frozen().logpdf(v)
    out = np.where(v > p.shift, out, -np.inf)
    return float(out) if out.ndim == 0 else out


def wind_cdf(v, p: WindDistParams):
    out = p.frozen().cdf(np.asarray(v, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def wind_sample(p: WindDistParams, rng: np.random.Generator, size=None):
    return p.frozen().rvs(size=size, random_state=rng)


# --------------------------------------------------------------------------
# truncated normal (TN2)
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TruncNormParams:
    """Normal(eta, delta) truncated to ``(lower, inf)``.

    ``eta`` and ``delta`` may be arrays of matching shape.
    """

    eta: float | np.ndarray
    delta: float | np.ndarray
    lower: float = 0.0

    def __post_init__(self):
        delta = np.asarray(self.delta, dtype=float)
        if not np.all(np.isfinite(delta)) or np.any(delta <= 0):
            raise ValueError("truncated-normal scale must be finite and positive")
        if self.lower == np.inf:
            raise ValueError("lower truncation bound must be below +inf")


def _tn_logpdf_raw(s, eta, delta, lower):
    z = (s - eta) / delta
    log_mass = special.log_ndtr((eta - lower) / delta)
    out = -0.5 * z * z - 0.5 * math.log(2 * math.pi) - np.log(delta) - log_mass
    return np.where(s > lower, out, -np.inf)


def trunc_norm_log_pdf(s, p: TruncNormParams):
    s = np.asarray(s, dtype=float)
    _check_finite(s)
    out = _tn_logpdf_raw(s, p.eta, p.delta, p.lower)
    return float(out) if np.ndim(out) == 0 else out


def trunc_norm_mean(p: TruncNormParams):
    alpha = (p.lower - np.asarray(p.eta)) / p.delta
    # phi(alpha) / (1 - Phi(alpha)), computed on the log scale
    ratio = np.exp(stats.norm.logpdf(alpha) - special.log_ndtr(-alpha))
    return p.eta + p.delta * ratio


def trunc_norm_sample(p: TruncNormParams, rng: np.random.Generator, size=None):
    """Inverse-transform draws that are always strictly above ``lower``."""
    if size is None:
        size = np.broadcast(np.asarray(p.eta), np.asarray(p.delta)).shape or None
    eta = np.asarray(p.eta, dtype=float)
    delta = np.asarray(p.delta, dtype=float)
    alpha = (p.lower - eta) / delta
    u = rng.random(size)
    # survival-side inversion: P(Z > z | Z > alpha) = 1 - u
    z = -special.ndtri((1.0 - u) * special.ndtr(-alpha))
    s = eta + delta * z
    s = np.maximum(s, np.nextafter(p.lower, np.inf))
    return float(s) if np.ndim(s) == 0 else s
