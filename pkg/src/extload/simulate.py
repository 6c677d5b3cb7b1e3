"""Synthetic single-covariate load data.

Each training pair is a block: a block-mean speed ``x_i`` from a
three-parameter Weibull, 1000 within-block speeds ``x_ij ~ N(x_i, 1)``, loads
``y_ij ~ N(mu(x_i, x_ij), sigma(x_ij))``, and the block maximum ``y_i``. The
load mean rises logistically and drops once the block mean passes the
surrogate rated speed of 17.

Reference quantiles of the long-term distribution of ``y_i`` come from
:func:`generate_reference_quantiles`. Its default ``"tail"`` method draws the
exact top order statistics of each reference dataset through the long-term
CDF (evaluated by quadrature) instead of simulating 1e8 block maxima
explicitly; ``method="brute"`` simulates every block.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from .distributions import WindDistKind, WindDistParams, wind_sample

RATED_SPEED = 17.0
SIGMA_FLOOR = 1e-4


@dataclass(frozen=True)
class SimConfig:
    n_blocks: int = 1000
    block_size: int = 1000
    weibull: WindDistParams = field(
        default_factory=lambda: WindDistParams(WindDistKind.W3, (2.0, 8.0, 3.0)))
    seed: int = 0

    def __post_init__(self):
        if self.n_blocks < 1 or self.block_size < 1:
            raise ValueError("n_blocks and block_size must be at least 1")


def sim_mu(x_block_mean, x_point):
    x_block_mean = np.asarray(x_block_mean, dtype=float)
    x_point = np.asarray(x_point, dtype=float)
    with np.errstate(over="ignore"):
        base = 1.5 / (1.0 + 48.0 * np.exp(-0.3 * x_point))
    dip = np.where(x_block_mean >= RATED_SPEED,
                   0.5 - 0.0016 * (x_block_mean + x_block_mean ** 2), 0.0)
    out = base + dip
    return float(out) if out.ndim == 0 else out


def sim_sigma(x_point):
    x_point = np.asarray(x_point, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        raw = 0.1 * np.log(x_point)
    out = np.where(x_point > 1.0, raw, SIGMA_FLOOR)
    out = np.maximum(out, SIGMA_FLOOR)
    return float(out) if out.ndim == 0 else out


def _block_maxima(x, block_size, rng, chunk=2000):
    y = np.empty(x.size)
    for start in range(0, x.size, chunk):
        xb = x[start:start + chunk, None]
        xij = xb + rng.standard_normal((xb.shape[0], block_size))
        yij = sim_mu(xb, xij) + sim_sigma(xij) * rng.standard_normal(xij.shape)
        y[start:start + chunk] = yij.max(axis=1)
    return y


def generate_training(config: SimConfig, rng: np.random.Generator | None = None):
    """Return ``(x, y)`` arrays of block-mean speeds and block-maximum loads."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    x = np.asarray(wind_sample(config.weibull, rng, size=config.n_blocks), dtype=float)
    return x, _block_maxima(x, config.block_size, rng)


# --------------------------------------------------------------------------
# long-term CDF by quadrature
# --------------------------------------------------------------------------


class LongTermLoad:
    """Survival function of a block maximum, marginal over the block mean.

    ``P(y_i > y) = E_x[1 - F(y | x)^m]`` where ``F(y | x)`` is the CDF of one
    within-block load, itself a Gauss-Hermite average over ``x_ij ~ N(x, 1)``.
    The outer expectation uses Gauss-Legendre nodes in probability space,
    split at the rated speed where the load mean is discontinuous.
    """

    def __init__(self, config: SimConfig, n_outer: int = 400, n_inner: int = 48):
        self.m = config.block_size
        frozen = config.weibull.frozen()
        u_split = float(frozen.cdf(RATED_SPEED))
        nodes, weights = np.polynomial.legendre.leggauss(n_outer)
        xs, ws = [], []
        for a, b in ((0.0, u_split), (u_split, 1.0)):
            if b - a <= 0:
                continue
            u = a + (b - a) * (nodes + 1) / 2
            xs.append(frozen.ppf(u))
            ws.append(weights * (b - a) / 2)
        self.x = np.concatenate(xs)
        self.w = np.concatenate(ws)
        hn, hw = np.polynomial.hermite_e.hermegauss(n_inner)
        self.z = hn
        self.zw = hw / hw.sum()
        xij = self.x[:, None] + self.z[None, :]
        self._mu = sim_mu(self.x[:, None], xij)
        self._sd = sim_sigma(xij)

    def log_within_cdf(self, y):
        """``log F(y | x)`` on the outer nodes, shape ``(n_outer_total,)``."""
        sf = (self.zw * special.ndtr(-(y - self._mu) / self._sd)).sum(axis=1)
        return np.log1p(-np.minimum(sf, 1.0))

    def sf(self, y) -> float:
        tail = -np.expm1(self.m * self.log_within_cdf(y))
        return float(np.dot(self.w, tail))

    def isf(self, q: float) -> float:
        """Level exceeded with probability ``q``."""
        lo, hi = 0.0, 3.0
        while self.sf(lo) < q:
            lo -= 1.0
        while self.sf(hi) > q:
            hi += 1.0
        return optimize.brentq(lambda y: np.log(self.sf(y)) - np.log(q), lo, hi,
                               xtol=1e-10, rtol=1e-12)


def _top_uniform_tails(n, k, rng):
    """Smallest ``k`` of ``n`` i.i.d. uniforms, ascending (exact joint law)."""
    partial = np.cumsum(rng.standard_exponential(k))
    total = partial[-1] + rng.standard_gamma(n + 1 - k)
    return partial / total


def _interp_order_quantile(top_desc, n, p):
    """Linear-interpolation empirical (1-p)-quantile from the top order stats.

    ``top_desc[j]`` is the (j+1)-th largest of ``n`` values.
    """
    h = (1.0 - p) * (n - 1)
    lo = int(np.floor(h))
    frac = h - lo
    j_lo = n - 1 - lo
    j_hi = max(j_lo - 1, 0)
    return top_desc[j_lo] + frac * (top_desc[j_hi] - top_desc[j_lo])


def generate_reference_quantiles(config: SimConfig, n_datasets: int = 100,
                                 dataset_size: int = 100_000, probs=(1e-4, 1e-5),
                                 rng: np.random.Generator | None = None,
                                 method: str = "tail"):
    """Observed (1-p)-quantiles of independent synthetic datasets.

    Returns an array of shape ``(n_datasets, len(probs))``.
    """
    probs = np.asarray(probs, dtype=float)
    if np.any(probs <= 0) or np.any(probs >= 1):
        raise ValueError("probs must lie inside (0, 1)")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    out = np.empty((n_datasets, probs.size))
    if method == "brute":
        for i in range(n_datasets):
            x = np.asarray(wind_sample(config.weibull, rng, size=dataset_size), dtype=float)
            y = _block_maxima(x, config.block_size, rng)
            out[i] = np.quantile(y, 1.0 - probs)
        return out
    if method != "tail":
        raise ValueError(f"unknown method {method!r}")
    need = int(np.ceil(probs.max() * (dataset_size - 1))) + 2
    need = min(need, dataset_size)
    if need > 2000:
        raise ValueError("tail method is for extreme probabilities; use method='brute'")
    lt = LongTermLoad(config)
    cache = {}

    def level(q):
        key = float(q)
        if key not in cache:
            cache[key] = lt.isf(q)
        return cache[key]

    for i in range(n_datasets):
        tails = _top_uniform_tails(dataset_size, need, rng)
        top_desc = np.array([level(q) for q in tails])
        out[i] = [_interp_order_quantile(top_desc, dataset_size, p) for p in probs]
    return out
