"""Posterior predictive of the extreme load level.

For every posterior draw of the load model, the short-term GEV parameters
are evaluated at each predictive wind pair, ``n_l`` loads are drawn from each
of those GEVs, and the empirical ``(1 - p_T)``-quantile of the pooled draws
is one sample of ``l_T``. The spread of these samples over the chain gives
the credible interval.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .distributions import GevParams, gev_sample, target_exceedance
from .mle import ParamDraw, RegressionData
from .rjs import ChainConfig, ChainResult, RegressionModel, run_chain


class ExtremeRankWarning(UserWarning):
    """The target quantile lies beyond the pool: the pool maximum is used."""


class EmptySlab(ValueError):
    pass


@dataclass
class QuantileResult:
    draws: np.ndarray
    p_t: float
    t_years: float | None = None
    n_clamped: int = 0
    level: float = 0.95
    mean: float = field(init=False)
    median: float = field(init=False)
    ci_lower: float = field(init=False)
    ci_upper: float = field(init=False)

    def __post_init__(self):
        self.draws = np.asarray(self.draws, dtype=float)
        if self.draws.size == 0:
            raise ValueError("no l_T draws")
        if not np.all(np.isfinite(self.draws)):
            raise ValueError("non-finite l_T draws")
        tail = 100 * (1 - self.level) / 2
        self.mean = float(self.draws.mean())
        self.median = float(np.median(self.draws))
        self.ci_lower, self.ci_upper = (float(q) for q in
                                        np.percentile(self.draws, [tail, 100 - tail]))

    @property
    def width(self) -> float:
        return self.ci_upper - self.ci_lower

    def summary(self) -> dict:
        return {"t_years": self.t_years, "p_t": self.p_t, "mean": self.mean,
                "median": self.median, "ci_lower": self.ci_lower,
                "ci_upper": self.ci_upper, "n_draws": int(self.draws.size),
                "n_clamped": self.n_clamped}


def upper_quantile(pool, p):
    """Empirical ``(1 - p)``-quantile with linear interpolation.

    Uses a partial sort. Returns ``(value, clamped)``; when ``len(pool) * p < 1``
    the pool maximum is returned and ``clamped`` is set.
    """
    pool = np.asarray(pool, dtype=float).ravel()
    n = pool.size
    if n == 0:
        raise ValueError("empty pool")
    if not 0 < p < 1:
        raise ValueError("p must lie inside (0, 1)")
    if n * p < 1:
        return float(pool.max()), True
    h = (1.0 - p) * (n - 1)
    lo = int(math.floor(h))
    hi = min(lo + 1, n - 1)
    part = np.partition(pool, [lo, hi])
    return float(part[lo] + (h - lo) * (part[hi] - part[lo])), False


def short_term_params(draw: ParamDraw, v, s=0.0) -> GevParams:
    """GEV parameters of every wind pair under one posterior draw."""
    return GevParams(draw.location(v, s), draw.scale(v, s), draw.xi)


def _pool(gev_table: GevParams, n_l: int, rng) -> np.ndarray:
    mu = np.repeat(np.atleast_1d(gev_table.mu), n_l)
    sigma = np.repeat(np.atleast_1d(gev_table.sigma), n_l)
    return gev_sample(GevParams(mu, sigma, gev_table.xi), rng)


def long_term_quantile(gev_table: GevParams, n_l: int, p_t, rng: np.random.Generator):
    """Monte Carlo ``(1 - p_t)``-quantile of the mixture of GEVs in the table.

    ``p_t`` may be a sequence, in which case all levels come from the same
    pool and an array is returned.
    """
    if n_l < 1:
        raise ValueError("n_l must be at least 1")
    pool = _pool(gev_table, n_l, rng)
    ps = np.atleast_1d(np.asarray(p_t, dtype=float))
    out = np.empty(ps.size)
    for i, p in enumerate(ps):
        out[i], clamped = upper_quantile(pool, p)
        if clamped:
            warnings.warn(f"pool of {pool.size} too small for p={p:g}; using its maximum",
                          ExtremeRankWarning, stacklevel=2)
    return float(out[0]) if np.ndim(p_t) == 0 else out


def _resolve_probs(t_years, probs):
    if probs is not None:
        ps = [float(p) for p in np.atleast_1d(probs)]
        return ps, [None] * len(ps)
    ts = [float(t) for t in np.atleast_1d(t_years)]
    return [target_exceedance(t) for t in ts], ts


def extreme_load_from_draws(draws, wind_v, wind_s, probs, n_l: int,
                            rng: np.random.Generator, t_years=None):
    """One ``l_T`` per posterior draw and per probability, pooled into results."""
    probs = [float(p) for p in probs]
    t_years = list(t_years) if t_years is not None else [None] * len(probs)
    values = np.empty((len(draws), len(probs)))
    clamped = np.zeros(len(probs), dtype=int)
    wind_v = np.asarray(wind_v, dtype=float)
    wind_s = np.broadcast_to(np.asarray(wind_s, dtype=float), wind_v.shape)
    for i, draw in enumerate(draws):
        pool = _pool(short_term_params(draw, wind_v, wind_s), n_l, rng)
        for j, p in enumerate(probs):
            values[i, j], c = upper_quantile(pool, p)
            clamped[j] += c
    if clamped.any():
        warnings.warn("some l_T values are pool maxima (pool too small for p_T)",
                      ExtremeRankWarning, stacklevel=2)
    return [QuantileResult(values[:, j], probs[j], t_years[j], int(clamped[j]))
            for j in range(len(probs))]


def fit_load_model(data: RegressionData, config: ChainConfig, loc_types=frozenset({1, 2, 3}),
                   scale_types=frozenset({1, 2})) -> ChainResult:
    model = RegressionModel(data, loc_types, scale_types, config.k_max)
    return run_chain(model, config)


def estimate_extreme_load(data: RegressionData, wind_pairs, chain_config: ChainConfig,
                          t_years=50.0, *, probs=None, n_l: int = 100,
                          loc_types=frozenset({1, 2, 3}), scale_types=frozenset({1, 2}),
                          chain: ChainResult | None = None):
    """Spline estimate of the extreme load level(s).

    ``wind_pairs`` is ``(v, s)`` from the wind submodel; it is reused for
    every posterior draw. Pass ``probs`` to target exceedance probabilities
    directly instead of service lives. Returns one :class:`QuantileResult`
    for a scalar target, otherwise a list in input order.
    """
    ps, ts = _resolve_probs(t_years, probs)
    if chain is None:
        chain = fit_load_model(data, chain_config, loc_types, scale_types)
    seq = np.random.SeedSequence([chain_config.seed, 1])
    rng = np.random.default_rng(seq)
    v, s = wind_pairs
    results = extreme_load_from_draws(chain.draws, v, s, ps, n_l, rng, ts)
    scalar = np.ndim(probs if probs is not None else t_years) == 0
    return results[0] if scalar else results


def pointwise_credible_band(data: RegressionData, draws, axis: str, center: float,
                            halfwidth: float | None = None, rng: np.random.Generator | None = None,
                            level: float = 0.95, n_per_pair: int = 1):
    """Central predictive interval of ``y`` over observed pairs in a covariate slab.

    ``axis`` is ``"v"`` or ``"s"``; the default half-widths are 0.5 and 0.05.
    """
    axis = axis.lower()
    if axis not in ("v", "s"):
        raise ValueError("axis must be 'v' or 's'")
    if halfwidth is None:
        halfwidth = 0.5 if axis == "v" else 0.05
    source = data.cov.v if axis == "v" else data.cov.s
    inside = np.abs(source - center) < halfwidth
    if not inside.any():
        raise EmptySlab(f"no observations with |{axis} - {center}| < {halfwidth}")
    if not draws:
        raise ValueError("no posterior draws")
    rng = rng if rng is not None else np.random.default_rng(0)
    v, s = data.cov.v[inside], data.cov.s[inside]
    pooled = []
    for draw in draws:
        table = short_term_params(draw, v, s)
        pooled.append(_pool(table, n_per_pair, rng))
    pooled = np.concatenate(pooled)
    tail = 100 * (1 - level) / 2
    lo, hi = np.percentile(pooled, [tail, 100 - tail])
    return float(lo), float(hi)
