"""Quantile scoring and the repeated train/test comparison.

The generalized piecewise linear (GPL) loss scores a tau-quantile forecast
``l_hat`` against an outcome ``y``::

    b != 0:  (1{l_hat >= y} - tau) * (l_hat**b - y**b) / |b|
    b == 0:  (1{l_hat >= y} - tau) * log(l_hat / y)

``b = 1`` is the ordinary pinball loss.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .binning import BinGrid, BinningError, fit_binned
from .distributions import GevParams, gev_sample
from .estimator import short_term_params
from .mle import RegressionData
from .rjs import ChainConfig, ChainStall, RegressionModel, run_chain

log = logging.getLogger(__name__)

DEFAULT_TAUS = (0.9, 0.99)
DEFAULT_BS = (0.0, 1.0, 2.0)
TAU_SWEEP = (0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99)


def gpl_score(l_hat, y, tau, b):
    """GPL loss, elementwise over broadcast inputs."""
    l_hat = np.asarray(l_hat, dtype=float)
    y = np.asarray(y, dtype=float)
    if not 0 < tau < 1:
        raise ValueError("tau must lie inside (0, 1)")
    if b <= 0 and (np.any(l_hat <= 0) or np.any(y <= 0)):
        raise ValueError("GPL with b <= 0 needs positive forecasts and outcomes")
    ind = (l_hat >= y).astype(float) - tau
    if b == 0:
        out = ind * np.log(l_hat / y)
    else:
        with np.errstate(invalid="ignore"):
            out = ind * (l_hat ** b - y ** b) / abs(b)
    if not np.all(np.isfinite(out)):
        raise ValueError("GPL score is not finite for these arguments")
    return float(out) if out.ndim == 0 else out


def mean_score(estimates, observations, tau, b) -> float:
    estimates = np.asarray(estimates, dtype=float).ravel()
    observations = np.asarray(observations, dtype=float).ravel()
    if estimates.size != observations.size:
        raise ValueError("estimates and observations differ in length")
    if estimates.size == 0:
        raise ValueError("nothing to score")
    return float(np.mean(gpl_score(estimates, observations, tau, b)))


@dataclass
class ScoreReport:
    tau: float
    b: float
    mean_scores: dict
    n_repeats: int
    per_repeat: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.n_repeats < 1:
            raise ValueError("a score report needs at least one repeat")
        if not all(math.isfinite(v) for v in self.mean_scores.values()):
            raise ValueError("mean scores must be finite")

    @property
    def reduction_pct(self) -> float:
        """Percent reduction of the spline score relative to binning."""
        base = self.mean_scores["binning"]
        if base == 0:
            return 0.0
        return 100.0 * (base - self.mean_scores["spline"]) / base


def reduction_pct(baseline: float, challenger: float) -> float:
    return 0.0 if baseline == 0 else 100.0 * (baseline - challenger) / baseline


def spline_quantiles(draws, v, s, taus, n_l: int, rng: np.random.Generator):
    """Predictive tau-quantiles at each covariate pair.

    Pools ``n_l`` short-term draws per pair from every posterior draw given.
    Returns shape ``(len(taus), len(v))``.
    """
    v = np.atleast_1d(np.asarray(v, dtype=float))
    s = np.broadcast_to(np.asarray(s, dtype=float), v.shape)
    pooled = np.empty((v.size, len(draws) * n_l))
    for k, draw in enumerate(draws):
        p = short_term_params(draw, v, s)
        mu = np.broadcast_to(np.asarray(p.mu, dtype=float)[:, None], (v.size, n_l))
        sigma = np.broadcast_to(np.asarray(p.sigma, dtype=float)[:, None], (v.size, n_l))
        pooled[:, k * n_l:(k + 1) * n_l] = gev_sample(GevParams(mu, sigma, p.xi), rng)
    return np.quantile(pooled, np.asarray(taus, dtype=float), axis=1)


def _thin(draws, n_keep):
    if len(draws) <= n_keep:
        return list(draws)
    idx = np.linspace(0, len(draws) - 1, n_keep).round().astype(int)
    return [draws[i] for i in idx]


def _types_for(data: RegressionData):
    if np.ptp(data.cov.s) == 0:
        return frozenset({1}), frozenset({1})
    return frozenset({1, 2, 3}), frozenset({1, 2})


def compare_methods(data: RegressionData, tau_list=DEFAULT_TAUS, b_list=DEFAULT_BS,
                    n_repeats: int = 10, split_frac: float = 0.8,
                    rng: np.random.Generator | None = None,
                    chain_config: ChainConfig | None = None, n_post: int = 50,
                    n_l: int = 100, grid_shape=(10, 6), loc_types=None, scale_types=None):
    """Repeated random-split comparison of the spline and binning methods.

    Returns a list of :class:`ScoreReport`, one per ``(tau, b)`` in
    ``tau_list`` x ``b_list`` order. Repeats where either fit fails are
    logged and skipped.
    """
    if not 0 < split_frac < 1:
        raise ValueError("split_frac must lie inside (0, 1)")
    if n_repeats < 1:
        raise ValueError("n_repeats must be at least 1")
    n_train = int(round(split_frac * data.n))
    if n_train < 10 or data.n - n_train < 1:
        raise ValueError("data too small for the requested split")
    rng = rng if rng is not None else np.random.default_rng(0)
    chain_config = chain_config or ChainConfig()
    d_loc, d_scale = _types_for(data)
    loc_types = frozenset(loc_types) if loc_types is not None else d_loc
    scale_types = frozenset(scale_types) if scale_types is not None else d_scale
    taus = [float(t) for t in tau_list]
    bs = [float(b) for b in b_list]

    scores = {(t, b): {"spline": [], "binning": []} for t in taus for b in bs}
    seeds = rng.integers(0, 2 ** 63 - 1, size=n_repeats)
    done = 0
    for r in range(n_repeats):
        sub = np.random.default_rng(seeds[r])
        perm = sub.permutation(data.n)
        train, test = data.subset(perm[:n_train]), data.subset(perm[n_train:])
        try:
            cfg = ChainConfig(chain_config.burn_in, chain_config.n_draws,
                              chain_config.proposal_probs, int(seeds[r] % 2 ** 32),
                              chain_config.k_max)
            chain = run_chain(RegressionModel(train, loc_types, scale_types, cfg.k_max), cfg)
            grid = BinGrid.from_data(train.cov.v, train.cov.s, *grid_shape)
            binned = fit_binned(train, grid)
        except (ChainStall, BinningError, ValueError, np.linalg.LinAlgError) as exc:
            log.warning("repeat %d skipped: %s", r, exc)
            continue
        q_spline = spline_quantiles(_thin(chain.draws, n_post), test.cov.v, test.cov.s,
                                    taus, n_l, sub)
        for i, t in enumerate(taus):
            q_bin = binned.quantile_at(t, test.cov.v, test.cov.s)
            for b in bs:
                scores[(t, b)]["spline"].append(mean_score(q_spline[i], test.y, t, b))
                scores[(t, b)]["binning"].append(mean_score(q_bin, test.y, t, b))
        done += 1
    if done == 0:
        raise RuntimeError("every repeat failed")
    return [ScoreReport(t, b, {m: float(np.mean(v)) for m, v in per.items()}, done,
                        {m: list(v) for m, v in per.items()})
            for (t, b), per in scores.items()]


def score_table(reports):
    """Rows of (tau, b, spline, binning, reduction_pct) for printing."""
    return [{"tau": r.tau, "b": r.b, "spline": r.mean_scores["spline"],
             "binning": r.mean_scores["binning"], "reduction_pct": r.reduction_pct}
            for r in reports]


def quantile_difference_grid(binned, draws, data: RegressionData, tau: float = 0.99,
                             n_l: int = 100, rng: np.random.Generator | None = None):
    """Per-bin difference of conditional ``tau``-quantiles, binning minus spline.

    Each nonempty, non-excluded bin is represented by the median ``(v, s)``
    of its observations. ``standardized`` divides the differences by their
    standard deviation over the compared bins. Returns a dict of columns.
    """
    if not draws:
        raise ValueError("no posterior draws")
    rng = rng if rng is not None else np.random.default_rng(0)
    grid = binned.grid
    idx = grid.index(data.cov.v, data.cov.s)
    bins = [b for b in range(grid.n_bins) if b not in grid.excluded and np.any(idx == b)]
    if not bins:
        raise ValueError("no bins to compare")
    v_med = np.array([np.median(data.cov.v[idx == b]) for b in bins])
    s_med = np.array([np.median(data.cov.s[idx == b]) for b in bins])
    q_spline = spline_quantiles(draws, v_med, s_med, [tau], n_l, rng)[0]
    q_bin = np.asarray(binned.quantile_at(tau, v_med, s_med), dtype=float)
    diff = q_bin - q_spline
    sd = float(np.std(diff, ddof=1)) if diff.size > 1 else 0.0
    std = diff / sd if sd > 0 else np.zeros_like(diff)
    return {"bin": np.array(bins), "v_median": v_med, "s_median": s_med,
            "count": np.array([int(np.sum(idx == b)) for b in bins]),
            "binning": q_bin, "spline": q_spline, "difference": diff, "standardized": std}
