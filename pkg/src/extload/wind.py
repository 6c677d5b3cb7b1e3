"""Wind-characteristics submodel.

Average wind speed: six candidate families fitted by maximum likelihood and
ranked by SIC. Wind-speed standard deviation given average speed: truncated
normal whose location and log-scale are hinge-basis functions of speed,
sampled by the same reversible-jump machinery as the load model. Together
they give Monte Carlo draws from the joint predictive of ``(v, s)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .distributions import (TruncNormParams, WindDistKind, WindDistParams,
                            trunc_norm_sample, wind_sample)
from .mle import EIG_FLOOR, RegressionData, TruncNormFamily
from .rjs import ChainConfig, RegressionModel, run_chain

log = logging.getLogger(__name__)

SHIFT_MARGIN = 1e-6
MAX_REDRAWS = 100


class WindFitError(RuntimeError):
    pass


@dataclass
class WindFit:
    chosen: WindDistKind
    nu_hat: WindDistParams
    nu_cov: np.ndarray
    sic_table: dict
    fits: dict = field(default_factory=dict, repr=False)


@dataclass
class FamilyFit:
    params: WindDistParams
    cov: np.ndarray
    loglik: float
    sic: float


def _loglik(kind, nu, v):
    try:
        p = WindDistParams(kind, nu)
    except ValueError:
        return -np.inf
    if kind.has_shift and p.shift >= v.min():
        return -np.inf
    with np.errstate(all="ignore"):
        ll = float(np.sum(p.frozen().logpdf(v)))
    return ll if math.isfinite(ll) else -np.inf


def _weibull_start(x):
    m, sd = x.mean(), x.std()
    k = max(min((sd / m) ** -1.086, 20.0), 0.2)
    return k, m / math.gamma(1 + 1 / k)


def _starts(kind, v):
    vmin, sd = float(v.min()), float(v.std())
    rng_span = float(v.max() - vmin)
    shifts = sorted({vmin - 0.02 * rng_span, vmin - 0.5 * sd, vmin - 2 * sd,
                     min(0.0, vmin - 0.5 * sd)})
    out = []
    if kind is WindDistKind.RAY:
        return [(math.sqrt(np.mean(v ** 2) / 2),)]
    if kind is WindDistKind.W2:
        return [_weibull_start(np.maximum(v, 1e-6))]
    for c in shifts:
        x = v - c
        if kind is WindDistKind.W3:
            out.append((*_weibull_start(x), c))
        elif kind is WindDistKind.LN3:
            lx = np.log(x)
            out.append((max(lx.std(), 1e-3), math.exp(lx.mean()), c))
        elif kind is WindDistKind.G3:
            m, var = x.mean(), x.var()
            out.append((m * m / var, var / m, c))
        elif kind is WindDistKind.IG3:
            m, var = x.mean(), x.var()
            lam = m ** 3 / var
            out.append((m / lam, lam, c))
    return out


def _to_free(kind, nu):
    nu = np.asarray(nu, dtype=float)
    free = nu.copy()
    n_pos = 2 if kind.has_shift else kind.n_params
    free[:n_pos] = np.log(nu[:n_pos])
    return free


def _from_free(kind, free):
    nu = np.asarray(free, dtype=float).copy()
    n_pos = 2 if kind.has_shift else kind.n_params
    nu[:n_pos] = np.exp(np.clip(free[:n_pos], -700, 700))
    return nu


def _fd_hessian(f, x, rel_step=1e-4):
    d = x.size
    h = rel_step * (1 + np.abs(x))
    H = np.empty((d, d))
    f0 = f(x)
    for i in range(d):
        for j in range(i, d):
            if i == j:
                e = np.zeros(d)
                e[i] = h[i]
                H[i, i] = (f(x + e) - 2 * f0 + f(x - e)) / h[i] ** 2
            else:
                ei, ej = np.zeros(d), np.zeros(d)
                ei[i], ej[j] = h[i], h[j]
                H[i, j] = H[j, i] = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej)
                                     + f(x - ei - ej)) / (4 * h[i] * h[j])
    return H


def fit_family(kind: WindDistKind, v) -> FamilyFit:
    """Maximum likelihood fit of one family with a normal-approximation covariance.

    Scales and shapes are optimized on the log scale; the shift is kept below
    the smallest observation by ``SHIFT_MARGIN``.
    """
    v = np.asarray(v, dtype=float)
    kind = WindDistKind(kind)
    upper_shift = float(v.min()) - SHIFT_MARGIN

    def negll(free):
        ll = _loglik(kind, _from_free(kind, free), v)
        return -ll if math.isfinite(ll) else 1e300

    bounds = [(-50, 50)] * (2 if kind.has_shift else kind.n_params)
    if kind.has_shift:
        bounds.append((None, upper_shift))
    best = None
    for start in _starts(kind, v):
        x0 = _to_free(kind, start)
        if kind.has_shift:
            x0[2] = min(x0[2], upper_shift)
        if not np.all(np.isfinite(x0)) or negll(x0) >= 1e300:
            continue
        res = optimize.minimize(negll, x0, method="L-BFGS-B", bounds=bounds,
                                options={"ftol": 1e-13, "gtol": 1e-8, "maxiter": 1000})
        if best is None or res.fun < best.fun:
            best = res
    if best is None or best.fun >= 1e300:
        raise WindFitError(f"{kind.value}: no feasible starting point")
    nu = _from_free(kind, best.x)
    ll = -best.fun

    def negll_nat(x):
        val = _loglik(kind, x, v)
        return -val if math.isfinite(val) else 1e300

    # information in the natural parameterization; step back from the shift bound
    nu_h = nu.copy()
    if kind.has_shift:
        h_shift = 1e-4 * (1 + abs(nu_h[2]))
        nu_h[2] = min(nu_h[2], float(v.min()) - 1.01 * h_shift)
    H = _fd_hessian(negll_nat, nu_h)
    if not np.all(np.isfinite(H)) or np.any(np.abs(H) > 1e200):
        raise WindFitError(f"{kind.value}: Hessian not finite at the optimum")
    w, V = np.linalg.eigh(0.5 * (H + H.T))
    cov = (V / np.maximum(w, EIG_FLOOR)) @ V.T
    params = WindDistParams(kind, tuple(nu))
    return FamilyFit(params, 0.5 * (cov + cov.T), ll,
                     ll - 0.5 * kind.n_params * math.log(v.size))


def select_wind_family(v_data, kinds=tuple(WindDistKind)) -> WindFit:
    """Fit every candidate family and keep the one with the largest SIC."""
    v = np.asarray(v_data, dtype=float)
    if v.size < 30:
        raise ValueError("need at least 30 wind-speed observations")
    if np.any(~np.isfinite(v)) or np.any(v <= 0):
        raise ValueError("wind speeds must be finite and positive")
    fits = {}
    for kind in kinds:
        try:
            fits[kind] = fit_family(kind, v)
        except (WindFitError, ValueError, np.linalg.LinAlgError) as exc:
            log.warning("wind family %s excluded: %s", WindDistKind(kind).value, exc)
    if not fits:
        raise WindFitError("every candidate wind family failed to fit")
    table = {k: f.sic for k, f in fits.items()}
    chosen = max(table, key=table.get)
    return WindFit(chosen, fits[chosen].params, fits[chosen].cov, table, fits)


# --------------------------------------------------------------------------
# turbulence
# --------------------------------------------------------------------------


@dataclass
class TurbulenceFit:
    draws: list
    chain: object = field(default=None, repr=False)

    @property
    def phi_eta(self):
        return self.draws[-1].phi_loc if self.draws else None

    @property
    def phi_delta(self):
        return self.draws[-1].phi_scale if self.draws else None


def fit_turbulence(v_data, s_data, config: ChainConfig, lower: float = 0.0) -> TurbulenceFit:
    """Hinge-basis truncated-normal regression of ``s`` on ``v`` by RJS."""
    v = np.asarray(v_data, dtype=float)
    s = np.asarray(s_data, dtype=float)
    if v.shape != s.shape:
        raise ValueError("v and s must have the same length")
    data = RegressionData(s, v, 0.0)
    model = RegressionModel(data, loc_types={1}, scale_types={1}, k_max=config.k_max,
                            family=TruncNormFamily(lower))
    chain = run_chain(model, config)
    return TurbulenceFit(chain.draws, chain)


# --------------------------------------------------------------------------
# joint predictive sampling
# --------------------------------------------------------------------------


def draw_wind_params(wind: WindFit, rng: np.random.Generator) -> WindDistParams:
    """Normal-approximation draw of the wind parameters, redrawn until valid."""
    chol = np.linalg.cholesky(wind.nu_cov)
    mean = np.asarray(wind.nu_hat.nu)
    for _ in range(MAX_REDRAWS):
        nu = mean + chol @ rng.standard_normal(mean.size)
        try:
            return WindDistParams(wind.chosen, tuple(nu))
        except ValueError:
            continue
    raise WindFitError(f"no valid wind-parameter draw in {MAX_REDRAWS} attempts")


def sample_wind_joint(wind: WindFit, turb: TurbulenceFit | None, m_w: int, n_w: int,
                      rng: np.random.Generator, lower: float = 0.0):
    """``m_w * n_w`` predictive draws of ``(v, s)``.

    Each outer repetition draws fresh wind parameters, ``n_w`` speeds, and
    uses one turbulence posterior draw (cycling through ``turb.draws``). With
    ``turb=None`` (single-covariate data) every ``s`` is zero.
    """
    if m_w < 1 or n_w < 1:
        raise ValueError("m_w and n_w must be at least 1")
    v_out = np.empty((m_w, n_w))
    s_out = np.zeros((m_w, n_w))
    for j in range(m_w):
        params = draw_wind_params(wind, rng)
        v = np.atleast_1d(np.asarray(wind_sample(params, rng, size=n_w), dtype=float))
        v_out[j] = v
        if turb is not None:
            if not turb.draws:
                raise ValueError("turbulence fit has no posterior draws")
            d = turb.draws[j % len(turb.draws)]
            tn = TruncNormParams(d.location(v), d.scale(v), lower)
            s_out[j] = trunc_norm_sample(tn, rng)
    return v_out.ravel(), s_out.ravel()

