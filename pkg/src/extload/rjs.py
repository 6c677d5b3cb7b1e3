"""Reversible jump sampler over hinge-basis knot configurations.

The sampler alternates an update of the location configuration with an
update of the log-scale configuration. Each update proposes BIRTH, DEATH or
MOVE, refits the conditional MLE, and accepts with probability
``min(1, exp(SIC_new - SIC_old) * R)``, where ``R`` is the ratio of reverse to
forward move-type probabilities. After burn-in every iteration emits one
coefficient draw from the normal approximation at the current MLE.
"""

from __future__ import annotations

import enum
import logging
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .basis import DEFAULT_K_MAX, Action, PhiState, propose
from .mle import GEV, FitResult, ParamDraw, RegressionData, draw_params_normal_approx, fit_mle

log = logging.getLogger(__name__)

MAX_CONSECUTIVE_FAILURES = 50


class ChainStall(RuntimeError):
    """Too many consecutive proposals whose MLE did not converge."""


class Which(enum.Enum):
    MU = "mu"
    SIGMA = "sigma"


@dataclass(frozen=True)
class ChainConfig:
    burn_in: int = 200
    n_draws: int = 500
    proposal_probs: tuple = (1 / 3, 1 / 3, 1 / 3)
    seed: int = 0
    k_max: int = DEFAULT_K_MAX

    def __post_init__(self):
        if self.burn_in < 0 or self.n_draws < 0:
            raise ValueError("burn_in and n_draws must be nonnegative")
        if len(self.proposal_probs) != 3 or any(p < 0 for p in self.proposal_probs):
            raise ValueError("proposal_probs must be three nonnegative numbers")
        if abs(sum(self.proposal_probs) - 1.0) > 1e-12:
            raise ValueError("proposal_probs must sum to 1")
        if self.k_max < 1:
            raise ValueError("k_max must be positive")


def move_probabilities(K: int, k_max: int, probs=(1 / 3, 1 / 3, 1 / 3)):
    """BIRTH/DEATH/MOVE probabilities at dimension ``K``.

    Impossible moves hand their mass to the remaining ones: at ``K = 1`` only
    BIRTH is possible; at ``K = k_max`` the BIRTH mass goes to DEATH.
    """
    b, r, m = probs
    if k_max == 1:
        return 0.0, 0.0, 0.0
    if K <= 1:
        return 1.0, 0.0, 0.0
    if K >= k_max:
        return 0.0, r + b, m
    return b, r, m


def boundary_ratio(action: Action, K: int, k_max: int, probs=(1 / 3, 1 / 3, 1 / 3)) -> float:
    """Reverse-over-forward move-type probability ratio ``R``."""
    here = move_probabilities(K, k_max, probs)
    if action is Action.BIRTH:
        return move_probabilities(K + 1, k_max, probs)[1] / here[0]
    if action is Action.DEATH:
        return move_probabilities(K - 1, k_max, probs)[0] / here[1]
    return 1.0


class RegressionModel:
    """Conditional-MLE oracle for one location/scale regression.

    Caches fits by knot configuration so re-proposals cost nothing.
    """

    def __init__(self, data: RegressionData, loc_types=frozenset({1, 2}),
                 scale_types=frozenset({1, 2}), k_max: int = DEFAULT_K_MAX,
                 family=GEV, cache_size: int = 4000):
        self.data = data
        self.family = family
        self.loc_types = frozenset(loc_types)
        self.scale_types = frozenset(scale_types)
        self.k_max = k_max
        self._cache: OrderedDict = OrderedDict()
        self._cache_size = cache_size
        self.n_fits = 0

    @property
    def covariates(self):
        return self.data.cov

    def initial_phis(self):
        return (PhiState((), self.loc_types, self.k_max),
                PhiState((), self.scale_types, self.k_max))

    def fit(self, phi_loc: PhiState, phi_scale: PhiState, warm: FitResult | None = None):
        key = (phi_loc.terms, phi_scale.terms)
        hit = self._cache.get(key)
        if hit is not None:
            self._cache.move_to_end(key)
            return hit
        init = _warm_start(warm, phi_loc, phi_scale) if warm is not None else None
        result = fit_mle(phi_loc, phi_scale, self.data, init=init, family=self.family)
        self.n_fits += 1
        self._cache[key] = result
        if len(self._cache) > self._cache_size:
            self._cache.popitem(last=False)
        return result


def _carry(old_terms, old_coef, new_terms):
    coef = np.zeros(len(new_terms) + 1)
    coef[0] = old_coef[0]
    remaining = list(enumerate(old_terms, start=1))
    for k, term in enumerate(new_terms, start=1):
        for j, (i, old) in enumerate(remaining):
            if old == term:
                coef[k] = old_coef[i]
                del remaining[j]
                break
    return coef


def _warm_start(warm: FitResult, phi_loc, phi_scale):
    if not warm.converged:
        return None
    beta = _carry(warm.phi_loc.terms, warm.beta, phi_loc.terms)
    theta = _carry(warm.phi_scale.terms, warm.theta, phi_scale.terms)
    return np.concatenate([beta, theta, warm.extra])


@dataclass
class ChainState:
    phi_mu: PhiState
    phi_sigma: PhiState
    fit: FitResult
    iteration: int = 0


@dataclass
class StepInfo:
    which: Which
    action: Action
    accepted: bool
    converged: bool
    log_alpha: float


def rjs_step(state: ChainState, which: Which, model, rng: np.random.Generator,
             probs=(1 / 3, 1 / 3, 1 / 3)):
    """One reversible-jump update of either knot configuration.

    Returns ``(new_state, StepInfo)``. Non-converged proposals are rejected.
    """
    which = Which(which)
    phi = state.phi_mu if which is Which.MU else state.phi_sigma
    b, r, m = move_probabilities(phi.K, phi.k_max, probs)
    u = rng.random()
    if b + r + m == 0:
        return state, StepInfo(which, Action.MOVE, False, True, -math.inf)
    if u < b:
        action = Action.BIRTH
    elif u < b + r:
        action = Action.DEATH
    else:
        action = Action.MOVE
    candidate = propose(phi, action, model.covariates, rng)
    if which is Which.MU:
        phis = (candidate, state.phi_sigma)
    else:
        phis = (state.phi_mu, candidate)
    fit = model.fit(*phis, warm=state.fit)
    u_accept = rng.random()
    if not fit.converged or not math.isfinite(fit.sic):
        return state, StepInfo(which, action, False, False, -math.inf)
    log_alpha = fit.sic - state.fit.sic + math.log(boundary_ratio(action, phi.K, phi.k_max, probs))
    accepted = u_accept < math.exp(min(0.0, log_alpha))
    if not accepted:
        return state, StepInfo(which, action, False, True, log_alpha)
    new_state = ChainState(phis[0], phis[1], fit, state.iteration)
    return new_state, StepInfo(which, action, True, True, log_alpha)


@dataclass
class TraceRow:
    iteration: int
    k_mu: int
    k_sigma: int
    loglik: float
    sic: float
    accepted_mu: bool
    accepted_sigma: bool


@dataclass
class ChainResult:
    draws: list
    states: list
    trace: list = field(default_factory=list)
    n_failed_fits: int = 0
    n_accepted: int = 0
    n_proposed: int = 0

    @property
    def acceptance_rate(self) -> float:
        return self.n_accepted / self.n_proposed if self.n_proposed else 0.0


def run_chain(model, config: ChainConfig,
              per_draw_callback: Callable[[ChainState, ParamDraw], None] | None = None,
              initial: ChainState | None = None) -> ChainResult:
    """Burn in, then emit exactly ``config.n_draws`` coefficient draws."""
    move_seq, draw_seq = np.random.SeedSequence(config.seed).spawn(2)
    move_rng = np.random.default_rng(move_seq)
    draw_rng = np.random.default_rng(draw_seq)

    if initial is None:
        phi_mu, phi_sigma = model.initial_phis()
        fit0 = model.fit(phi_mu, phi_sigma)
        if not fit0.converged:
            raise ChainStall("initial intercept-only fit did not converge")
        state = ChainState(phi_mu, phi_sigma, fit0, 0)
    else:
        state = initial

    result = ChainResult([], [])
    consecutive = 0
    total = config.burn_in + config.n_draws
    for it in range(total):
        accepted = {}
        for which in (Which.MU, Which.SIGMA):
            state, info = rjs_step(state, which, model, move_rng, config.proposal_probs)
            result.n_proposed += 1
            result.n_accepted += info.accepted
            accepted[which] = info.accepted
            if info.converged:
                consecutive = 0
            else:
                consecutive += 1
                result.n_failed_fits += 1
                if consecutive > MAX_CONSECUTIVE_FAILURES:
                    raise ChainStall(f"{consecutive} consecutive MLE failures at iteration {it}")
        state.iteration = it + 1
        result.trace.append(TraceRow(it + 1, state.phi_mu.K, state.phi_sigma.K,
                                     state.fit.loglik, state.fit.sic,
                                     accepted[Which.MU], accepted[Which.SIGMA]))
        if it >= config.burn_in:
            draw = draw_params_normal_approx(state.fit, draw_rng)
            snapshot = ChainState(state.phi_mu, state.phi_sigma, state.fit, state.iteration)
            result.draws.append(draw)
            result.states.append(snapshot)
            if per_draw_callback is not None:
                per_draw_callback(snapshot, draw)
    log.info("chain done: %d iterations, acceptance %.3f, %d failed fits",
             total, result.acceptance_rate, result.n_failed_fits)
    return result
