"""Variable-dimension hinge-basis machinery.

A model function is ``f(v, s) = sum_k beta_k B_k(v, s)`` with ``B_1 = 1`` and
every other ``B_k`` one of three hinge types:

* type 1: ``[h (v - t)]_+``
* type 2: ``[h (s - t)]_+``
* type 3: ``[h1 (v - t1)]_+ [h2 (s - t2)]_+``

:class:`PhiState` holds the configuration (number of terms, types, signs and
knots); the coefficients live elsewhere.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_K_MAX = 40


class IllegalMove(ValueError):
    """A DEATH or MOVE proposed on an intercept-only state, or BIRTH at k_max."""


class Action(enum.Enum):
    BIRTH = "birth"
    DEATH = "death"
    MOVE = "move"


@dataclass(frozen=True)
class BasisTerm:
    t_type: int
    signs: tuple
    knots: tuple

    def __post_init__(self):
        n = 2 if self.t_type == 3 else 1
        if self.t_type not in (1, 2, 3):
            raise ValueError(f"unknown basis type {self.t_type}")
        signs = tuple(int(h) for h in self.signs)
        knots = tuple(float(t) for t in self.knots)
        if len(signs) != n or len(knots) != n:
            raise ValueError(f"type {self.t_type} needs {n} sign(s) and knot(s)")
        if any(h not in (-1, 1) for h in signs):
            raise ValueError("signs must be +1 or -1")
        object.__setattr__(self, "signs", signs)
        object.__setattr__(self, "knots", knots)

    def __call__(self, v, s):
        return eval_basis(self, v, s)


@dataclass(frozen=True)
class PhiState:
    terms: tuple = ()
    allowed_types: frozenset = field(default_factory=lambda: frozenset({1, 2}))
    k_max: int = DEFAULT_K_MAX

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        object.__setattr__(self, "allowed_types", frozenset(self.allowed_types))
        if not self.allowed_types or not self.allowed_types <= {1, 2, 3}:
            raise ValueError("allowed_types must be a nonempty subset of {1, 2, 3}")
        if self.k_max < 1:
            raise ValueError("k_max must be positive")
        if self.K > self.k_max:
            raise ValueError(f"K={self.K} exceeds k_max={self.k_max}")
        for term in self.terms:
            if term.t_type not in self.allowed_types:
                raise ValueError(f"type {term.t_type} not allowed here")

    @property
    def K(self) -> int:
        return len(self.terms) + 1

    def with_terms(self, terms) -> "PhiState":
        return PhiState(tuple(terms), self.allowed_types, self.k_max)

    def describe(self) -> str:
        parts = ["1"]
        for t in self.terms:
            names = ("v", "s") if t.t_type == 3 else (("v",) if t.t_type == 1 else ("s",))
            parts.append("*".join(
                f"[{'+' if h > 0 else '-'}({x}-{k:.4g})]+"
                for h, x, k in zip(t.signs, names, t.knots)
            ))
        return " + ".join(parts)


def eval_basis(term: BasisTerm, v, s):
    v = np.asarray(v, dtype=float)
    s = np.asarray(s, dtype=float)
    if term.t_type == 1:
        return np.maximum(term.signs[0] * (v - term.knots[0]), 0.0)
    if term.t_type == 2:
        return np.maximum(term.signs[0] * (s - term.knots[0]), 0.0)
    return (np.maximum(term.signs[0] * (v - term.knots[0]), 0.0)
            * np.maximum(term.signs[1] * (s - term.knots[1]), 0.0))


def design_row(phi: PhiState, v: float, s: float) -> np.ndarray:
    row = np.empty(phi.K)
    row[0] = 1.0
    for k, term in enumerate(phi.terms, start=1):
        row[k] = eval_basis(term, v, s)
    return row


def design_matrix(phi: PhiState, v, s) -> np.ndarray:
    """Stack of design rows, shape ``(len(v), K)``."""
    v = np.asarray(v, dtype=float)
    s = np.broadcast_to(np.asarray(s, dtype=float), v.shape)
    X = np.empty((v.size, phi.K))
    X[:, 0] = 1.0
    for k, term in enumerate(phi.terms, start=1):
        X[:, k] = eval_basis(term, v, s)
    return X


def log_prior_phi(phi: PhiState, n_obs: int) -> float:
    """Log of the uniform prior masses on ``(K, types, signs, knots)``."""
    if n_obs < 1:
        raise ValueError("n_obs must be at least 1")
    if phi.K > phi.k_max:
        raise ValueError("K exceeds k_max")
    log_n = math.log(n_obs)
    out = -log_n
    log_type = -math.log(len(phi.allowed_types))
    for term in phi.terms:
        out += log_type + len(term.signs) * (-math.log(2.0) - log_n)
    return out


@dataclass(frozen=True)
class Covariates:
    """Observed covariate values that knots are drawn from."""

    v: np.ndarray
    s: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float)
        s = np.broadcast_to(np.asarray(self.s, dtype=float), v.shape)
        if v.size == 0:
            raise ValueError("no covariate values")
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "s", np.array(s))


def random_term(allowed_types, data: Covariates, rng: np.random.Generator) -> BasisTerm:
    """Draw a term uniformly: type, sign(s), and knot(s) from observed values."""
    types = sorted(allowed_types)
    t_type = types[rng.integers(len(types))]
    n = data.v.size
    if t_type == 3:
        signs = tuple(int(h) for h in rng.choice((-1, 1), size=2))
        knots = (data.v[rng.integers(n)], data.s[rng.integers(n)])
    else:
        signs = (int(rng.choice((-1, 1))),)
        source = data.v if t_type == 1 else data.s
        knots = (source[rng.integers(n)],)
    return BasisTerm(t_type, signs, knots)


def propose(phi: PhiState, action: Action, data: Covariates,
            rng: np.random.Generator) -> PhiState:
    action = Action(action)
    if action is Action.BIRTH:
        if phi.K >= phi.k_max:
            raise IllegalMove("BIRTH at k_max")
        return phi.with_terms(phi.terms + (random_term(phi.allowed_types, data, rng),))
    if phi.K < 2:
        raise IllegalMove(f"{action.name} needs at least one non-intercept term")
    drop = int(rng.integers(len(phi.terms)))
    reduced = phi.with_terms(phi.terms[:drop] + phi.terms[drop + 1:])
    if action is Action.DEATH:
        return reduced
    return reduced.with_terms(reduced.terms + (random_term(phi.allowed_types, data, rng),))
