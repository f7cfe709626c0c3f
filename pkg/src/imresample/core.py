"""Shared domain types: policies, transitions, GVF questions and IS ratios."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .exceptions import CoverageViolation

PROB_TOL = 1e-12


def _check_distribution(p: np.ndarray, where: str = "") -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if np.any(p < 0):
        raise ValueError(f"negative action probability {where}")
    if abs(p.sum() - 1.0) > PROB_TOL:
        raise ValueError(f"action probabilities sum to {p.sum()!r} {where}")
    return p


class Policy:
    """Maps a state to a distribution over a small discrete action set."""

    n_actions: int

    def probs(self, state) -> np.ndarray:
        raise NotImplementedError

    def prob(self, state, action: int) -> float:
        return float(self.probs(state)[action])

    def sample(self, state, rng: np.random.Generator) -> int:
        cdf = np.cumsum(self.probs(state))
        return int(min(np.searchsorted(cdf, rng.random(), side="right"), self.n_actions - 1))

    def table(self, states: Sequence) -> np.ndarray:
        return np.stack([self.probs(s) for s in states])

    def probs_batch(self, states) -> np.ndarray:
        return self.table(states)

    def sample_batch(self, states, rng: np.random.Generator) -> np.ndarray:
        cdf = np.cumsum(self.probs_batch(states), axis=1)
        u = rng.random(len(cdf))[:, None]
        return np.minimum((u >= cdf).sum(axis=1), self.n_actions - 1)


class ConstantPolicy(Policy):
    """Same action distribution in every state."""

    def __init__(self, probs: Sequence[float], name: str = ""):
        self._p = _check_distribution(probs)
        self._p.setflags(write=False)
        self._cdf = np.cumsum(self._p)
        self.n_actions = len(self._p)
        self.name = name

    def probs(self, state=None) -> np.ndarray:
        return self._p

    def sample(self, state, rng):
        a = int(np.searchsorted(self._cdf, rng.random(), side="right"))
        return min(a, self.n_actions - 1)

    def table(self, states) -> np.ndarray:
        return np.tile(self._p, (len(states), 1))

    def __repr__(self):
        return f"ConstantPolicy({self._p.tolist()!r})"


class TabularPolicy(Policy):
    """One row of action probabilities per integer state."""

    def __init__(self, table, name: str = ""):
        table = np.array(table, dtype=float)
        if table.ndim != 2:
            raise ValueError("policy table must be 2-D (states x actions)")
        for s, row in enumerate(table):
            _check_distribution(row, where=f"in state {s}")
        table.setflags(write=False)
        self._table = table
        self._cdf = np.cumsum(table, axis=1)
        self.n_actions = table.shape[1]
        self.name = name

    def probs(self, state) -> np.ndarray:
        return self._table[int(state)]

    def sample(self, state, rng):
        a = int(np.searchsorted(self._cdf[int(state)], rng.random(), side="right"))
        return min(a, self.n_actions - 1)

    def table(self, states=None) -> np.ndarray:
        if states is None:
            return self._table
        return self._table[np.asarray(states, dtype=int)]


class RegionPolicy(Policy):
    """Default distribution, overridden inside axis-aligned boxes of a 2-D state space.

    ``regions`` holds ``((x0, y0, x1, y1), probs)`` pairs; the first box
    containing the state wins.
    """

    def __init__(self, default, regions=(), name: str = ""):
        self._default = _check_distribution(default)
        self.n_actions = len(self._default)
        self._boxes = np.array([r[0] for r in regions], dtype=float).reshape(-1, 4)
        self._probs = np.array([_check_distribution(r[1]) for r in regions]).reshape(-1, self.n_actions)
        self.name = name

    @property
    def regions(self):
        return [(tuple(b), p) for b, p in zip(self._boxes, self._probs)]

    def probs(self, state) -> np.ndarray:
        x, y = state[0], state[1]
        b = self._boxes
        inside = (b[:, 0] <= x) & (x < b[:, 2]) & (b[:, 1] <= y) & (y < b[:, 3])
        hit = np.flatnonzero(inside)
        return self._probs[hit[0]] if hit.size else self._default

    def probs_batch(self, states) -> np.ndarray:
        x = np.asarray(states, dtype=float).reshape(-1, 2)
        b = self._boxes
        inside = ((b[None, :, 0] <= x[:, :1]) & (x[:, :1] < b[None, :, 2])
                  & (b[None, :, 1] <= x[:, 1:]) & (x[:, 1:] < b[None, :, 3]))
        out = np.tile(self._default, (len(x), 1))
        any_hit = inside.any(axis=1)
        out[any_hit] = self._probs[inside[any_hit].argmax(axis=1)]
        return out

    table = probs_batch


@dataclass(frozen=True)
class Transition:
    """One observed step (S, A, S', C, gamma', rho)."""

    s: Any
    a: int
    s_next: Any
    cumulant: float
    gamma_next: float
    rho: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.gamma_next <= 1.0:
            raise ValueError(f"gamma_next must lie in [0, 1], got {self.gamma_next}")
        if self.rho < 0:
            raise ValueError(f"rho must be non-negative, got {self.rho}")

    @property
    def terminal(self) -> bool:
        return self.gamma_next == 0.0


@dataclass(frozen=True)
class GvfSpec:
    """A prediction question: target policy, cumulant and continuation."""

    target_policy: Policy
    cumulant: Callable[[Any, int, Any], float]
    continuation: Callable[[Any, int, Any], float]
    name: str = field(default="")

    def gamma(self, s, a, s_next) -> float:
        g = float(self.continuation(s, a, s_next))
        if not 0.0 <= g <= 1.0:
            raise ValueError(f"continuation returned {g}, outside [0, 1]")
        return g


def is_ratio(pi: Policy, mu: Policy, s, a: int) -> float:
    """pi(a|s) / mu(a|s), zero whenever pi(a|s) is zero."""
    p = pi.prob(s, a)
    if p == 0.0:
        return 0.0
    m = mu.prob(s, a)
    if m == 0.0:
        raise CoverageViolation(f"pi({a}|{s}) = {p} but mu({a}|{s}) = 0")
    return p / m


def ratio_table(pi_table: np.ndarray, mu_table: np.ndarray) -> np.ndarray:
    """Element-wise IS ratios for two (states x actions) probability tables."""
    pi_table = np.asarray(pi_table, dtype=float)
    mu_table = np.asarray(mu_table, dtype=float)
    if np.any((pi_table > 0) & (mu_table == 0)):
        raise CoverageViolation("target policy is not covered by behavior policy")
    out = np.zeros_like(pi_table)
    np.divide(pi_table, mu_table, out=out, where=pi_table > 0)
    return out


def max_ratio(pi: Policy, mu: Policy, states) -> float:
    return float(ratio_table(pi.table(states), mu.table(states)).max())


def td_delta(value: Callable[[Any], float], t: Transition) -> float:
    """TD error C + gamma' V(s') - V(s); V(s') is not evaluated at terminations."""
    boot = 0.0 if t.gamma_next == 0.0 else t.gamma_next * value(t.s_next)
    return t.cumulant + boot - value(t.s)
