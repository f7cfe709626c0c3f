"""Explicit transition model for the finite microworlds."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TabularModel:
    """Dense (states x actions x next-states) description of an episodic GVF problem.

    ``P[s, a, s']`` are transition probabilities, ``C`` and ``G`` hold the
    cumulant and continuation of each (s, a, s') triple. A transition with
    ``G == 0`` ends the episode; the next episode starts from ``start``.
    ``states`` lists the states that are ever occupied (and evaluated).
    """

    P: np.ndarray
    C: np.ndarray
    G: np.ndarray
    start: np.ndarray
    states: np.ndarray

    @property
    def n_states(self) -> int:
        return self.P.shape[0]

    @property
    def n_actions(self) -> int:
        return self.P.shape[1]

    def state_kernel(self, policy_table: np.ndarray) -> np.ndarray:
        """Markov kernel over occupied states, with restarts after terminations."""
        cont = self.P * (self.G > 0)
        term = (self.P * (self.G == 0)).sum(axis=2)
        K = np.einsum("sa,sat->st", policy_table, cont)
        K += np.einsum("sa,sa->s", policy_table, term)[:, None] * self.start[None, :]
        return K

    def support(self):
        """All (s, a, s') triples with positive transition probability, from occupied states."""
        mask = np.zeros_like(self.P, dtype=bool)
        mask[self.states] = self.P[self.states] > 0
        return np.nonzero(mask)


def random_mdp(n_states: int = 3, n_actions: int = 2, n_next: int = 2, gamma: float = 0.8,
               p_terminate: float = 0.2, seed: int = 0) -> TabularModel:
    """Small stochastic episodic MDP with random cumulants, for exact-enumeration checks."""
    rng = np.random.default_rng(seed)
    P = np.zeros((n_states, n_actions, n_states))
    C = np.zeros_like(P)
    G = np.zeros_like(P)
    for s in range(n_states):
        for a in range(n_actions):
            nxt = rng.choice(n_states, size=min(n_next, n_states), replace=False)
            P[s, a, nxt] = rng.dirichlet(np.ones(len(nxt)))
            C[s, a, nxt] = rng.normal(size=len(nxt))
            G[s, a, nxt] = np.where(rng.random(len(nxt)) < p_terminate, 0.0, gamma)
    start = np.full(n_states, 1.0 / n_states)
    return TabularModel(P, C, G, start, np.arange(n_states))
