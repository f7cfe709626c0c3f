"""Random-walk Markov chain with absorbing ends."""

from __future__ import annotations

import numpy as np

from ..core import Transition
from ..exceptions import InvalidState
from .tabular import TabularModel

LEFT, RIGHT = 0, 1


class ChainEnv:
    """Chain of ``n_nonterminal`` states (1..n) between terminals 0 and n+1.

    Stepping into the right terminal yields cumulant 1, every termination has
    continuation 0 and interior moves have continuation 1. With ``auto_reset``
    the next episode starts uniformly in 1..n right after a termination.
    """

    n_actions = 2

    def __init__(self, n_nonterminal: int = 8, rng=None, auto_reset: bool = True):
        self.n_nonterminal = n_nonterminal
        self.n_states = n_nonterminal + 2
        self.right_terminal = n_nonterminal + 1
        self.rng = np.random.default_rng(rng)
        self.auto_reset = auto_reset
        self.state = self.reset()

    @property
    def eval_states(self) -> np.ndarray:
        return np.arange(1, self.n_nonterminal + 1)

    def is_terminal(self, s: int) -> bool:
        return s == 0 or s == self.right_terminal

    def reset(self) -> int:
        self.state = int(self.rng.integers(1, self.n_nonterminal + 1))
        return self.state

    def step(self, a: int, rho: float = 1.0) -> Transition:
        s = self.state
        if self.is_terminal(s):
            raise InvalidState(f"chain stepped from terminal state {s}")
        s_next = s + 1 if a == RIGHT else s - 1
        if s_next == self.right_terminal:
            t = Transition(s, a, s_next, 1.0, 0.0, rho)
        elif s_next == 0:
            t = Transition(s, a, s_next, 0.0, 0.0, rho)
        else:
            t = Transition(s, a, s_next, 0.0, 1.0, rho)
        self.state = s_next
        if t.gamma_next == 0.0 and self.auto_reset:
            self.reset()
        return t

    def model(self) -> TabularModel:
        n = self.n_states
        P = np.zeros((n, 2, n))
        C = np.zeros((n, 2, n))
        G = np.zeros((n, 2, n))
        for s in range(1, self.right_terminal):
            for a, s2 in ((LEFT, s - 1), (RIGHT, s + 1)):
                P[s, a, s2] = 1.0
                G[s, a, s2] = 0.0 if self.is_terminal(s2) else 1.0
                C[s, a, s2] = 1.0 if s2 == self.right_terminal else 0.0
        start = np.zeros(n)
        start[1:self.right_terminal] = 1.0 / self.n_nonterminal
        return TabularModel(P, C, G, start, self.eval_states)
