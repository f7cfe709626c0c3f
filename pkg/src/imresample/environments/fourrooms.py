"""Tabular Four Rooms gridworld with wall-hit termination."""

from __future__ import annotations

from importlib import resources

import numpy as np

from ..core import Transition
from .tabular import TabularModel

UP, RIGHT, DOWN, LEFT = 0, 1, 2, 3
MOVES = {UP: (-1, 0), RIGHT: (0, 1), DOWN: (1, 0), LEFT: (0, -1)}


def load_layout(path=None) -> np.ndarray:
    """Read an ASCII map ('#' wall, '.' open, 'H' hallway) into a char array."""
    if path is None:
        text = resources.files(__package__).joinpath("layouts/fourrooms.txt").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    rows = [line.rstrip("\n") for line in text.splitlines() if line.strip()]
    if len({len(r) for r in rows}) != 1:
        raise ValueError("layout rows have unequal length")
    grid = np.array([list(r) for r in rows])
    bad = set(np.unique(grid)) - {"#", ".", "H"}
    if bad:
        raise ValueError(f"unknown layout characters {sorted(bad)}")
    return grid


class FourRoomsEnv:
    """Grid of open cells; bumping into a wall or the outer edge terminates.

    A wall hit leaves the agent in place for the recorded transition
    (cumulant 1, continuation 0) and the next episode starts at a uniformly
    random open cell. Every other move has cumulant 0 and continuation
    ``gamma``.
    """

    n_actions = 4

    def __init__(self, layout=None, gamma: float = 0.9, rng=None):
        self.grid = load_layout() if layout is None else np.asarray(layout)
        self.gamma = gamma
        self.rng = np.random.default_rng(rng)
        open_mask = self.grid != "#"
        self.cells = [tuple(rc) for rc in np.argwhere(open_mask)]
        self.index = {rc: i for i, rc in enumerate(self.cells)}
        self.n_states = len(self.cells)
        self.hallways = [i for i, (r, c) in enumerate(self.cells) if self.grid[r, c] == "H"]
        # next_state[s, a] is -1 for a wall hit
        self.next_state = np.full((self.n_states, 4), -1, dtype=int)
        nrow, ncol = self.grid.shape
        for s, (r, c) in enumerate(self.cells):
            for a, (dr, dc) in MOVES.items():
                rr, cc = r + dr, c + dc
                if 0 <= rr < nrow and 0 <= cc < ncol and open_mask[rr, cc]:
                    self.next_state[s, a] = self.index[(rr, cc)]
        self.state = self.reset()

    @property
    def eval_states(self) -> np.ndarray:
        return np.arange(self.n_states)

    def reset(self) -> int:
        self.state = int(self.rng.integers(self.n_states))
        return self.state

    def step(self, a: int, rho: float = 1.0) -> Transition:
        s = self.state
        s2 = self.next_state[s, a]
        if s2 < 0:
            t = Transition(s, a, s, 1.0, 0.0, rho)
            self.reset()
        else:
            s2 = int(s2)
            t = Transition(s, a, s2, 0.0, self.gamma, rho)
            self.state = s2
        return t

    def wall_distance(self, s: int, a: int = DOWN) -> int:
        """Number of open moves in direction ``a`` before a wall is hit."""
        d = 0
        while self.next_state[s, a] >= 0:
            s = self.next_state[s, a]
            d += 1
        return d

    def model(self) -> TabularModel:
        n = self.n_states
        P = np.zeros((n, 4, n))
        C = np.zeros((n, 4, n))
        G = np.zeros((n, 4, n))
        for s in range(n):
            for a in range(4):
                s2 = self.next_state[s, a]
                if s2 < 0:
                    P[s, a, s] = 1.0
                    C[s, a, s] = 1.0
                else:
                    P[s, a, s2] = 1.0
                    G[s, a, s2] = self.gamma
        return TabularModel(P, C, G, np.full(n, 1.0 / n), self.eval_states)
