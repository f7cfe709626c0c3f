"""Continuous Four Rooms: a disc moving through the same wall layout."""

from __future__ import annotations

import numpy as np

from ..core import Transition
from .fourrooms import DOWN, LEFT, RIGHT, UP, load_layout

# unit vectors with y pointing up (grid row 0 is the top of the world)
DIRECTIONS = np.array([[0.0, 1.0], [1.0, 0.0], [0.0, -1.0], [-1.0, 0.0]])
ORTHOGONAL = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 1.0]])
assert (UP, RIGHT, DOWN, LEFT) == (0, 1, 2, 3)


class ContFourRoomsEnv:
    """Disc of radius ``agent_radius`` in a ``size`` x ``size`` box.

    Each action moves ``step_mean +- U(0, step_jitter)`` along its axis plus
    Gaussian drift (std ``drift_std``) across it, resolved in ``substeps``
    equal increments. The first increment that touches a wall ends the move
    at the last free position with cumulant 1 and continuation 0, and the
    next episode starts at a random free point.
    """

    n_actions = 4

    def __init__(self, layout=None, gamma: float = 0.9, agent_radius: float = 0.1,
                 substeps: int = 10, step_mean: float = 0.5, step_jitter: float = 0.1,
                 drift_std: float = 0.1, rng=None):
        self.grid = load_layout() if layout is None else np.asarray(layout)
        nrow, ncol = self.grid.shape
        self.size = np.array([float(ncol), float(nrow)])
        self.gamma = gamma
        self.radius = agent_radius
        self.substeps = substeps
        self.step_mean = step_mean
        self.step_jitter = step_jitter
        self.drift_std = drift_std
        self.rng = np.random.default_rng(rng)
        walls = np.argwhere(self.grid == "#")
        # (x0, y0, x1, y1) per wall cell
        self.walls = np.column_stack([walls[:, 1], nrow - 1 - walls[:, 0],
                                      walls[:, 1] + 1, nrow - walls[:, 0]]).astype(float)
        self.state = self.reset()

    def cell_box(self, row: int, col: int):
        nrow = self.grid.shape[0]
        return (float(col), float(nrow - 1 - row), float(col + 1), float(nrow - row))

    def wall_clearance(self, pos) -> np.ndarray:
        """Distance from each centre in ``pos`` (..., 2) to the nearest wall or edge."""
        pos = np.asarray(pos, dtype=float)
        x = pos[..., 0:1]
        y = pos[..., 1:2]
        w = self.walls
        dx = np.maximum(np.maximum(w[:, 0] - x, 0.0), x - w[:, 2])
        dy = np.maximum(np.maximum(w[:, 1] - y, 0.0), y - w[:, 3])
        d_wall = np.sqrt(dx * dx + dy * dy).min(axis=-1) if len(w) else np.inf
        d_edge = np.minimum(np.minimum(pos[..., 0], self.size[0] - pos[..., 0]),
                            np.minimum(pos[..., 1], self.size[1] - pos[..., 1]))
        return np.minimum(d_wall, d_edge)

    def collides(self, pos) -> np.ndarray:
        return self.wall_clearance(pos) < self.radius

    def random_free_points(self, n: int, rng=None) -> np.ndarray:
        rng = self.rng if rng is None else rng
        out = np.empty((0, 2))
        while len(out) < n:
            cand = rng.uniform(0.0, 1.0, size=(2 * (n - len(out)) + 4, 2)) * self.size
            out = np.vstack([out, cand[~self.collides(cand)]])
        return out[:n]

    def reset(self):
        self.state = self.random_free_points(1)[0]
        return self.state

    def sample_displacements(self, actions, rng) -> np.ndarray:
        actions = np.asarray(actions, dtype=int)
        n = actions.shape[0]
        along = self.step_mean + rng.uniform(-self.step_jitter, self.step_jitter, size=n)
        drift = rng.normal(0.0, self.drift_std, size=n)
        return DIRECTIONS[actions] * along[:, None] + ORTHOGONAL[actions] * drift[:, None]

    def move(self, pos, disp):
        """Resolve moves for a batch of centres; returns (end positions, collided, substep hit)."""
        pos = np.array(pos, dtype=float).reshape(-1, 2)
        disp = np.asarray(disp, dtype=float).reshape(-1, 2)
        n = pos.shape[0]
        end = pos.copy()
        hit = np.zeros(n, dtype=bool)
        first = np.zeros(n, dtype=int)
        for j in range(1, self.substeps + 1):
            live = ~hit
            if not live.any():
                break
            cand = pos[live] + disp[live] * (j / self.substeps)
            bad = self.collides(cand)
            idx = np.flatnonzero(live)
            end[idx[~bad]] = cand[~bad]
            hit[idx[bad]] = True
            first[idx[bad]] = j
        return end, hit, first

    def step(self, a: int, rho: float = 1.0) -> Transition:
        s = self.state
        disp = self.sample_displacements([a], self.rng)
        end, hit, _ = self.move(s, disp)
        s_next = end[0]
        if hit[0]:
            t = Transition(s, a, s_next, 1.0, 0.0, rho)
            self.reset()
        else:
            t = Transition(s, a, s_next, 0.0, self.gamma, rho)
            self.state = s_next
        return t
