"""Sliding-window replay buffer with sum-tree proportional sampling."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .core import Transition
from .exceptions import DegenerateWeights, EmptyBuffer

REBUILD_EVERY = 10_000


class SumTree:
    """Binary tree of partial sums over ``capacity`` non-negative leaf weights."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.n_leaves = 1 << max(0, (capacity - 1).bit_length())
        self.depth = self.n_leaves.bit_length() - 1
        self.tree = np.zeros(2 * self.n_leaves)
        self._mutations = 0

    @property
    def total(self) -> float:
        return float(self.tree[1])

    @property
    def leaves(self) -> np.ndarray:
        return self.tree[self.n_leaves:self.n_leaves + self.capacity]

    def update(self, i: int, w: float) -> None:
        tree = self.tree
        j = i + self.n_leaves
        tree[j] = w
        j >>= 1
        while j >= 1:
            tree[j] = tree[2 * j] + tree[2 * j + 1]
            j >>= 1
        self._mutations += 1
        if self._mutations >= REBUILD_EVERY:
            self.rebuild()

    def rebuild(self) -> None:
        """Recompute every internal node from the leaves."""
        tree = self.tree
        lo = self.n_leaves
        while lo > 1:
            tree[lo // 2:lo] = tree[lo:2 * lo:2] + tree[lo + 1:2 * lo:2]
            lo //= 2
        self._mutations = 0

    def find(self, u: np.ndarray) -> np.ndarray:
        """Leaf index whose selection interval contains each prefix-sum value in ``u``."""
        tree = self.tree
        u = np.array(u, dtype=float)
        node = np.ones(u.shape, dtype=np.int64)
        for _ in range(self.depth):
            left = 2 * node
            lw = tree[left]
            right = u >= lw
            u = np.where(right, u - lw, u)
            node = np.where(right, left + 1, left)
        return node - self.n_leaves

    def sample(self, k: int, rng: np.random.Generator) -> np.ndarray:
        total = self.total
        if not total > 0.0:
            raise DegenerateWeights("all weights are zero")
        idx = self.find(rng.random(k) * total)
        # round-off can land on an empty leaf at the far right edge
        bad = self.tree[idx + self.n_leaves] <= 0.0
        while bad.any():
            idx[bad] = self.find(rng.random(int(bad.sum())) * total)
            bad = self.tree[idx + self.n_leaves] <= 0.0
        return idx

    def selection_intervals(self) -> np.ndarray:
        """Half-open [lo, hi) prefix-sum interval that ``find`` maps to each leaf."""
        out = np.zeros((self.capacity, 2))
        lo = np.zeros(1)
        hi = np.array([self.tree[1]])
        nodes = np.ones(1, dtype=np.int64)
        for _ in range(self.depth):
            lw = self.tree[2 * nodes]
            mid = lo + lw
            nodes = np.stack([2 * nodes, 2 * nodes + 1], axis=1).ravel()
            lo, hi = np.stack([lo, mid], axis=1).ravel(), np.stack([mid, hi], axis=1).ravel()
        leaf = nodes - self.n_leaves
        keep = leaf < self.capacity
        out[leaf[keep], 0] = lo[keep]
        out[leaf[keep], 1] = hi[keep]
        return out


@dataclass
class MiniBatch:
    """Indices into a buffer (with repeats) plus the buffer they refer to."""

    indices: np.ndarray
    buffer: "ReplayBuffer"

    def __len__(self):
        return len(self.indices)

    @property
    def rho(self) -> np.ndarray:
        return self.buffer.rho[self.indices]

    @property
    def transitions(self) -> list:
        return [self.buffer.transition(i) for i in self.indices]


class ReplayBuffer:
    """Ring buffer of the most recent ``capacity`` transitions.

    Columns are stored as arrays; when a featurizer is given, the active
    feature ids of ``s`` and ``s_next`` are computed once at push time.
    """

    def __init__(self, capacity: int, featurizer=None):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.featurizer = featurizer
        self.tree = SumTree(self.capacity)
        self.count = 0
        self.cursor = 0
        self._allocated = False

    def _allocate(self, t: Transition) -> None:
        n = self.capacity
        s = np.asarray(t.s)
        dtype = np.int64 if np.issubdtype(s.dtype, np.integer) else float
        self.s = np.zeros((n,) + s.shape, dtype=dtype)
        self.s_next = np.zeros((n,) + s.shape, dtype=dtype)
        self.a = np.zeros(n, dtype=np.int64)
        self.cumulant = np.zeros(n)
        self.gamma = np.zeros(n)
        self.rho = np.zeros(n)
        if self.featurizer is not None:
            m = self.featurizer.n_active
            self.phi = np.zeros((n, m), dtype=np.int64)
            self.phi_next = np.zeros((n, m), dtype=np.int64)
        self._allocated = True

    def __len__(self):
        return self.count

    def push(self, t: Transition) -> None:
        if not self._allocated:
            self._allocate(t)
        i = self.cursor
        self.s[i] = t.s
        self.s_next[i] = t.s_next
        self.a[i] = t.a
        self.cumulant[i] = t.cumulant
        self.gamma[i] = t.gamma_next
        self.rho[i] = t.rho
        if self.featurizer is not None:
            self.phi[i] = self.featurizer.indices(t.s)
            self.phi_next[i] = self.featurizer.indices(t.s_next)
        self.tree.update(i, t.rho)
        self.cursor = (i + 1) % self.capacity
        if self.count < self.capacity:
            self.count += 1

    def extend(self, transitions) -> None:
        for t in transitions:
            self.push(t)

    def window(self) -> np.ndarray:
        """Physical slots of live transitions, oldest first."""
        if self.count < self.capacity:
            return np.arange(self.count)
        return (np.arange(self.capacity) + self.cursor) % self.capacity

    def transition(self, i: int) -> Transition:
        s = self.s[i]
        s2 = self.s_next[i]
        if s.ndim == 0:
            s, s2 = int(s), int(s2)
        else:
            s, s2 = s.copy(), s2.copy()
        return Transition(s, int(self.a[i]), s2, float(self.cumulant[i]), float(self.gamma[i]), float(self.rho[i]))

    def live_rho(self) -> np.ndarray:
        return self.rho[:self.count]

    def total_weight(self) -> float:
        return self.tree.total

    def sample_proportional(self, k: int, rng: np.random.Generator) -> MiniBatch:
        """k independent draws, slot i with probability rho_i / sum(rho)."""
        if self.count == 0:
            raise EmptyBuffer("cannot sample from an empty buffer")
        return MiniBatch(self.tree.sample(k, rng), self)

    def sample_uniform(self, k: int, rng: np.random.Generator) -> MiniBatch:
        if self.count == 0:
            raise EmptyBuffer("cannot sample from an empty buffer")
        return MiniBatch(rng.integers(0, self.count, size=k), self)

    def mean_ratio(self) -> float:
        if self.count == 0:
            raise EmptyBuffer("mean ratio of an empty buffer")
        return self.tree.total / self.count

    def effective_sample_size(self) -> float:
        rho = self.live_rho()
        s2 = float(np.dot(rho, rho))
        if s2 == 0.0:
            raise DegenerateWeights("all weights are zero")
        return float(rho.sum()) ** 2 / s2

    def to_csv(self, path) -> None:
        """Dump live transitions oldest first: state columns, a, next-state columns, C, gamma', rho."""
        idx = self.window()
        sdim = int(np.prod(self.s.shape[1:])) if self.count else 0
        s_cols = ["s"] if sdim <= 1 else [f"s{j}" for j in range(sdim)]
        n_cols = ["s_next"] if sdim <= 1 else [f"s_next{j}" for j in range(sdim)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(s_cols + ["a"] + n_cols + ["cumulant", "gamma_next", "rho"])
            for i in idx:
                s = np.atleast_1d(self.s[i]).tolist()
                s2 = np.atleast_1d(self.s_next[i]).tolist()
                w.writerow(s + [int(self.a[i])] + s2 +
                           [repr(float(self.cumulant[i])), repr(float(self.gamma[i])), repr(float(self.rho[i]))])


def effective_sample_size(rho) -> float:
    rho = np.asarray(rho, dtype=float)
    s2 = float(np.dot(rho, rho))
    if s2 == 0.0:
        raise DegenerateWeights("all weights are zero")
    return float(rho.sum()) ** 2 / s2
