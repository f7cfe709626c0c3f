"""Linear value functions over sparse binary features, plus optimizers.

Features are represented by their active indices only; a state maps to an
integer array of ``n_active`` feature ids and ``V(s)`` is the sum of the
weights at those ids.
"""

from __future__ import annotations

import numpy as np

from .exceptions import NonFiniteUpdate, OutOfBounds


class TabularFeatures:
    """One-hot features: state ``s`` activates feature ``s``."""

    n_active = 1

    def __init__(self, n_states: int):
        self.n_features = int(n_states)

    def indices(self, s) -> np.ndarray:
        return np.array([int(s)])

    def indices_batch(self, states) -> np.ndarray:
        return np.asarray(states, dtype=np.int64).reshape(-1, 1)


class TileCoder:
    """Grid tilings over a box, each shifted by ``i / n_tilings`` of a tile width.

    Every tiling has ``tiles_per_dim + 1`` tiles per dimension so the shifted
    grid still covers the whole box; indices are dense, without hashing.
    """

    def __init__(self, low, high, n_tilings: int = 64, tiles_per_dim: int = 8):
        self.low = np.asarray(low, dtype=float)
        self.high = np.asarray(high, dtype=float)
        self.n_tilings = n_tilings
        self.tiles_per_dim = tiles_per_dim
        self.dim = self.low.size
        self.width = (self.high - self.low) / tiles_per_dim
        self.side = tiles_per_dim + 1
        self.per_tiling = self.side ** self.dim
        self.n_features = n_tilings * self.per_tiling
        self.n_active = n_tilings
        frac = np.arange(n_tilings) / n_tilings
        self.offsets = frac[:, None] * self.width[None, :]
        self._strides = self.side ** np.arange(self.dim - 1, -1, -1)
        self._base = np.arange(n_tilings) * self.per_tiling

    def indices_batch(self, states) -> np.ndarray:
        x = np.asarray(states, dtype=float).reshape(-1, self.dim)
        if np.any(x < self.low) or np.any(x > self.high):
            raise OutOfBounds("state outside the tile-coded box")
        rel = (x - self.low)[:, None, :] + self.offsets[None, :, :]
        cells = np.floor(rel / self.width).astype(np.int64)
        np.clip(cells, 0, self.side - 1, out=cells)
        return self._base[None, :] + cells @ self._strides

    def indices(self, s) -> np.ndarray:
        return self.indices_batch(s)[0]


class LinearValueFunction:
    """V(s) = theta . phi(s) for binary sparse features."""

    def __init__(self, featurizer, theta=None):
        self.featurizer = featurizer
        d = featurizer.n_features
        self.theta = np.zeros(d) if theta is None else np.array(theta, dtype=float)
        if self.theta.shape != (d,):
            raise ValueError(f"theta must have shape ({d},)")

    @property
    def n_features(self) -> int:
        return self.featurizer.n_features

    def __call__(self, s) -> float:
        return float(self.theta[self.featurizer.indices(s)].sum())

    value = __call__

    def values_from_indices(self, idx: np.ndarray) -> np.ndarray:
        return self.theta[idx].sum(axis=-1)

    def values(self, states) -> np.ndarray:
        return self.values_from_indices(self.featurizer.indices_batch(states))

    def gradient(self, s) -> np.ndarray:
        return np.bincount(self.featurizer.indices(s), minlength=self.n_features).astype(float)

    def copy(self) -> "LinearValueFunction":
        return LinearValueFunction(self.featurizer, self.theta.copy())


class ConstantStep:
    def __init__(self, alpha: float):
        self.alpha = float(alpha)

    def step(self, theta: np.ndarray, u: np.ndarray) -> None:
        if self.alpha != 0.0:
            theta += self.alpha * u


class RMSProp:
    """RMSProp with accumulators touched only on the support of the update."""

    def __init__(self, alpha: float, decay: float = 0.99, eps: float = 1e-8, n_features: int | None = None):
        self.alpha = float(alpha)
        self.decay = decay
        self.eps = eps
        self.acc = None if n_features is None else np.zeros(n_features)

    def step(self, theta: np.ndarray, u: np.ndarray) -> None:
        if self.acc is None:
            self.acc = np.zeros_like(theta)
        nz = np.flatnonzero(u)
        g = u[nz]
        acc = self.decay * self.acc[nz] + (1.0 - self.decay) * g * g
        self.acc[nz] = acc
        theta[nz] += self.alpha * g / np.sqrt(acc + self.eps)


def make_optimizer(kind: str, alpha: float, n_features: int | None = None, **params):
    if kind in ("constant", "sgd"):
        return ConstantStep(alpha)
    if kind == "rmsprop":
        return RMSProp(alpha, n_features=n_features, **params)
    raise KeyError(f"unknown optimizer {kind!r}")


def step_weights(weights: np.ndarray, opt, u: np.ndarray) -> None:
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)):
        raise NonFiniteUpdate("update direction has non-finite entries")
    opt.step(weights, u)
    if not np.all(np.isfinite(weights)):
        raise NonFiniteUpdate("weights became non-finite after the update")


def apply_update(vf: LinearValueFunction, opt, u: np.ndarray) -> None:
    """Scale an update direction by the optimizer and add it to the weights in place."""
    step_weights(vf.theta, opt, u)
