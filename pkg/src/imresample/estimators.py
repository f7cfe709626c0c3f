"""Update-direction estimators for off-policy TD(0).

Every mini-batch estimator is a weighted sum of per-transition TD updates
``delta_i * grad V(s_i)``; the estimators differ only in how indices are drawn
from the buffer and how each drawn transition is weighted. Directions are
returned unscaled; step sizes live in :mod:`imresample.approx`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .buffer import MiniBatch, ReplayBuffer
from .core import Transition, td_delta
from .exceptions import DegenerateWeights

ESTIMATOR_NAMES = ("onpolicy", "is", "ir", "bcir", "wis_minibatch", "wis_buffer", "wis_optimal",
                   "vtrace", "sarsa0", "wis_td0", "ir_wis_td0")


def td_errors(buf: ReplayBuffer, theta: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """TD errors of buffer slots ``idx`` under weights ``theta``."""
    v = theta[buf.phi[idx]].sum(axis=1)
    g = buf.gamma[idx]
    live = g != 0.0
    boot = np.zeros(len(idx))
    if live.any():
        boot[live] = g[live] * theta[buf.phi_next[idx[live]]].sum(axis=1)
    return buf.cumulant[idx] + boot - v


def weighted_direction(buf: ReplayBuffer, theta: np.ndarray, idx: np.ndarray, coef) -> np.ndarray:
    """sum_j coef_j * delta_j * phi(s_j) as a dense vector."""
    idx = np.asarray(idx, dtype=np.int64)
    d = theta.shape[0]
    if idx.size == 0:
        return np.zeros(d)
    w = np.broadcast_to(np.asarray(coef, dtype=float), idx.shape) * td_errors(buf, theta, idx)
    phi = buf.phi[idx]
    return np.bincount(phi.ravel(), weights=np.repeat(w, phi.shape[1]), minlength=d)


def per_transition_deltas(buf: ReplayBuffer, theta: np.ndarray, idx=None) -> np.ndarray:
    """Dense matrix whose rows are the TD updates of the given (default: live) slots."""
    if idx is None:
        idx = np.arange(buf.count)
    idx = np.asarray(idx, dtype=np.int64)
    out = np.zeros((len(idx), theta.shape[0]))
    delta = td_errors(buf, theta, idx)
    rows = np.repeat(np.arange(len(idx)), buf.phi.shape[1])
    np.add.at(out, (rows, buf.phi[idx].ravel()), np.repeat(delta, buf.phi.shape[1]))
    return out


def per_transition_delta(vf, t: Transition) -> np.ndarray:
    """delta(t) * grad V(t.s) for a single transition."""
    return td_delta(vf, t) * vf.gradient(t.s)


def ir_update(batch: MiniBatch, vf) -> np.ndarray:
    """Plain mean of the updates of a ratio-proportional mini-batch."""
    k = len(batch)
    return weighted_direction(batch.buffer, vf.theta, batch.indices, 1.0 / k)


def bcir_update(batch: MiniBatch, rho_bar: float, vf) -> np.ndarray:
    return rho_bar * ir_update(batch, vf)


def onpolicy_update(batch: MiniBatch, vf) -> np.ndarray:
    return ir_update(batch, vf)


def vtrace_update(batch: MiniBatch, clip: float, vf) -> np.ndarray:
    """Importance-sampled mean with ratios clipped at ``clip``."""
    if not clip > 0:
        raise ValueError("clip must be positive")
    k = len(batch)
    return weighted_direction(batch.buffer, vf.theta, batch.indices, np.minimum(batch.rho, clip) / k)


def is_update(batch: MiniBatch, vf) -> np.ndarray:
    return vtrace_update(batch, np.inf, vf)


def wis_minibatch_update(batch: MiniBatch, vf) -> np.ndarray:
    rho = batch.rho
    total = rho.sum()
    if total == 0.0:
        raise DegenerateWeights("mini-batch ratios sum to zero")
    return weighted_direction(batch.buffer, vf.theta, batch.indices, rho / total)


def wis_buffer_update(batch: MiniBatch, vf) -> np.ndarray:
    buf = batch.buffer
    total = buf.total_weight()
    if not total > 0.0:
        raise DegenerateWeights("buffer ratios sum to zero")
    k = len(batch)
    return weighted_direction(buf, vf.theta, batch.indices, batch.rho * (buf.count / (k * total)))


def wis_optimal_update(buf: ReplayBuffer, vf) -> np.ndarray:
    """Self-normalised update over the whole buffer."""
    rho = buf.live_rho()
    total = rho.sum()
    if total == 0.0:
        raise DegenerateWeights("buffer ratios sum to zero")
    return weighted_direction(buf, vf.theta, np.arange(buf.count), rho / total)


def expected_ir_update(buf: ReplayBuffer, vf) -> np.ndarray:
    """E[X_IR | B] from the sum tree's own selection intervals (no sampling)."""
    iv = buf.tree.selection_intervals()[:buf.count]
    p = (iv[:, 1] - iv[:, 0]) / buf.tree.total
    return weighted_direction(buf, vf.theta, np.arange(buf.count), p)


def expected_bcir_update(buf: ReplayBuffer, vf) -> np.ndarray:
    return buf.mean_ratio() * expected_ir_update(buf, vf)


# ---------------------------------------------------------------------------
# incremental learners


@dataclass
class WisTd0State:
    """Per-feature normaliser ``u`` and the previous weight vector for WIS-TD(0)."""

    u: np.ndarray
    theta_prev: np.ndarray
    eta: float

    @classmethod
    def create(cls, n_features: int, u0: float, step: float, theta=None):
        theta_prev = np.zeros(n_features) if theta is None else np.array(theta, dtype=float)
        return cls(np.full(n_features, float(u0)), theta_prev, step / u0)


def wis_td0_step(state: WisTd0State, theta: np.ndarray, phi, phi_next, cumulant: float,
                 gamma_next: float, rho: float, rho_theta: float | None = None) -> None:
    """One WIS-TD(0) step on binary features, updating ``theta`` and ``state`` in place.

    ``phi``/``phi_next`` are active feature ids. ``rho_theta`` overrides the
    ratio used in the weight recursion (the normaliser always uses ``rho``).
    """
    phi = np.asarray(phi, dtype=np.int64)
    r_theta = rho if rho_theta is None else rho_theta
    u = state.u
    # binary features: phi o phi == phi
    u[phi] = (1.0 - state.eta) * u[phi] + rho
    alpha = 1.0 / u[phi]
    v_prev = state.theta_prev[phi].sum()
    v_now = theta[phi].sum()
    boot = 0.0 if gamma_next == 0.0 else gamma_next * theta[np.asarray(phi_next, dtype=np.int64)].sum()
    delta_bar = cumulant + boot - v_prev
    state.theta_prev[:] = theta
    theta[phi] += alpha * r_theta * (v_prev - v_now) + r_theta * delta_bar * alpha


@dataclass
class SarsaQ:
    """Linear action values Q(s, a) = sum of weights at (phi(s), a)."""

    n_features: int
    n_actions: int
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.weights is None:
            self.weights = np.zeros((self.n_features, self.n_actions))

    def q(self, phi, a: int) -> float:
        return float(self.weights[np.asarray(phi), a].sum())

    def state_values(self, phi_batch: np.ndarray, pi_table: np.ndarray) -> np.ndarray:
        """V(s) = sum_a pi(a|s) Q(s, a) for rows of active ids."""
        qs = self.weights[phi_batch].sum(axis=1)
        return (qs * pi_table).sum(axis=1)


def sarsa0_update(q: SarsaQ, phi, a: int, phi_next, a_next: int, cumulant: float,
                  gamma_next: float) -> np.ndarray:
    """Sarsa(0) direction over the flattened (features x actions) weights."""
    boot = 0.0 if gamma_next == 0.0 else gamma_next * q.q(phi_next, a_next)
    delta = cumulant + boot - q.q(phi, a)
    out = np.zeros_like(q.weights)
    np.add.at(out, (np.asarray(phi), a), delta)
    return out.ravel()


# ---------------------------------------------------------------------------
# estimator objects used by the learner


@dataclass(frozen=True)
class EstimatorKind:
    """Estimator name plus parameters, as named in experiment configs."""

    name: str
    clip: float | None = None
    u0: float | None = None
    step: float | None = None

    def __post_init__(self):
        if self.name not in ESTIMATOR_NAMES:
            raise ValueError(f"unknown estimator {self.name!r}")
        if self.name == "vtrace" and not (self.clip is not None and self.clip > 0):
            raise ValueError("vtrace needs a positive clip")

    @property
    def sampling(self) -> str:
        return {"ir": "proportional", "bcir": "proportional", "ir_wis_td0": "proportional",
                "wis_optimal": "full", "sarsa0": "stream"}.get(self.name, "uniform")

    @property
    def incremental(self) -> bool:
        return self.name in ("wis_td0", "ir_wis_td0")

    @property
    def label(self) -> str:
        if self.name == "vtrace":
            return f"vtrace_clip{self.clip:g}"
        if self.incremental and self.u0 is not None:
            return f"{self.name}_u{self.u0:g}"
        return self.name

    def draw(self, buf: ReplayBuffer, k: int, rng) -> MiniBatch:
        if self.sampling == "proportional":
            return buf.sample_proportional(k, rng)
        return buf.sample_uniform(k, rng)

    def direction(self, buf: ReplayBuffer, vf, k: int, rng) -> np.ndarray:
        """Draw a mini-batch as this estimator does and return its update direction."""
        if self.name == "wis_optimal":
            return wis_optimal_update(buf, vf)
        batch = self.draw(buf, k, rng)
        if self.name in ("ir", "onpolicy"):
            return ir_update(batch, vf)
        if self.name == "bcir":
            return bcir_update(batch, buf.mean_ratio(), vf)
        if self.name == "is":
            return is_update(batch, vf)
        if self.name == "vtrace":
            return vtrace_update(batch, self.clip, vf)
        if self.name == "wis_minibatch":
            return wis_minibatch_update(batch, vf)
        if self.name == "wis_buffer":
            return wis_buffer_update(batch, vf)
        raise ValueError(f"{self.name} has no mini-batch direction")


def make_estimator(spec) -> EstimatorKind:
    """Build from a name or a config mapping like ``{"kind": "vtrace", "clip": 1.0}``."""
    if isinstance(spec, EstimatorKind):
        return spec
    if isinstance(spec, str):
        return EstimatorKind(spec)
    spec = dict(spec)
    name = spec.pop("kind", None) or spec.pop("name")
    return EstimatorKind(name, **spec)
