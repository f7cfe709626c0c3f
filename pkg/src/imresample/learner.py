"""Online learner: replay buffer + update estimator + optimizer."""

from __future__ import annotations

from collections import deque

import numpy as np

from .approx import LinearValueFunction, apply_update, make_optimizer, step_weights
from .buffer import ReplayBuffer
from .estimators import (SarsaQ, WisTd0State, make_estimator, sarsa0_update, td_errors,
                         wis_td0_step)
from .exceptions import DegenerateWeights, NonFiniteUpdate


class OffPolicyLearner:
    """Stores behavior transitions and applies one update per :meth:`update` call.

    Mini-batch estimators draw ``batch_size`` transitions and take one
    optimizer step along the estimated direction; with ``incremental=True``
    (and always for the WIS-TD(0) variants) each drawn transition is applied
    on its own. ``sarsa0`` ignores the buffer and learns action values from
    the most recent ``batch_size`` consecutive transitions.
    """

    def __init__(self, estimator, featurizer, *, capacity: int, batch_size: int,
                 learning_rate: float, optimizer: str = "constant", optimizer_params=None,
                 incremental: bool = False, target_policy=None, n_actions: int | None = None,
                 rng=None):
        self.estimator = make_estimator(estimator)
        self.featurizer = featurizer
        self.batch_size = int(batch_size)
        self.learning_rate = float(learning_rate)
        self.incremental = incremental or self.estimator.incremental
        self.rng = np.random.default_rng(rng)
        self.buffer = ReplayBuffer(capacity, featurizer)
        self.vf = LinearValueFunction(featurizer)
        d = featurizer.n_features
        self.n_updates = 0
        self.skipped = 0
        name = self.estimator.name
        if name == "sarsa0":
            if target_policy is None or n_actions is None:
                raise ValueError("sarsa0 needs the target policy and action count")
            self.q = SarsaQ(d, n_actions)
            self.target_policy = target_policy
            self._stream = deque(maxlen=self.batch_size + 1)
            self.opt = make_optimizer(optimizer, learning_rate, d * n_actions, **(optimizer_params or {}))
        elif self.estimator.incremental:
            step = self.estimator.step if self.estimator.step is not None else learning_rate
            u0 = self.estimator.u0 if self.estimator.u0 is not None else float(featurizer.n_active)
            self.wis = WisTd0State.create(d, u0, step)
        else:
            self.opt = make_optimizer(optimizer, learning_rate, d, **(optimizer_params or {}))

    @property
    def theta(self) -> np.ndarray:
        return self.vf.theta

    def observe(self, t) -> None:
        if self.estimator.name == "sarsa0":
            self._stream.append((self.featurizer.indices(t.s), t.a, self.featurizer.indices(t.s_next),
                                 t.cumulant, t.gamma_next))
        else:
            self.buffer.push(t)

    def ready(self, warmup: int | None = None) -> bool:
        if self.estimator.name == "sarsa0":
            return len(self._stream) >= 2
        return self.buffer.count >= max(1, self.batch_size if warmup is None else warmup)

    def update(self) -> bool:
        """Apply one update; returns False if it was skipped for degenerate weights."""
        name = self.estimator.name
        try:
            if name == "sarsa0":
                self._sarsa_update()
            elif self.estimator.incremental:
                self._wis_td0_update()
            elif self.incremental:
                self._incremental_update()
            else:
                u = self.estimator.direction(self.buffer, self.vf, self.batch_size, self.rng)
                apply_update(self.vf, self.opt, u)
        except DegenerateWeights:
            self.skipped += 1
            return False
        self.n_updates += 1
        return True

    def _incremental_update(self) -> None:
        """Draw a mini-batch and step on each transition in turn, weighted as a batch of one."""
        est = self.estimator
        buf = self.buffer
        batch = est.draw(buf, self.batch_size, self.rng)
        rho_bar = buf.mean_ratio()
        n_total = buf.total_weight()
        for i in batch.indices:
            idx = np.array([i])
            r = buf.rho[i]
            if est.name in ("ir", "onpolicy"):
                c = 1.0
            elif est.name == "bcir":
                c = rho_bar
            elif est.name == "is":
                c = r
            elif est.name == "vtrace":
                c = min(r, est.clip)
            elif est.name == "wis_minibatch":
                if r == 0.0:
                    continue
                c = 1.0
            elif est.name == "wis_buffer":
                c = r * buf.count / n_total
            else:
                raise ValueError(f"{est.name} has no incremental form")
            delta = td_errors(buf, self.vf.theta, idx)[0]
            u = np.zeros_like(self.vf.theta)
            np.add.at(u, buf.phi[i], c * delta)
            apply_update(self.vf, self.opt, u)

    def _wis_td0_update(self) -> None:
        buf = self.buffer
        batch = self.estimator.draw(buf, self.batch_size, self.rng)
        resampled = self.estimator.name == "ir_wis_td0"
        theta = self.vf.theta
        for i in batch.indices:
            wis_td0_step(self.wis, theta, buf.phi[i], buf.phi_next[i], buf.cumulant[i], buf.gamma[i],
                         buf.rho[i], rho_theta=1.0 if resampled else None)
        if not np.all(np.isfinite(theta)):
            raise NonFiniteUpdate("WIS-TD(0) weights became non-finite")

    def _sarsa_update(self) -> None:
        items = list(self._stream)
        pairs = [(items[j], items[j + 1][1]) for j in range(len(items) - 1)]
        if not pairs:
            raise DegenerateWeights("no consecutive transition pair yet")
        u = np.zeros(self.q.weights.size)
        for (phi, a, phi2, c, g), a2 in pairs:
            u += sarsa0_update(self.q, phi, a, phi2, a2, c, g)
        u /= len(pairs)
        step_weights(self.q.weights.reshape(-1), self.opt, u)

    def values_from_indices(self, idx: np.ndarray, pi_table: np.ndarray | None = None) -> np.ndarray:
        """Predicted state values for rows of active feature ids."""
        if self.estimator.name == "sarsa0":
            return self.q.state_values(idx, pi_table)
        return self.vf.values_from_indices(idx)
