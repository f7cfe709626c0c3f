"""scikit-learn style wrapper: fit a value function from a table of logged transitions.

Rows of ``X`` follow the buffer CSV layout: ``s..., a, s_next..., cumulant,
gamma_next, rho`` where each state takes ``state_dim`` columns.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .approx import TabularFeatures
from .core import Transition
from .estimators import make_estimator
from .learner import OffPolicyLearner


def check_transitions(X, state_dim: int = 1, tabular: bool = True) -> np.ndarray:
    """Validate a transition table and return it as a float array."""
    X = check_array(X, dtype=np.float64, ensure_min_samples=1)
    width = 2 * state_dim + 4
    if X.shape[1] != width:
        raise ValueError(f"expected {width} columns (s, a, s_next, cumulant, gamma_next, rho), got {X.shape[1]}")
    a = X[:, state_dim]
    gamma = X[:, 2 * state_dim + 2]
    rho = X[:, 2 * state_dim + 3]
    if np.any(a < 0) or np.any(a != np.round(a)):
        raise ValueError("actions must be non-negative integers")
    if np.any((gamma < 0) | (gamma > 1)):
        raise ValueError("gamma_next must lie in [0, 1]")
    if np.any(rho < 0):
        raise ValueError("ratios must be non-negative")
    if tabular:
        states = np.concatenate([X[:, :state_dim], X[:, state_dim + 1:2 * state_dim + 1]])
        if np.any(states < 0) or np.any(states != np.round(states)):
            raise ValueError("tabular states must be non-negative integers")
    return X


def check_states(S, state_dim: int = 1, tabular: bool = True) -> np.ndarray:
    S = np.asarray(S)
    if state_dim == 1 and S.ndim == 1:
        S = S.reshape(-1, 1)
    S = check_array(S, dtype=np.float64)
    if S.shape[1] != state_dim:
        raise ValueError(f"expected {state_dim} state columns, got {S.shape[1]}")
    if tabular and (np.any(S < 0) or np.any(S != np.round(S))):
        raise ValueError("tabular states must be non-negative integers")
    return S


class OffPolicyTD(RegressorMixin, BaseEstimator):
    """Off-policy TD(0) prediction from logged transitions with a replay buffer.

    ``fit`` loads the transitions into a buffer and applies ``n_updates``
    mini-batch updates drawn by ``estimator`` (``"ir"``, ``"bcir"``, ``"is"``,
    ...); ``partial_fit`` appends and continues. ``predict`` returns state
    values and ``score`` is the negative mean absolute value error.

    With ``featurizer=None`` states are integer ids in ``[0, n_states)``;
    otherwise states have ``state_dim`` real coordinates encoded by the
    featurizer (for example a :class:`~imresample.approx.TileCoder`).
    """

    def __init__(self, estimator="ir", n_states=None, featurizer=None, state_dim=1, capacity=None,
                 batch_size=16, learning_rate=0.1, n_updates=1000, optimizer="constant",
                 optimizer_params=None, clip=None, random_state=None):
        self.estimator = estimator
        self.n_states = n_states
        self.featurizer = featurizer
        self.state_dim = state_dim
        self.capacity = capacity
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.n_updates = n_updates
        self.optimizer = optimizer
        self.optimizer_params = optimizer_params
        self.clip = clip
        self.random_state = random_state

    def _spec(self):
        spec = {"kind": self.estimator}
        if self.clip is not None:
            spec["clip"] = self.clip
        est = make_estimator(spec)
        if est.name == "sarsa0":
            raise ValueError("sarsa0 learns from a live stream and is not available here")
        return est

    def _rows_to_transitions(self, X):
        k = self.state_dim
        tab = self.featurizer is None
        for row in X:
            s = int(row[0]) if tab else row[:k].copy()
            s2 = int(row[k + 1]) if tab else row[k + 1:2 * k + 1].copy()
            yield Transition(s, int(row[k]), s2, float(row[2 * k + 1]), float(row[2 * k + 2]),
                             float(row[2 * k + 3]))

    def _init_learner(self, X):
        tab = self.featurizer is None
        if tab:
            n_states = self.n_states
            if n_states is None:
                n_states = int(max(X[:, 0].max(), X[:, self.state_dim + 1].max())) + 1
            feat = TabularFeatures(n_states)
        else:
            feat = self.featurizer
        capacity = self.capacity if self.capacity is not None else max(len(X), self.batch_size)
        if capacity < self.batch_size:
            raise ValueError("capacity must be at least batch_size")
        self.learner_ = OffPolicyLearner(self._spec(), feat, capacity=capacity, batch_size=self.batch_size,
                                         learning_rate=self.learning_rate, optimizer=self.optimizer,
                                         optimizer_params=self.optimizer_params,
                                         rng=np.random.default_rng(self.random_state))
        self.n_features_in_ = X.shape[1]

    def _train(self, X):
        tab = self.featurizer is None
        if tab and np.any(X[:, [0, self.state_dim + 1]] >= self.learner_.featurizer.n_features):
            raise ValueError("state id outside [0, n_states)")
        self.learner_.buffer.extend(self._rows_to_transitions(X))
        if self.learner_.buffer.total_weight() <= 0 and self._spec().sampling == "proportional":
            raise ValueError("all ratios are zero; proportional sampling is undefined")
        for _ in range(self.n_updates):
            self.learner_.update()
        self.coef_ = self.learner_.theta
        return self

    def fit(self, X, y=None):
        X = check_transitions(X, self.state_dim, self.featurizer is None)
        self._init_learner(X)
        return self._train(X)

    def partial_fit(self, X, y=None):
        X = check_transitions(X, self.state_dim, self.featurizer is None)
        if not hasattr(self, "learner_"):
            self._init_learner(X)
        return self._train(X)

    def predict(self, S) -> np.ndarray:
        check_is_fitted(self, "learner_")
        S = check_states(S, self.state_dim, self.featurizer is None)
        if self.featurizer is None:
            idx = S.astype(np.int64)
            if np.any(idx >= self.learner_.featurizer.n_features):
                raise ValueError("state id outside [0, n_states)")
        else:
            idx = self.learner_.featurizer.indices_batch(S)
        return self.learner_.vf.values_from_indices(idx)

    def score(self, S, y, sample_weight=None) -> float:
        """Negative mean absolute value error against true values ``y``."""
        err = np.abs(self.predict(S) - np.asarray(y, dtype=float))
        return -float(np.average(err, weights=sample_weight))
