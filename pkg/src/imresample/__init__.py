"""Importance resampling for off-policy TD prediction, with the reweighting baselines,
microworld environments, exact oracles and an experiment harness."""

from .approx import LinearValueFunction, RMSProp, TabularFeatures, TileCoder
from .buffer import MiniBatch, ReplayBuffer, SumTree, effective_sample_size
from .core import ConstantPolicy, GvfSpec, Policy, RegionPolicy, TabularPolicy, Transition, is_ratio
from .estimators import ESTIMATOR_NAMES, EstimatorKind, make_estimator
from .exceptions import (ConfigError, CoverageViolation, DegenerateWeights, EmptyBuffer, EmptySample,
                         InvalidState, NonConvergence, NonFiniteUpdate, OutOfBounds, PremiseViolated)
from .learner import OffPolicyLearner
from .sklearn_api import OffPolicyTD

__version__ = "0.1.0"

__all__ = [
    "LinearValueFunction", "RMSProp", "TabularFeatures", "TileCoder", "MiniBatch", "ReplayBuffer", "SumTree",
    "effective_sample_size", "ConstantPolicy", "GvfSpec", "Policy", "RegionPolicy", "TabularPolicy",
    "Transition", "is_ratio", "ESTIMATOR_NAMES", "EstimatorKind", "make_estimator", "ConfigError",
    "CoverageViolation", "DegenerateWeights", "EmptyBuffer", "EmptySample", "InvalidState", "NonConvergence",
    "NonFiniteUpdate", "OutOfBounds", "PremiseViolated", "OffPolicyLearner", "OffPolicyTD",
]
