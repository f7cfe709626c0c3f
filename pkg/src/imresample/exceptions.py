"""Exception types raised across the package."""


class CoverageViolation(ValueError):
    """The target policy takes an action the behavior policy never takes."""


class InvalidState(RuntimeError):
    """An environment was stepped from a state it cannot step from."""


class DegenerateWeights(ValueError):
    """Every importance weight in the relevant set is zero."""


class EmptyBuffer(ValueError):
    pass


class EmptySample(ValueError):
    pass


class OutOfBounds(ValueError):
    pass


class NonFiniteUpdate(FloatingPointError):
    """An update direction contained NaN or Inf entries."""


class NonConvergence(RuntimeError):
    pass


class PremiseViolated(ValueError):
    """A buffer does not satisfy the premise of a variance theorem."""


class ConfigError(ValueError):
    pass
