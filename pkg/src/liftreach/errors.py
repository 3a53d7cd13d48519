"""Exception types shared across the toolkit."""


class LiftReachError(Exception):
    """Base class for all liftreach errors."""


class DomainError(LiftReachError):
    """An elementary function was evaluated outside its domain."""


class DivisionByZeroInterval(LiftReachError):
    """Interval division by an interval containing zero."""


class DimensionMismatch(LiftReachError):
    """Operands have inconsistent dimensions."""


class SingularBlock(LiftReachError):
    """The leading square block of a lifting matrix is numerically singular."""


class RankDeficient(LiftReachError):
    """A lifting matrix does not have full column rank."""


class LpNumericalFailure(LiftReachError):
    """The LP solver hit its iteration cap or lost numerical stability.

    Callers should fall back to the unrefined box: refinement is optional
    tightening, so skipping it preserves soundness.
    """


class StepFailure(LiftReachError):
    """The embedding integrator produced a non-finite derivative."""

    def __init__(self, message, time=None, component=None):
        super().__init__(message)
        self.time = time
        self.component = component


class FeedforwardLoadError(LiftReachError):
    """A feedforward input file could not be parsed."""


class ConfigError(LiftReachError):
    """A run configuration is malformed."""
