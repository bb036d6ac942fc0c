"""Exception types shared across the toolkit."""


class HorloopError(Exception):
    """Base class for all toolkit errors."""


class ChartDomainError(HorloopError):
    """A point left the chart domain of a model.

    ``exit_time`` is the integration time at which the violation was
    detected, or ``None`` for a static point check.
    """

    def __init__(self, message, exit_time=None):
        super().__init__(message)
        self.exit_time = exit_time


class RankMismatchError(HorloopError):
    """Control rank does not match the model frame."""


class NonHorizontalVelocityError(HorloopError):
    """A requested velocity is not in the span of the frame columns."""

    def __init__(self, message, worst_interval, residual):
        super().__init__(message)
        self.worst_interval = worst_interval
        self.residual = residual


class SteeringFailureError(HorloopError):
    """Local steering did not converge."""


class ShootingFailureError(HorloopError):
    """Newton shooting for a closed extremal diverged."""

    def __init__(self, message, residual_history=()):
        super().__init__(message)
        self.residual_history = list(residual_history)


class DegenerateSolutionError(HorloopError):
    """Shooting collapsed onto the zero covector."""


class ConstraintViolationError(HorloopError):
    """A loop operation was called on an open (non-closed) curve."""


class NearSingularConstraintError(HorloopError):
    """The loop-constraint Gram system is numerically singular."""


class RestorationFailureError(HorloopError):
    """Constraint restoration did not converge."""


class MeshFailureError(HorloopError):
    """A sweep mesh could not be maintained."""


class LevelCollapseError(HorloopError):
    """A min-max sweep collapsed onto constant loops (level ~ 0)."""


class ContractionFailureError(HorloopError):
    """Small-energy contraction failed on some homotopy slice."""


class UnsupportedOperationError(HorloopError):
    """Operation requires model data (e.g. a lattice) that is absent."""


class ConfigError(HorloopError):
    """Invalid run configuration."""
