"""Exceptions raised by the micro-macro acceleration package."""

from typing import Any


class MicroMacroError(Exception):
    """Root of every error raised by this package."""


class ConfigurationError(MicroMacroError, ValueError):
    """An experiment configuration is missing a key or holds an invalid value."""


class AbsoluteContinuityViolated(MicroMacroError, ValueError):
    """The first measure charges a point the second one does not (infinite entropy)."""


class UnsupportedSpace(MicroMacroError, ValueError):
    """An operation was requested on a configuration space it is not defined for."""


class InvalidRestriction(MicroMacroError, ValueError):
    """Restriction functions are constant or linearly dependent together with 1."""


class PreconditionViolated(MicroMacroError, ValueError):
    """An argument does not satisfy the documented precondition of an operation."""


class CflViolated(MicroMacroError, ValueError):
    """The explicit Fokker-Planck step exceeds its stability bound."""


class MassConservationViolated(MicroMacroError):
    """A Fokker-Planck step lost or created mass beyond round-off."""


class SingularVariance(MicroMacroError):
    """The covariance of the restriction functions is singular."""


class MatchFailed(MicroMacroError):
    """A matching that had to converge ended Infeasible or out of iterations.

    Attributes:
        statuses: Status of every matching involved, in evaluation order.
    """

    def __init__(self, message: str, statuses: tuple[Any, ...] = ()) -> None:
        super().__init__(message)
        self.statuses = statuses
        self.step_index: int | None = None
        self.partial: Any = None


class AllInfeasible(MicroMacroError):
    """No candidate of a greedy selection pool admits a feasible matching."""


class StepCollapse(MicroMacroError):
    """Halving the macro step fell below its floor without a feasible matching.

    Attributes:
        dt: The last step that was attempted.
        step_index: Macro step at which the collapse happened, once known.
        partial: Trajectory recorded up to the failing step, once known.
    """

    def __init__(self, message: str, dt: float) -> None:
        super().__init__(message)
        self.dt = dt
        self.step_index: int | None = None
        self.partial: Any = None


class SweepFailed(MicroMacroError):
    """Every row of a convergence sweep failed."""
