"""Coarse forward Euler extrapolation of macroscopic states with step halving."""

import logging
from dataclasses import dataclass

from ..errors import PreconditionViolated, StepCollapse
from .ensemble import WeightedEnsemble
from .matching import MatchOutcome, MatchStatus, SolverOptions, match
from .restriction import MacroState, RestrictionSet

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExtrapolationPlan:
    """
    How far and how carefully to extrapolate.

    Attributes:
        dt_macro (float): Requested macro step.
        window (float): Micro window the slope is estimated over.
        adaptive (bool): Halve the step after an infeasible matching.
        min_dt (float | None): Floor of the halved step; the window when None.
        max_halvings (int): Upper bound on consecutive halvings.
    """

    dt_macro: float
    window: float
    adaptive: bool = True
    min_dt: float | None = None
    max_halvings: int = 30

    def __post_init__(self) -> None:
        if self.window <= 0:
            raise ValueError(f"window must be positive, got {self.window}")
        if self.window > self.dt_macro:
            raise ValueError(f"window {self.window} exceeds the macro step {self.dt_macro}")
        if self.max_halvings < 0:
            raise ValueError("max_halvings must be non-negative")

    @property
    def floor(self) -> float:
        return self.window if self.min_dt is None else self.min_dt


@dataclass(frozen=True)
class ExtrapolationStep:
    """
    Result of extrapolate_and_match.

    Attributes:
        outcome (MatchOutcome): Matching at the accepted step.
        dt_used (float): The step actually used, dt_macro / 2**halvings or the floor.
        halvings (int): Number of halvings.
        target (MacroState): Extrapolated state that was matched.
    """

    outcome: MatchOutcome
    dt_used: float
    halvings: int
    target: MacroState


def extrapolate(m0: MacroState, m1: MacroState, dtau: float, dt: float) -> MacroState:
    """
    m0 + (dt / dtau) (m1 - m0).

    Args:
        m0 (MacroState): State at the start of the micro window.
        m1 (MacroState): State at its end.
        dtau (float): Micro window, > 0.
        dt (float): Extrapolation step.

    Returns:
        MacroState: The extrapolated state.
    """
    if m0.level != m1.level:
        raise PreconditionViolated(f"Levels differ: {m0.level} and {m1.level}")
    if dtau <= 0:
        raise ValueError(f"dtau must be positive, got {dtau}")
    if dt == dtau:
        return m1
    return MacroState(m0.m + (dt / dtau) * (m1.m - m0.m))


def extrapolate_and_match(
    m0: MacroState,
    m1: MacroState,
    prior: WeightedEnsemble,
    restriction: RestrictionSet,
    plan: ExtrapolationPlan,
    opts: SolverOptions,
) -> ExtrapolationStep:
    """
    Extrapolate over the macro step and match the prior, halving the step while infeasible.

    Args:
        m0 (MacroState): State at the start of the burst.
        m1 (MacroState): State at the end of the burst.
        prior (WeightedEnsemble): Last ensemble of the burst.
        restriction (RestrictionSet): Restriction functions.
        plan (ExtrapolationPlan): Step and halving control.
        opts (SolverOptions): Solver options.

    Returns:
        ExtrapolationStep: The accepted matching. Without adaptivity, and for
        MaxIterations, the outcome is returned whatever its status.

    A halving that would pass the floor is clamped to it, so the last attempt is made at
    the floor itself (at the window it is the burst endpoint, which is always feasible).

    Raises:
        StepCollapse: If the step at the floor, or after `max_halvings`, is infeasible.
    """
    dt = plan.dt_macro
    floor = plan.floor
    halvings = 0
    while True:
        target = extrapolate(m0, m1, plan.window, dt)
        outcome = match(target, prior, restriction, opts)
        if outcome.status is not MatchStatus.INFEASIBLE or not plan.adaptive:
            return ExtrapolationStep(outcome, dt, halvings, target)
        if dt <= floor * (1.0 + 1e-12) or halvings >= plan.max_halvings:
            raise StepCollapse(
                f"Extrapolation infeasible at dt={dt:.6e}; the floor is {floor:.6e}",
                dt,
            )
        logger.warning(f"Extrapolation infeasible at dt={dt:.6e}, halving")
        dt = max(dt / 2.0, floor)
        halvings += 1
