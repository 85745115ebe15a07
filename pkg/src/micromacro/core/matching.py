"""Minimum relative entropy matching of weighted ensembles.

The matched ensemble keeps the particles of the prior and tilts its weights,
w*_j proportional to w_j exp(lambda . phi(x_j)), with multipliers lambda solving the
dual first-order system grad A(lambda) = m. The dual objective
g(lambda) = A(lambda) - lambda . m is convex and is minimised by damped Newton with
Armijo backtracking.
"""

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field
from scipy.special import logsumexp

from ..errors import AllInfeasible, InvalidRestriction, MatchFailed, PreconditionViolated
from .ensemble import WeightedEnsemble, discrete_relative_entropy
from .restriction import MacroState, RestrictionFunction, RestrictionSet, restrict

logger = logging.getLogger(__name__)

RIDGE_THRESHOLD = 1e-12
ROUNDOFF_ALLOWANCE = 1e-14


class SolverOptions(BaseModel):
    """
    Options of the damped Newton dual solver.

    Attributes:
        tol_moment (float): Sup-norm tolerance on the moment residual.
        max_iter (int): Newton iteration budget.
        lambda_cap (float): Multiplier norm above which the target is declared infeasible.
        armijo_c (float): Sufficient decrease constant of the line search.
        min_step (float): Smallest line search step before the search is declared stalled.
    """

    model_config = ConfigDict(frozen=True)

    tol_moment: float = Field(1e-10, gt=0, description="Moment residual tolerance")
    max_iter: int = Field(100, gt=0, description="Newton iteration budget")
    lambda_cap: float = Field(50.0, gt=0, description="Infeasibility sentinel on |lambda|")
    armijo_c: float = Field(1e-4, gt=0, description="Armijo sufficient decrease constant")
    min_step: float = Field(1e-12, gt=0, description="Smallest line search step")


class MatchStatus(enum.Enum):
    CONVERGED = "converged"
    INFEASIBLE = "infeasible"
    MAX_ITERATIONS = "max-iterations"


@dataclass(frozen=True, eq=False)
class Multipliers:
    """
    Lagrange multipliers and the log-partition value they produce.

    Attributes:
        lam (NDArray): The multipliers lambda.
        log_partition (float): A(lambda, prior).
    """

    lam: NDArray[np.float64]
    log_partition: float

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.lam))


@dataclass(frozen=True, eq=False)
class DualSolution:
    """Result of the dual solve on a discrete measure given by weights and a table."""

    multipliers: Multipliers
    weights: NDArray[np.float64]
    moments: NDArray[np.float64]
    status: MatchStatus
    iterations: int
    residual: float
    objective_trace: tuple[float, ...]

    @property
    def entropy(self) -> float:
        """lambda . m_hat - A with the achieved moments m_hat."""
        value = float(self.multipliers.lam @ self.moments) - self.multipliers.log_partition
        return max(value, 0.0)


@dataclass(frozen=True, eq=False)
class MatchOutcome:
    """
    Outcome of matching a prior ensemble onto a macroscopic state.

    Attributes:
        multipliers (Multipliers): Final multipliers.
        matched (WeightedEnsemble): Reweighted prior.
        entropy (float): D(matched || prior) as lambda . m_hat - A.
        iterations (int): Newton iterations performed.
        residual (float): Sup norm of the moment residual.
        status (MatchStatus): Converged, Infeasible or MaxIterations.
        target (MacroState): The macroscopic state that was matched.
        objective_trace (tuple[float, ...]): Dual objective after every accepted iterate.
    """

    multipliers: Multipliers
    matched: WeightedEnsemble
    entropy: float
    iterations: int
    residual: float
    status: MatchStatus
    target: MacroState
    objective_trace: tuple[float, ...] = field(default=())

    @property
    def converged(self) -> bool:
        return self.status is MatchStatus.CONVERGED

    @property
    def lambda_norm(self) -> float:
        return self.multipliers.norm


def _log_partition(lam: NDArray[np.float64], weights: NDArray[np.float64], phi: NDArray[np.float64]) -> float:
    return float(logsumexp(phi @ lam, b=weights))


def _tilt(
    lam: NDArray[np.float64], weights: NDArray[np.float64], phi: NDArray[np.float64]
) -> tuple[float, NDArray[np.float64]]:
    """Log-partition value and normalised tilted weights."""
    exponent = phi @ lam
    log_z = float(logsumexp(exponent, b=weights))
    with np.errstate(divide="ignore"):
        log_w = np.log(weights)
    return log_z, np.exp(log_w + exponent - log_z)


def _moments_and_covariance(
    tilted: NDArray[np.float64], phi: NDArray[np.float64]
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    mean = tilted @ phi
    centred = phi - mean
    covariance = (centred * tilted[:, None]).T @ centred
    return mean, 0.5 * (covariance + covariance.T)


def log_partition(lam: NDArray[np.float64], prior: WeightedEnsemble, phi: NDArray[np.float64]) -> float:
    """
    A(lambda, prior) = ln sum_j w_j exp(lambda . Phi_j), stabilised by log-sum-exp.

    Args:
        lam (NDArray): Multipliers, shape (L,).
        prior (WeightedEnsemble): Prior ensemble.
        phi (NDArray): Evaluation table, shape (J, L).

    Returns:
        float: The log-partition value.
    """
    return _log_partition(np.asarray(lam, dtype=np.float64), prior.weights, phi)


def dual_gradient(lam: NDArray[np.float64], prior: WeightedEnsemble, phi: NDArray[np.float64]) -> NDArray[np.float64]:
    """Moments of the tilted ensemble, the gradient of A."""
    _, tilted = _tilt(np.asarray(lam, dtype=np.float64), prior.weights, phi)
    return tilted @ phi


def dual_hessian(lam: NDArray[np.float64], prior: WeightedEnsemble, phi: NDArray[np.float64]) -> NDArray[np.float64]:
    """Weighted covariance of the restriction functions under the tilted ensemble."""
    _, tilted = _tilt(np.asarray(lam, dtype=np.float64), prior.weights, phi)
    return _moments_and_covariance(tilted, phi)[1]


def _newton_direction(hessian: NDArray[np.float64], gradient: NDArray[np.float64]) -> NDArray[np.float64]:
    size = hessian.shape[0]
    smallest = float(np.linalg.eigvalsh(hessian)[0])
    if smallest < RIDGE_THRESHOLD:
        ridge = RIDGE_THRESHOLD * max(float(np.trace(hessian)), 0.0) / size
        logger.debug(f"Hessian eigenvalue {smallest:.3e}, adding ridge {ridge:.3e}")
        hessian = hessian + ridge * np.eye(size)
    try:
        direction = scipy.linalg.solve(hessian, -gradient, assume_a="pos")
    except (scipy.linalg.LinAlgError, ValueError):
        logger.debug("Hessian solve failed, using the gradient direction")
        return -gradient
    if not np.all(np.isfinite(direction)) or direction @ gradient >= 0:
        return -gradient
    return direction


def solve_dual(
    target: NDArray[np.float64],
    weights: NDArray[np.float64],
    phi: NDArray[np.float64],
    opts: SolverOptions,
) -> DualSolution:
    """
    Minimise g(lambda) = A(lambda) - lambda . target from lambda = 0.

    Shared by ensemble matching and the quadrature matching of the grid oracle: a
    discrete measure is given by its normalised weights and its (J, L) evaluation table.

    Args:
        target (NDArray): Target moments, shape (L,).
        weights (NDArray): Normalised prior weights, shape (J,).
        phi (NDArray): Evaluation table, shape (J, L).
        opts (SolverOptions): Solver options.

    Returns:
        DualSolution: Multipliers, tilted weights and diagnostics.
    """
    target = np.asarray(target, dtype=np.float64)
    lam = np.zeros(target.size)
    log_z, tilted = 0.0, weights
    moments, covariance = _moments_and_covariance(tilted, phi)
    residual_vector = moments - target
    residual = float(np.max(np.abs(residual_vector)))
    objective = log_z - float(lam @ target)
    trace = [objective]
    if residual <= opts.tol_moment:
        return DualSolution(
            Multipliers(lam, 0.0), weights, moments, MatchStatus.CONVERGED, 0, residual, tuple(trace)
        )

    status = MatchStatus.MAX_ITERATIONS
    iterations = 0
    while iterations < opts.max_iter:
        direction = _newton_direction(covariance, residual_vector)
        slope = float(residual_vector @ direction)
        allowance = ROUNDOFF_ALLOWANCE * max(1.0, abs(objective))
        step = 1.0
        while True:
            candidate = lam + step * direction
            candidate_objective = _log_partition(candidate, weights, phi) - float(candidate @ target)
            if candidate_objective <= objective + opts.armijo_c * step * slope + allowance:
                break
            step *= 0.5
            if step < opts.min_step:
                break
        iterations += 1
        if step < opts.min_step:
            logger.debug(f"Line search stalled at iteration {iterations}")
            status = MatchStatus.INFEASIBLE
            break
        lam, objective = candidate, candidate_objective
        trace.append(objective)
        log_z, tilted = _tilt(lam, weights, phi)
        moments, covariance = _moments_and_covariance(tilted, phi)
        residual_vector = moments - target
        residual = float(np.max(np.abs(residual_vector)))
        logger.debug(
            f"Newton iteration {iterations}: residual={residual:.3e} step={step:.3e} "
            f"|lambda|={np.linalg.norm(lam):.3e}"
        )
        if np.linalg.norm(lam) > opts.lambda_cap:
            status = MatchStatus.INFEASIBLE
            break
        if residual <= opts.tol_moment:
            status = MatchStatus.CONVERGED
            break

    return DualSolution(
        Multipliers(lam, log_z), tilted, moments, status, iterations, residual, tuple(trace)
    )


def match(
    m: MacroState, prior: WeightedEnsemble, restriction: RestrictionSet, opts: SolverOptions
) -> MatchOutcome:
    """
    Reweight the prior so that its restriction equals m with minimal relative entropy.

    Args:
        m (MacroState): Target macroscopic state, level |R|.
        prior (WeightedEnsemble): Prior ensemble.
        restriction (RestrictionSet): Restriction functions.
        opts (SolverOptions): Solver options.

    Returns:
        MatchOutcome: The outcome. Infeasible and MaxIterations are reported in `status`.

    Raises:
        PreconditionViolated: If the level of m does not match the restriction set.
    """
    if m.level != restriction.level:
        raise PreconditionViolated(
            f"Target has level {m.level} but the restriction set has {restriction.level}"
        )
    phi = restriction.evaluate(prior.positions)
    solution = solve_dual(m.m, prior.weights, phi, opts)
    matched = prior if solution.iterations == 0 else prior.reweighted(solution.weights)
    if solution.status is not MatchStatus.CONVERGED:
        logger.debug(f"Matching ended {solution.status.value} after {solution.iterations} iterations")
    return MatchOutcome(
        multipliers=solution.multipliers,
        matched=matched,
        entropy=solution.entropy,
        iterations=solution.iterations,
        residual=solution.residual,
        status=solution.status,
        target=m,
        objective_trace=solution.objective_trace,
    )


def pythagorean_residual(
    nu: WeightedEnsemble,
    prior: WeightedEnsemble,
    outcome: MatchOutcome,
    restriction: RestrictionSet | None = None,
    moment_tol: float = 1e-8,
) -> float:
    """
    D(nu || prior) - D(nu || matched) - D(matched || prior).

    Args:
        nu (WeightedEnsemble): Any measure on the prior's particles meeting the constraints.
        prior (WeightedEnsemble): The prior of the matching.
        outcome (MatchOutcome): A converged matching of the prior.
        restriction (RestrictionSet | None): When given, nu is checked to satisfy the
            target moments of the outcome.
        moment_tol (float): Tolerance of that check.

    Returns:
        float: The residual of the Pythagorean identity.

    Raises:
        PreconditionViolated: If nu does not share the particles or misses the moments.
    """
    if not nu.shares_positions(prior):
        raise PreconditionViolated("nu must live on the particles of the prior")
    if restriction is not None:
        gap = np.max(np.abs(restrict(restriction, nu).m - outcome.target.m))
        if gap > moment_tol:
            raise PreconditionViolated(f"nu misses the matched moments by {gap:.3e}")
    return (
        discrete_relative_entropy(nu, prior)
        - discrete_relative_entropy(nu, outcome.matched)
        - discrete_relative_entropy(outcome.matched, prior)
    )


def _require_converged(*outcomes: MatchOutcome) -> None:
    if not all(o.converged for o in outcomes):
        statuses = tuple(o.status for o in outcomes)
        raise MatchFailed(
            f"Matching did not converge: {[s.value for s in statuses]}", statuses
        )


def transitivity_check(
    m_ext: MacroState,
    prior: WeightedEnsemble,
    restriction_ext: RestrictionSet,
    opts: SolverOptions,
) -> float:
    """
    Compare matching onto L+1 moments directly with matching in two stages.

    Args:
        m_ext (MacroState): Target of level L+1.
        prior (WeightedEnsemble): Prior ensemble.
        restriction_ext (RestrictionSet): Restriction set of level L+1.
        opts (SolverOptions): Solver options.

    Returns:
        float: Sup norm of the weight difference of both routes.

    Raises:
        MatchFailed: If a matching of either route does not converge.
    """
    level = m_ext.level - 1
    direct = match(m_ext, prior, restriction_ext, opts)
    first = match(m_ext.prefix(level), prior, restriction_ext.prefix(level), opts)
    if not first.converged:
        _require_converged(direct, first)
    staged = match(m_ext, first.matched, restriction_ext, opts)
    _require_converged(direct, first, staged)
    return float(np.max(np.abs(direct.matched.weights - staged.matched.weights)))


def _gain(base: MatchOutcome, extended: MatchOutcome) -> float:
    value = (
        float(extended.multipliers.lam @ extended.target.m)
        - float(base.multipliers.lam @ base.target.m)
        + base.multipliers.log_partition
        - extended.multipliers.log_partition
    )
    return max(value, 0.0)


def entropy_gain(
    prior: WeightedEnsemble,
    restriction: RestrictionSet,
    restriction_ext: RestrictionSet,
    m_ext: MacroState,
    opts: SolverOptions,
) -> float:
    """
    Entropy reduction obtained by adding one macroscopic state variable.

    Equals D(mu*_{L+1} || mu*_L) for the matchings of the prior at levels L+1 and L.

    Args:
        prior (WeightedEnsemble): Prior ensemble.
        restriction (RestrictionSet): Level-L restriction set.
        restriction_ext (RestrictionSet): Level-(L+1) set extending it.
        m_ext (MacroState): Level-(L+1) target whose prefix is the level-L target.
        opts (SolverOptions): Solver options.

    Returns:
        float: The nonnegative gain.

    Raises:
        MatchFailed: If either matching does not converge.
    """
    if restriction_ext.level != restriction.level + 1 or m_ext.level != restriction_ext.level:
        raise PreconditionViolated("The extended problem must add exactly one moment")
    base = match(m_ext.prefix(restriction.level), prior, restriction, opts)
    extended = match(m_ext, prior, restriction_ext, opts)
    _require_converged(base, extended)
    return _gain(base, extended)


def candidate_gains(
    prior: WeightedEnsemble,
    restriction: RestrictionSet,
    m: MacroState,
    candidates: Sequence[RestrictionFunction],
    targets: Sequence[float],
    opts: SolverOptions,
) -> list[float]:
    """
    Entropy gain of every candidate; NaN where the extension is dependent or infeasible.

    Args:
        prior (WeightedEnsemble): Prior ensemble.
        restriction (RestrictionSet): Current restriction set.
        m (MacroState): Current target moments.
        candidates (Sequence[RestrictionFunction]): Candidate restriction functions.
        targets (Sequence[float]): Target moment of every candidate.
        opts (SolverOptions): Solver options.

    Returns:
        list[float]: One gain per candidate, in pool order.

    Raises:
        MatchFailed: If the base matching does not converge.
    """
    if len(candidates) != len(targets):
        raise PreconditionViolated("Every candidate needs a target moment")
    base = match(m, prior, restriction, opts)
    _require_converged(base)
    gains = []
    for candidate, target in zip(candidates, targets):
        try:
            extended_set = restriction.extended(candidate)
        except InvalidRestriction as e:
            logger.warning(f"Candidate {candidate.name} skipped: {e}")
            gains.append(math.nan)
            continue
        extended = match(m.extended(target), prior, extended_set, opts)
        if not extended.converged:
            logger.warning(f"Candidate {candidate.name} is {extended.status.value}")
            gains.append(math.nan)
            continue
        gains.append(_gain(base, extended))
    return gains


def greedy_select(
    prior: WeightedEnsemble,
    restriction: RestrictionSet,
    m: MacroState,
    candidates: Sequence[RestrictionFunction],
    targets: Sequence[float],
    opts: SolverOptions,
) -> int:
    """
    Index of the candidate with the largest entropy gain; ties go to the lowest index.

    Raises:
        AllInfeasible: If no candidate admits a converged extended matching.
    """
    if not candidates:
        raise PreconditionViolated("The candidate pool is empty")
    return best_candidate(candidate_gains(prior, restriction, m, candidates, targets, opts))


def best_candidate(gains: Sequence[float]) -> int:
    """First index of the largest finite gain."""
    gains = np.asarray(gains, dtype=np.float64)
    if gains.size == 0 or np.all(np.isnan(gains)):
        raise AllInfeasible("No candidate extension admits a feasible matching")
    return int(np.nanargmax(gains))
