"""Deterministic grid oracle for entropy expansions and local errors on the torus."""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg
from scipy.special import rel_entr

from ..errors import AbsoluteContinuityViolated, MatchFailed, PreconditionViolated, SingularVariance
from .extrapolation import extrapolate
from .fitting import LimitFit, SlopeFit, extrapolate_ratio_limit, fit_loglog_slope
from .grid import GridDensity, fokker_planck_operator, fp_evolve
from .matching import MatchStatus, Multipliers, SolverOptions, solve_dual
from .restriction import MacroState, RestrictionSet, grid_table, restrict_grid
from .space_model import (
    SdeModel,
    WideningGaussianRef,
    widening_gaussian_density,
    widening_gaussian_entropy,
)

logger = logging.getLogger(__name__)

WIDE_TORUS_FACTOR = 40.0


@dataclass(frozen=True, eq=False)
class GridMatch:
    """
    Quadrature matching of a grid density.

    Attributes:
        density (GridDensity): Matched density p*_i proportional to p_i exp(lambda . phi(x_i)).
        multipliers (Multipliers): Multipliers and log-partition value.
        entropy (float): D(p* || p) as lambda . m_hat - A.
        status (MatchStatus): Solver status.
        iterations (int): Newton iterations.
        residual (float): Moment residual.
    """

    density: GridDensity
    multipliers: Multipliers
    entropy: float
    status: MatchStatus
    iterations: int
    residual: float

    @property
    def converged(self) -> bool:
        return self.status is MatchStatus.CONVERGED


def grid_match(
    m: MacroState, prior: GridDensity, restriction: RestrictionSet, opts: SolverOptions
) -> GridMatch:
    """
    Minimum relative entropy matching with quadrature in place of weighted sums.

    Args:
        m (MacroState): Target moments.
        prior (GridDensity): Prior density.
        restriction (RestrictionSet): Restriction functions.
        opts (SolverOptions): Solver options.

    Returns:
        GridMatch: The matched density; non-convergence is reported in `status`.
    """
    if m.level != restriction.level:
        raise PreconditionViolated(
            f"Target has level {m.level} but the restriction set has {restriction.level}"
        )
    solution = solve_dual(m.m, prior.values * prior.h, grid_table(restriction, prior), opts)
    density = prior if solution.iterations == 0 else prior.with_values(solution.weights / prior.h)
    return GridMatch(
        density,
        solution.multipliers,
        solution.entropy,
        solution.status,
        solution.iterations,
        solution.residual,
    )


def _require_same_grid(p: GridDensity, q: GridDensity) -> None:
    if not p.same_grid(q):
        raise PreconditionViolated("Densities live on different grids")


def grid_entropy(p: GridDensity, q: GridDensity) -> float:
    """
    sum_i p_i ln(p_i / q_i) h.

    Raises:
        AbsoluteContinuityViolated: If p charges a cell where q vanishes.
    """
    _require_same_grid(p, q)
    if np.any((p.values > 0) & (q.values == 0)):
        raise AbsoluteContinuityViolated("p is not absolutely continuous with respect to q")
    # rel_entr(p, q) - p + q integrates the same value and keeps every term nonnegative
    terms = rel_entr(p.values, q.values) - p.values + q.values
    return max(float(np.sum(terms) * p.h), 0.0)


def grid_total_variation(p: GridDensity, q: GridDensity) -> float:
    """sum_i |p_i - q_i| h."""
    _require_same_grid(p, q)
    return float(np.sum(np.abs(p.values - q.values)) * p.h)


def fisher_information(p: GridDensity, model: SdeModel) -> float:
    """
    Time-parametrised Fisher information sum_i (L*p)_i^2 / p_i h.

    Cells where p vanishes are skipped.
    """
    generator = fokker_planck_operator(p, model)
    support = p.values > 0
    return float(np.sum(generator[support] ** 2 / p.values[support]) * p.h)


def matched_expansion_coefficient(p: GridDensity, model: SdeModel, restriction: RestrictionSet) -> float:
    """
    g^T Var_p(phi)^{-1} g with g the restriction of L*p.

    The part of the Fisher information captured by the restriction functions.

    Raises:
        SingularVariance: If the covariance of the restriction functions under p is singular.
    """
    phi = grid_table(restriction, p)
    g = (fokker_planck_operator(p, model) * p.h) @ phi
    weights = p.values * p.h
    centred = phi - weights @ phi
    covariance = (centred * weights[:, None]).T @ centred
    covariance = 0.5 * (covariance + covariance.T)
    eigenvalues = np.linalg.eigvalsh(covariance)
    if eigenvalues[0] <= 1e-14 * max(float(eigenvalues[-1]), 1e-300):
        raise SingularVariance(f"Covariance of the restriction is singular ({eigenvalues[0]:.3e})")
    try:
        solved = scipy.linalg.solve(covariance, g, assume_a="pos")
    except scipy.linalg.LinAlgError as e:
        raise SingularVariance(str(e)) from e
    return max(float(g @ solved), 0.0)


@dataclass(frozen=True)
class ProbeRow:
    """
    One step of a probe ladder.

    Attributes:
        dt (float): Time step.
        entropy (float): Measured relative entropy.
        tv (float): Total variation distance of the same pair.
        closed_form (float): Exact value when one is known, NaN otherwise.
    """

    dt: float
    entropy: float
    tv: float
    closed_form: float = math.nan

    @property
    def ratio(self) -> float:
        return self.entropy / self.dt**2


@dataclass(frozen=True)
class ProbeResult:
    """
    Probe ladder with its fitted order and second-order coefficient.

    Attributes:
        probe (str): Probe name.
        rows (list[ProbeRow]): One row per step.
        slope (SlopeFit): Log-log fit of entropy against dt.
        limit (LimitFit): Extrapolated limit of entropy / dt**2.
        expected_limit (float): Independently computed value of that limit.
        details (dict[str, float]): Further independently computed quantities.
    """

    probe: str
    rows: list[ProbeRow]
    slope: SlopeFit
    limit: LimitFit
    expected_limit: float
    details: dict[str, float] = field(default_factory=dict)


def _fit(probe: str, rows: list[ProbeRow], expected: float, **details: float) -> ProbeResult:
    dts = [r.dt for r in rows]
    values = [r.entropy for r in rows]
    # Weights fall off as 1/dt.
    weights = [min(dts) / dt for dt in dts]
    result = ProbeResult(
        probe,
        rows,
        fit_loglog_slope(dts, values, weights),
        extrapolate_ratio_limit(dts, values),
        expected,
        details,
    )
    logger.info(
        f"Probe {probe}: slope={result.slope.slope:.4f} limit={result.limit.limit:.6g} "
        f"expected={expected:.6g}"
    )
    return result


def wide_torus_circumference(sigma0: float, horizon: float) -> float:
    """Circumference on which a Gaussian of variance up to sigma0 + 2 horizon never wraps."""
    return WIDE_TORUS_FACTOR * math.sqrt(sigma0 + 2.0 * horizon)


def gaussian_on_wide_torus(ref: WideningGaussianRef, t: float, size: int, length: float) -> GridDensity:
    """The widening Gaussian at time t on a torus of circumference `length` centred on 0."""
    return GridDensity.from_function(
        lambda x: widening_gaussian_density(t, x, ref), size, length, -0.5 * length
    )


def widening_gaussian_probe(
    sigma0: float, dt_list: Sequence[float], size: int = 1024, length: float | None = None
) -> ProbeResult:
    """
    Grid entropy between exact widening Gaussians against the closed form.

    Args:
        sigma0 (float): Variance at the reference time.
        dt_list (Sequence[float]): Time steps.
        size (int): Grid cells.
        length (float | None): Circumference of the wide torus; chosen so the widest
            Gaussian never wraps when None.

    Returns:
        ProbeResult: Rows with the closed form column; the expected limit is 1 / sigma0**2.
    """
    ref = WideningGaussianRef(sigma0)
    length = length or wide_torus_circumference(sigma0, max(dt_list))
    base = gaussian_on_wide_torus(ref, 0.0, size, length)
    rows = []
    for dt in sorted(dt_list):
        later = gaussian_on_wide_torus(ref, dt, size, length)
        rows.append(
            ProbeRow(
                dt,
                grid_entropy(later, base),
                grid_total_variation(later, base),
                widening_gaussian_entropy(sigma0, dt),
            )
        )
    return _fit("widening-gaussian", rows, 1.0 / sigma0**2)


def entropy_expansion_probe(
    p: GridDensity,
    model: SdeModel,
    dt_list: Sequence[float],
    closed_form: Callable[[float], float] | None = None,
    safety: float = 0.9,
) -> ProbeResult:
    """
    D(p(t + dt) || p(t)) along the grid evolution against its expansion I(t) dt**2 / 2.

    Args:
        p (GridDensity): Density at time t.
        model (SdeModel): The dynamics.
        dt_list (Sequence[float]): Time steps.
        closed_form (Callable | None): Exact entropy as a function of dt, when known.
        safety (float): Fraction of the CFL bound used.

    Returns:
        ProbeResult: The expected limit is half the Fisher information.
    """
    information = fisher_information(p, model)
    rows = []
    for dt in sorted(dt_list):
        later = fp_evolve(p, model, dt, safety)
        exact = closed_form(dt) if closed_form is not None else math.nan
        rows.append(ProbeRow(dt, grid_entropy(later, p), grid_total_variation(later, p), exact))
    return _fit("entropy-expansion", rows, 0.5 * information, fisher_information=information)


def _require_converged(result: GridMatch, dt: float) -> None:
    if not result.converged:
        raise MatchFailed(f"Grid matching {result.status.value} at dt={dt:.4e}", (result.status,))


def matched_expansion_probe(
    p: GridDensity,
    model: SdeModel,
    restriction: RestrictionSet,
    dt_list: Sequence[float],
    opts: SolverOptions,
    safety: float = 0.9,
) -> ProbeResult:
    """
    D(M(R p(t + dt), p(t)) || p(t)) against its expansion c dt**2 / 2.

    The expected limit is half of `matched_expansion_coefficient`.
    """
    coefficient = matched_expansion_coefficient(p, model, restriction)
    rows = []
    for dt in sorted(dt_list):
        later = fp_evolve(p, model, dt, safety)
        matched = grid_match(restrict_grid(restriction, later), p, restriction, opts)
        _require_converged(matched, dt)
        rows.append(ProbeRow(dt, matched.entropy, grid_total_variation(matched.density, p)))
    return _fit("matched-expansion", rows, 0.5 * coefficient, matched_coefficient=coefficient)


def local_error_probe(
    p: GridDensity,
    model: SdeModel,
    restriction: RestrictionSet,
    dt_list: Sequence[float],
    opts: SolverOptions,
    dtau_ratio: float | None = None,
    safety: float = 0.9,
) -> ProbeResult:
    """
    Local error D(p(t + dt) || matched) of one matching step, over a ladder of dt.

    Without `dtau_ratio`, the exact moments of p(t + dt) are matched onto p(t). With it,
    the window is dtau = dtau_ratio * dt, the prior is p(t + dtau) and the target is the
    coarse forward Euler extrapolation of the moments at t and t + dtau.

    Args:
        p (GridDensity): Density at time t, smoothed by the dynamics.
        model (SdeModel): The dynamics.
        restriction (RestrictionSet): Restriction functions.
        dt_list (Sequence[float]): Time steps.
        opts (SolverOptions): Solver options.
        dtau_ratio (float | None): Micro window fraction.
        safety (float): Fraction of the CFL bound used.

    Returns:
        ProbeResult: The expected limit is (1 - dtau_ratio)**2 (I(t) - c) / 2, with
        dtau_ratio = 0 for the exact-moment variant.

    Raises:
        MatchFailed: If a matching does not converge.
    """
    information = fisher_information(p, model)
    coefficient = matched_expansion_coefficient(p, model, restriction)
    m_start = restrict_grid(restriction, p)
    rows = []
    for dt in sorted(dt_list):
        later = fp_evolve(p, model, dt, safety)
        if dtau_ratio is None:
            prior, target = p, restrict_grid(restriction, later)
        else:
            dtau = dtau_ratio * dt
            prior = fp_evolve(p, model, dtau, safety)
            target = extrapolate(m_start, restrict_grid(restriction, prior), dtau, dt)
        matched = grid_match(target, prior, restriction, opts)
        _require_converged(matched, dt)
        rows.append(
            ProbeRow(
                dt, grid_entropy(later, matched.density), grid_total_variation(later, matched.density)
            )
        )
    lag = 1.0 - (dtau_ratio or 0.0)
    return _fit(
        "local-error",
        rows,
        0.5 * lag**2 * (information - coefficient),
        fisher_information=information,
        matched_coefficient=coefficient,
    )
