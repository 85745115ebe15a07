"""Micro-macro acceleration over a macro mesh, reference runs and error sweeps."""

import enum
import logging
import math
import multiprocessing.pool
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray

from ..errors import MatchFailed, MicroMacroError, PreconditionViolated, StepCollapse
from .ensemble import (
    Observable,
    WeightedEnsemble,
    bootstrap_standard_error,
    expectation,
    sample_initial,
    total_variation,
)
from .extrapolation import ExtrapolationPlan, ExtrapolationStep, extrapolate_and_match
from .matching import MatchStatus, SolverOptions
from .micro import MicroConfig, em_step, propagate
from .restriction import (
    MacroState,
    RestrictionFunction,
    RestrictionSet,
    build_restriction,
    gaussian_bump,
    restrict,
)
from .space_model import SdeModel
from .streams import Purpose, StreamFactory

logger = logging.getLogger(__name__)

MESH_TOL = 1e-12


@dataclass(frozen=True)
class AccelConfig:
    """
    One accelerated simulation.

    Attributes:
        horizon (float): Final time T.
        dt_macro (float): Macro step.
        micro (MicroConfig): Micro burst (window and K).
        restriction (RestrictionSet): Macroscopic state variables.
        seed (int): Root seed.
        solver (SolverOptions): Matching options.
        adaptive (bool): Halve the macro step after infeasible extrapolations.
        min_dt (float | None): Floor of halving; the micro window when None.
        max_halvings (int): Bound on consecutive halvings.
    """

    horizon: float
    dt_macro: float
    micro: MicroConfig
    restriction: RestrictionSet
    seed: int = 0
    solver: SolverOptions = field(default_factory=SolverOptions)
    adaptive: bool = True
    min_dt: float | None = None
    max_halvings: int = 30

    def __post_init__(self) -> None:
        if self.horizon <= 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if self.micro.window > self.dt_macro:
            raise ValueError(
                f"micro window {self.micro.window} exceeds the macro step {self.dt_macro}"
            )

    @property
    def window(self) -> float:
        return self.micro.window

    @property
    def step_count(self) -> int:
        """N = min{N : N dt >= T} on the uniform mesh."""
        return max(1, math.ceil(self.horizon / self.dt_macro * (1.0 - MESH_TOL)))

    def plan(self) -> ExtrapolationPlan:
        return ExtrapolationPlan(
            self.dt_macro, self.window, self.adaptive, self.min_dt, self.max_halvings
        )


@dataclass(frozen=True)
class MacroStepRecord:
    """
    Diagnostics of one macro step.

    Attributes:
        step (int): Index n.
        t (float): Time reached at the end of the step.
        dt_used (float): Accepted macro step.
        halvings (int): Halvings before acceptance.
        status (MatchStatus): Matching status.
        iterations (int): Newton iterations.
        residual (float): Moment residual.
        lambda_norm (float): Norm of the multipliers.
        entropy (float): D(matched || burst end).
        burst (tuple[MacroState, ...]): Restrictions of the K + 1 burst ensembles.
        extrapolated (MacroState): Matched target.
        wall_time (float): Seconds spent on the step.
    """

    step: int
    t: float
    dt_used: float
    halvings: int
    status: MatchStatus
    iterations: int
    residual: float
    lambda_norm: float
    entropy: float
    burst: tuple[MacroState, ...]
    extrapolated: MacroState
    wall_time: float = 0.0

    @property
    def start(self) -> MacroState:
        return self.burst[0]

    @property
    def end(self) -> MacroState:
        return self.burst[-1]


@dataclass
class TrajectoryRecord:
    """
    Per-step records of an accelerated run and its terminal ensemble.

    Attributes:
        steps (list[MacroStepRecord]): One record per macro step.
        terminal (WeightedEnsemble): Ensemble at the end of the last step.
    """

    steps: list[MacroStepRecord]
    terminal: WeightedEnsemble

    @property
    def times(self) -> list[float]:
        return [s.t for s in self.steps]

    @property
    def final_time(self) -> float:
        return self.steps[-1].t if self.steps else 0.0

    @property
    def max_entropy(self) -> float:
        return max((s.entropy for s in self.steps), default=0.0)

    @property
    def mean_lambda_norm(self) -> float:
        if not self.steps:
            return 0.0
        return float(np.mean([s.lambda_norm for s in self.steps]))


StepObserver = Callable[[MacroStepRecord, WeightedEnsemble], None]


def increment(
    ens: WeightedEnsemble,
    model: SdeModel,
    cfg: AccelConfig,
    rng: np.random.Generator,
) -> tuple[ExtrapolationStep, tuple[MacroState, ...]]:
    """
    One macro step: burst, restrict, extrapolate, match.

    Args:
        ens (WeightedEnsemble): Ensemble at the start of the step.
        model (SdeModel): The dynamics.
        cfg (AccelConfig): Run configuration.
        rng (np.random.Generator): Stream of this macro step.

    Returns:
        tuple: The accepted extrapolation and the restrictions of the burst.
    """
    burst = propagate(ens, model, cfg.micro, rng)
    states = tuple(restrict(cfg.restriction, e) for e in burst)
    step = extrapolate_and_match(
        states[0], states[-1], burst[-1], cfg.restriction, cfg.plan(), cfg.solver
    )
    return step, states


def run_accelerated(
    cfg: AccelConfig,
    model: SdeModel,
    initial: WeightedEnsemble,
    streams: StreamFactory | None = None,
    observer: StepObserver | None = None,
) -> TrajectoryRecord:
    """
    Run the micro-macro scheme until the mesh reaches the horizon.

    Macro step n draws its normals from the stream keyed (accelerated, n).

    Args:
        cfg (AccelConfig): Run configuration.
        model (SdeModel): The dynamics.
        initial (WeightedEnsemble): Ensemble at time 0.
        streams (StreamFactory | None): Stream source; built from cfg.seed when None.
        observer (StepObserver | None): Called with every record and its matched ensemble.

    Returns:
        TrajectoryRecord: Per-step diagnostics and the terminal ensemble.

    Raises:
        StepCollapse: With `step_index` and the `partial` trajectory attached.
        MatchFailed: If an accepted matching did not converge, with the same attachments.
    """
    streams = streams or StreamFactory(cfg.seed)
    logger.info(
        f"Accelerated run of {model.label}: T={cfg.horizon} dt={cfg.dt_macro} "
        f"window={cfg.window} K={cfg.micro.steps} L={cfg.restriction.level} J={initial.size}"
    )
    records: list[MacroStepRecord] = []
    ens, t, n = initial, 0.0, 0
    while t < cfg.horizon * (1.0 - MESH_TOL):
        started = time.perf_counter()
        try:
            step, burst = increment(ens, model, cfg, streams.macro_step(n))
            if step.outcome.status is not MatchStatus.CONVERGED:
                raise MatchFailed(
                    f"Matching ended {step.outcome.status.value} at step {n}",
                    (step.outcome.status,),
                )
        except (StepCollapse, MatchFailed) as e:
            e.step_index = n
            e.partial = TrajectoryRecord(records, ens)
            logger.error(f"Accelerated run stopped at step {n}, t={t:.6g}: {e}")
            raise
        t += step.dt_used
        outcome = step.outcome
        record = MacroStepRecord(
            step=n,
            t=t,
            dt_used=step.dt_used,
            halvings=step.halvings,
            status=outcome.status,
            iterations=outcome.iterations,
            residual=outcome.residual,
            lambda_norm=outcome.lambda_norm,
            entropy=outcome.entropy,
            burst=burst,
            extrapolated=step.target,
            wall_time=time.perf_counter() - started,
        )
        records.append(record)
        ens = outcome.matched
        if observer is not None:
            observer(record, ens)
        logger.info(
            f"step={n} t={t:.6g} dt_used={step.dt_used:.4g} "
            f"|lambda|={record.lambda_norm:.3e} entropy={record.entropy:.3e}"
        )
        n += 1
    return TrajectoryRecord(records, ens)


def _fine_steps(duration: float, dt_fine: float) -> int:
    return max(1, round(duration / dt_fine))


def run_reference(
    model: SdeModel,
    initial: WeightedEnsemble,
    horizon: float,
    dt_fine: float,
    rng: np.random.Generator,
) -> WeightedEnsemble:
    """
    Plain Euler-Maruyama simulation to the horizon.

    Args:
        model (SdeModel): The dynamics.
        initial (WeightedEnsemble): Ensemble at time 0.
        horizon (float): Final time.
        dt_fine (float): Step size, which must divide the horizon.
        rng (np.random.Generator): Stream of the reference run.

    Returns:
        WeightedEnsemble: The ensemble at the horizon, weights untouched.
    """
    steps = _fine_steps(horizon, dt_fine)
    if abs(steps * dt_fine - horizon) > 1e-9 * horizon:
        raise PreconditionViolated(f"dt_fine={dt_fine} does not divide T={horizon}")
    ens = initial
    for _ in range(steps):
        ens = em_step(ens, model, dt_fine, rng)
    return ens


def run_reference_on_mesh(
    model: SdeModel,
    initial: WeightedEnsemble,
    times: Sequence[float],
    dt_fine: float,
    rng: np.random.Generator,
) -> list[WeightedEnsemble]:
    """
    Plain Euler-Maruyama simulation sampled at increasing mesh times.

    Each mesh interval is split into round(interval / dt_fine) equal steps.

    Returns:
        list[WeightedEnsemble]: One ensemble per mesh time.
    """
    snapshots = []
    ens, t = initial, 0.0
    for target in times:
        duration = target - t
        if duration <= 0:
            raise PreconditionViolated("Mesh times must be increasing and positive")
        steps = _fine_steps(duration, dt_fine)
        for _ in range(steps):
            ens = em_step(ens, model, duration / steps, rng)
        snapshots.append(ens)
        t = target
    return snapshots


def weak_error(a: WeightedEnsemble, b: WeightedEnsemble, f: Observable) -> float:
    """|E_a f - E_b f|, the largest entry for vector-valued f."""
    return float(np.max(np.abs(np.asarray(expectation(a, f)) - np.asarray(expectation(b, f)))))


@dataclass(frozen=True)
class InitialCondition:
    """
    Initial distribution of a sweep row.

    Attributes:
        kind (str): See `sample_initial`.
        mean (float): Location.
        std (float): Spread.
    """

    kind: str = "wrapped-normal"
    mean: float = 0.5
    std: float = 0.1

    def sample(self, size: int, model: SdeModel, streams: StreamFactory) -> WeightedEnsemble:
        return sample_initial(
            self.kind,
            size,
            model.space,
            streams.initial(),
            self.mean,
            self.std,
            streams.lineage(Purpose.INITIAL),
        )


class SweepAxis(enum.Enum):
    MACRO_STEP = "macro-step"
    LEVEL = "level"
    PARTICLES = "particles"


@dataclass(frozen=True)
class SweepConfig:
    """
    A convergence sweep around a base configuration.

    Attributes:
        model (SdeModel): The dynamics.
        base (AccelConfig): Configuration the axis values modify.
        family (str): Restriction family rebuilt on the level axis.
        particles (int): Ensemble size J.
        initial (InitialCondition): Initial distribution.
        window_ratio (float): window = ratio * dt on the macro-step axis.
        micro_coefficient (float): dt_micro close to c * window**2 on that axis.
        bump_center (float): Centre of the out-of-family observable.
        bump_width (float): Its width.
        bootstrap_replicates (int): Resamples of the noise estimate.
        workers (int): Rows evaluated concurrently.
    """

    model: SdeModel
    base: AccelConfig
    family: str
    particles: int
    initial: InitialCondition = field(default_factory=InitialCondition)
    window_ratio: float = 0.25
    micro_coefficient: float = 1.0
    bump_center: float = 0.5
    bump_width: float = 0.1
    bootstrap_replicates: int = 200
    workers: int = 1

    def observables(self) -> list[RestrictionFunction]:
        """Base restriction functions followed by the Gaussian bump."""
        bump = gaussian_bump(self.bump_center, self.bump_width, self.model.space)
        return list(self.base.restriction.functions) + [bump]

    def row(self, axis: SweepAxis, value: float) -> tuple[AccelConfig, int]:
        """Configuration and particle count of the row at `value`."""
        match axis:
            case SweepAxis.MACRO_STEP:
                window = self.window_ratio * value
                micro = MicroConfig.quadratic(window, self.micro_coefficient)
                return replace(self.base, dt_macro=value, micro=micro, min_dt=None), self.particles
            case SweepAxis.LEVEL:
                restriction = build_restriction(self.family, int(value), self.model.space)
                return replace(self.base, restriction=restriction), self.particles
            case SweepAxis.PARTICLES:
                return self.base, int(value)
            case _:
                raise ValueError(f"Unknown sweep axis {axis}")


@dataclass(frozen=True)
class SweepRow:
    """
    One row of a convergence sweep.

    Attributes:
        value (float): Axis value.
        errors (tuple[float, ...]): Sup-over-mesh weak error per observable.
        noise (float): Combined bootstrap standard error at the horizon.
        mean_lambda_norm (float): Mean multiplier norm over the run.
        max_entropy (float): Largest per-step matching entropy.
        steps (int): Macro steps taken.
        failed (bool): Whether the row raised.
        note (str): Failure message.
    """

    value: float
    errors: tuple[float, ...]
    noise: float
    mean_lambda_norm: float
    max_entropy: float
    steps: int
    failed: bool = False
    note: str = ""


def _sweep_row(sweep: SweepConfig, axis: SweepAxis, value: float) -> SweepRow:
    observables = sweep.observables()
    nan_errors = tuple(math.nan for _ in observables)
    try:
        cfg, particles = sweep.row(axis, value)
        streams = StreamFactory(cfg.seed)
        initial = sweep.initial.sample(particles, sweep.model, streams)
        table: list[NDArray[np.float64]] = []

        def observe(record: MacroStepRecord, ens: WeightedEnsemble) -> None:
            table.append(np.array([expectation(ens, f) for f in observables]))

        trajectory = run_accelerated(cfg, sweep.model, initial, streams, observe)
        reference = run_reference_on_mesh(
            sweep.model, initial, trajectory.times, cfg.micro.dt_micro, streams.reference()
        )
        ref_table = np.array([[expectation(e, f) for f in observables] for e in reference])
        errors = np.max(np.abs(np.array(table) - ref_table), axis=0)
        rng = streams.bootstrap()
        noise = max(
            math.hypot(
                bootstrap_standard_error(trajectory.terminal, f, rng, sweep.bootstrap_replicates),
                bootstrap_standard_error(reference[-1], f, rng, sweep.bootstrap_replicates),
            )
            for f in observables
        )
    except (MicroMacroError, ValueError) as e:
        logger.warning(f"Sweep row {axis.value}={value} failed: {e}")
        return SweepRow(value, nan_errors, math.nan, math.nan, math.nan, 0, True, str(e))
    logger.info(
        f"Sweep row {axis.value}={value}: errors={np.array2string(errors, precision=3)} "
        f"noise={noise:.3e}"
    )
    return SweepRow(
        value,
        tuple(float(e) for e in errors),
        float(noise),
        trajectory.mean_lambda_norm,
        trajectory.max_entropy,
        len(trajectory.steps),
    )


def convergence_sweep(sweep: SweepConfig, axis: SweepAxis, values: Sequence[float]) -> list[SweepRow]:
    """
    Accelerated and reference runs for every axis value.

    Rows share the seed policy of the base configuration and are independent; with
    more than one worker they run on a thread pool and are returned in input order.
    Failing rows are marked instead of aborting the sweep.

    Args:
        sweep (SweepConfig): Base configuration and observables.
        axis (SweepAxis): The swept parameter.
        values (Sequence[float]): Axis values.

    Returns:
        list[SweepRow]: One row per value.
    """
    if not values:
        raise PreconditionViolated("A sweep needs at least one value")
    logger.info(f"Sweeping {axis.value} over {list(values)}")
    if sweep.workers > 1:
        with multiprocessing.pool.ThreadPool(processes=sweep.workers) as pool:
            return pool.starmap(_sweep_row, [(sweep, axis, v) for v in values])
    return [_sweep_row(sweep, axis, v) for v in values]


def perturbed_prior(
    ens: WeightedEnsemble, direction: NDArray[np.float64], eps: float
) -> WeightedEnsemble:
    """
    Move the weights towards `direction` until the total variation distance is eps.

    Args:
        ens (WeightedEnsemble): Unperturbed prior.
        direction (NDArray): Probability vector on the same particles.
        eps (float): Requested total variation distance.

    Returns:
        WeightedEnsemble: The perturbed prior.
    """
    direction = np.asarray(direction, dtype=np.float64)
    direction = direction / direction.sum()
    reach = float(np.sum(np.abs(direction - ens.weights)))
    if eps > reach:
        raise ValueError(f"eps={eps} exceeds the reachable distance {reach}")
    return ens.reweighted(ens.weights + (eps / reach) * (direction - ens.weights))


@dataclass(frozen=True)
class LipschitzEstimate:
    """
    Stability of one accelerated step on two priors.

    Attributes:
        tv_in (float): Distance between the priors.
        tv_out (float): Distance between the outputs.
        dt_used (float): Macro step taken.
        constant (float): C with tv_out = (1 + C dt) tv_in.
    """

    tv_in: float
    tv_out: float
    dt_used: float

    @property
    def constant(self) -> float:
        return (self.tv_out / self.tv_in - 1.0) / self.dt_used


def lipschitz_probe(
    prior: WeightedEnsemble,
    perturbed: WeightedEnsemble,
    model: SdeModel,
    cfg: AccelConfig,
    streams: StreamFactory,
    index: int = 0,
) -> LipschitzEstimate:
    """
    Apply one accelerated step to two priors with common random numbers.

    Both outputs are taken at the same macro step: when step halving leaves the two
    runs at different steps, both are rerun from the smaller one until they agree.

    Args:
        prior (WeightedEnsemble): First prior.
        perturbed (WeightedEnsemble): Second prior on the same particles.
        model (SdeModel): The dynamics.
        cfg (AccelConfig): Step configuration.
        streams (StreamFactory): Source of the shared probe stream.
        index (int): Probe stream index.

    Returns:
        LipschitzEstimate: Input and output distances.
    """
    if not prior.shares_positions(perturbed):
        raise PreconditionViolated("Both priors must live on the same particles")
    while True:
        first, _ = increment(prior, model, cfg, streams.stream(Purpose.PROBE, index))
        second, _ = increment(perturbed, model, cfg, streams.stream(Purpose.PROBE, index))
        if first.dt_used == second.dt_used:
            break
        common = min(first.dt_used, second.dt_used)
        logger.info(
            f"Steps differ ({first.dt_used:.6e} and {second.dt_used:.6e}), rerunning both at {common:.6e}"
        )
        cfg = replace(cfg, dt_macro=common)
    if not (first.outcome.converged and second.outcome.converged):
        raise MatchFailed(
            "Probe matchings did not converge", (first.outcome.status, second.outcome.status)
        )
    return LipschitzEstimate(
        total_variation(prior, perturbed),
        total_variation(first.outcome.matched, second.outcome.matched),
        first.dt_used,
    )
