import logging

from injector import inject, singleton

from ...components import EnsembleComponent, ModelComponent, OutputComponent, RestrictionComponent
from ...core.accel import increment
from ...core.ensemble import expectation
from ...core.extrapolation import extrapolate
from ...core.matching import best_candidate, candidate_gains
from ...core.micro import propagate
from ...core.restriction import restrict
from ...errors import AllInfeasible, ConfigurationError, MatchFailed
from ...settings import Settings
from ..run.service import build_accel_config

logger = logging.getLogger(__name__)


@singleton
class MomentGainService:
    """
    Greedy choice of the next macroscopic state variable at a trajectory snapshot.

    The snapshot is the ensemble after `moment_gain.snapshot_step` accelerated steps.
    From there one micro burst is simulated; its last ensemble is the prior, and the
    targets of the current and candidate moments are their coarse forward Euler
    extrapolations over the macro step.

    Args:
        settings (Settings): The experiment settings.
        model_component (ModelComponent): The SDE model.
        restriction_component (RestrictionComponent): Current restriction and candidate pool.
        ensemble_component (EnsembleComponent): Streams and initial ensemble.
        output_component (OutputComponent): CSV writer.
    """

    @inject
    def __init__(
        self,
        settings: Settings,
        model_component: ModelComponent,
        restriction_component: RestrictionComponent,
        ensemble_component: EnsembleComponent,
        output_component: OutputComponent,
    ) -> None:
        self.snapshot_step = settings.moment_gain.snapshot_step
        self.model = model_component.model
        self.restriction = restriction_component.restriction
        self.candidates = restriction_component.candidates()
        self.ensemble_component = ensemble_component
        self.output = output_component
        self.config = build_accel_config(settings, self.restriction)

    def select(self) -> tuple[int, list[float]]:
        """
        Evaluate the candidate pool and persist the gain table.

        Returns:
            tuple[int, list[float]]: Selected index and the gain of every candidate.

        Raises:
            ConfigurationError: If the pool is empty.
            AllInfeasible: If no candidate admits a feasible matching.
        """
        if not self.candidates:
            raise ConfigurationError("missing required key moment_gain.candidates")
        streams = self.ensemble_component.streams
        ens = self.ensemble_component.initial()
        for n in range(self.snapshot_step):
            step, _ = increment(ens, self.model, self.config, streams.macro_step(n))
            if not step.outcome.converged:
                raise MatchFailed(f"Matching failed before the snapshot at step {n}", (step.outcome.status,))
            ens = step.outcome.matched
        burst = propagate(ens, self.model, self.config.micro, streams.macro_step(self.snapshot_step))
        start, prior = burst[0], burst[-1]
        window, dt = self.config.window, self.config.dt_macro
        m = extrapolate(restrict(self.restriction, start), restrict(self.restriction, prior), window, dt)
        targets = []
        for c in self.candidates:
            e0, e1 = expectation(start, c), expectation(prior, c)
            targets.append(e0 + (dt / window) * (e1 - e0))
        gains = candidate_gains(prior, self.restriction, m, self.candidates, targets, self.config.solver)
        names = [c.name for c in self.candidates]
        try:
            selected = best_candidate(gains)
        except AllInfeasible:
            self.output.write_gains(names, targets, gains, -1)
            raise
        logger.info(f"Selected candidate {selected} ({names[selected]}) with gain {gains[selected]:.6e}")
        self.output.write_gains(names, targets, gains, selected)
        return selected, gains
