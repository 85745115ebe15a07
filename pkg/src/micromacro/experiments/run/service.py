import logging
from pathlib import Path

from injector import inject, singleton

from ...components import EnsembleComponent, ModelComponent, OutputComponent, RestrictionComponent
from ...core.accel import AccelConfig, TrajectoryRecord, run_accelerated
from ...core.micro import MicroConfig
from ...core.restriction import RestrictionSet
from ...errors import MatchFailed, StepCollapse
from ...settings import Settings

logger = logging.getLogger(__name__)


def build_accel_config(settings: Settings, restriction: RestrictionSet) -> AccelConfig:
    """
    Translate validated settings into the configuration of an accelerated run.

    Args:
        settings (Settings): The experiment settings.
        restriction (RestrictionSet): The restriction functions.

    Returns:
        AccelConfig: The run configuration.
    """
    return AccelConfig(
        horizon=settings.macro.horizon,
        dt_macro=settings.macro.dt,
        micro=MicroConfig(settings.micro.window, settings.micro.k),
        restriction=restriction,
        seed=settings.ensemble.seed,
        solver=settings.solver,
        adaptive=settings.adaptive.enabled,
        min_dt=settings.adaptive.min_dt,
        max_halvings=settings.adaptive.max_halvings,
    )


@singleton
class RunService:
    """
    Single accelerated run: trajectory table and terminal ensemble.

    Args:
        settings (Settings): The experiment settings.
        model_component (ModelComponent): The SDE model.
        restriction_component (RestrictionComponent): The restriction functions.
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
        self.model = model_component.model
        self.restriction = restriction_component.restriction
        self.ensemble_component = ensemble_component
        self.output = output_component
        self.config = build_accel_config(settings, self.restriction)

    def run(self) -> TrajectoryRecord:
        """
        Run and persist the trajectory and the terminal ensemble.

        A run that stops early persists its partial trajectory before re-raising.

        Returns:
            TrajectoryRecord: The full trajectory.
        """
        initial = self.ensemble_component.initial()
        try:
            trajectory = run_accelerated(
                self.config, self.model, initial, self.ensemble_component.streams
            )
        except (StepCollapse, MatchFailed) as e:
            if e.partial is not None:
                self._persist(e.partial)
            raise
        self._persist(trajectory)
        return trajectory

    def _persist(self, trajectory: TrajectoryRecord) -> list[Path]:
        return [
            self.output.write_trajectory(trajectory, self.restriction.level),
            self.output.write_ensemble(trajectory.terminal),
        ]
