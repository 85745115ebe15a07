import logging
from typing import Sequence

from injector import inject, singleton

from ...components import ModelComponent, OutputComponent, RestrictionComponent
from ...core.accel import InitialCondition, SweepAxis, SweepConfig, SweepRow, convergence_sweep
from ...errors import SweepFailed
from ...settings import Settings
from ..run.service import build_accel_config

logger = logging.getLogger(__name__)


def parse_axis(axis: str) -> SweepAxis:
    try:
        return SweepAxis(axis)
    except ValueError:
        raise ValueError(f"Unknown sweep axis {axis}") from None


@singleton
class SweepService:
    """
    Convergence sweeps along one axis of the configuration.

    Args:
        settings (Settings): The experiment settings.
        model_component (ModelComponent): The SDE model.
        restriction_component (RestrictionComponent): The base restriction functions.
        output_component (OutputComponent): CSV writer.
    """

    @inject
    def __init__(
        self,
        settings: Settings,
        model_component: ModelComponent,
        restriction_component: RestrictionComponent,
        output_component: OutputComponent,
    ) -> None:
        cfg = settings.sweep
        initial = settings.ensemble.initial
        self.output = output_component
        self.config = SweepConfig(
            model=model_component.model,
            base=build_accel_config(settings, restriction_component.restriction),
            family=settings.restriction.family,
            particles=settings.ensemble.j,
            initial=InitialCondition(initial.kind, initial.mean, initial.std),
            window_ratio=cfg.window_ratio,
            micro_coefficient=cfg.micro_coefficient,
            bump_center=cfg.bump_center,
            bump_width=cfg.bump_width,
            bootstrap_replicates=cfg.bootstrap_replicates,
            workers=cfg.workers,
        )

    def sweep(self, axis: str, values: Sequence[float]) -> list[SweepRow]:
        """
        Run the sweep and persist one CSV row per value.

        Args:
            axis (str): `macro-step`, `level` or `particles`.
            values (Sequence[float]): Axis values.

        Returns:
            list[SweepRow]: The rows; failed rows are flagged, not raised.

        Raises:
            SweepFailed: If every row failed.
        """
        sweep_axis = parse_axis(axis)
        rows = convergence_sweep(self.config, sweep_axis, values)
        names = [f.name for f in self.config.observables()]
        self.output.write_sweep(sweep_axis.value, rows, names)
        if all(r.failed for r in rows):
            raise SweepFailed(f"Every row of the {axis} sweep failed")
        return rows
