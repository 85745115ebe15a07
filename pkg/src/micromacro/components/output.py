import csv
import enum
import logging
from pathlib import Path
from typing import Any, Iterable, Sequence

from injector import inject, singleton

from ..core.accel import SweepRow, TrajectoryRecord
from ..core.ensemble import WeightedEnsemble, save_ensemble_csv
from ..core.oracle_grid import ProbeResult
from ..settings import Settings

logger = logging.getLogger(__name__)


def format_value(value: Any) -> str:
    """17 significant digits for floats, plain text otherwise."""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return f"{value:.16e}"
    if isinstance(value, enum.Enum):
        return str(value.value)
    return str(value)


def trajectory_header(level: int) -> list[str]:
    moments = [
        f"{name}_{i}" for name in ("m0", "mK", "m_ext") for i in range(1, level + 1)
    ]
    return [
        "step",
        "t",
        "dt_used",
        "halvings",
        "status",
        "iterations",
        "residual",
        "lambda_norm",
        "entropy",
    ] + moments


@singleton
class OutputComponent:
    """
    Component that writes the CSV tables of an experiment.

    Every written path is remembered in `written`, in order.

    Args:
        settings (Settings): The experiment settings.
    """

    @inject
    def __init__(self, settings: Settings) -> None:
        self.directory = Path(settings.output.directory)
        self.prefix = settings.output.prefix
        self.written: list[Path] = []

    def path(self, suffix: str) -> Path:
        return self.directory / f"{self.prefix}-{suffix}"

    def _write_rows(self, suffix: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        self.directory.mkdir(parents=True, exist_ok=True)
        path = self.path(suffix)
        with path.open("w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            writer.writerows([format_value(v) for v in row] for row in rows)
        self.written.append(path)
        logger.info(f"Wrote {path}")
        return path

    def write_trajectory(self, trajectory: TrajectoryRecord, level: int) -> Path:
        """One row per macro step; wall times stay out of the file."""
        rows = (
            [
                s.step,
                s.t,
                s.dt_used,
                s.halvings,
                s.status,
                s.iterations,
                s.residual,
                s.lambda_norm,
                s.entropy,
                *(float(v) for v in s.start.m),
                *(float(v) for v in s.end.m),
                *(float(v) for v in s.extrapolated.m),
            ]
            for s in trajectory.steps
        )
        return self._write_rows("trajectory.csv", trajectory_header(level), rows)

    def write_ensemble(self, ens: WeightedEnsemble) -> Path:
        self.directory.mkdir(parents=True, exist_ok=True)
        path = save_ensemble_csv(ens, self.path("ensemble.csv"))
        self.written.append(path)
        logger.info(f"Wrote {path}")
        return path

    def write_sweep(self, axis: str, rows: Sequence[SweepRow], observables: Sequence[str]) -> Path:
        header = (
            ["value"]
            + [f"error_{name}" for name in observables]
            + ["noise", "mean_lambda_norm", "max_entropy", "steps", "failed", "note"]
        )
        table = (
            [
                float(r.value),
                *r.errors,
                r.noise,
                r.mean_lambda_norm,
                r.max_entropy,
                r.steps,
                r.failed,
                r.note,
            ]
            for r in rows
        )
        return self._write_rows(f"sweep-{axis}.csv", header, table)

    def write_probe(self, result: ProbeResult) -> Path:
        """Probe ladder with the fitted slope, limit and expected limit repeated per row."""
        header = ["dt", "entropy", "tv", "ratio", "closed_form", "slope", "limit", "expected_limit"]
        rows = (
            [
                r.dt,
                r.entropy,
                r.tv,
                r.ratio,
                r.closed_form,
                result.slope.slope,
                result.limit.limit,
                result.expected_limit,
            ]
            for r in result.rows
        )
        return self._write_rows(f"oracle-{result.probe}.csv", header, rows)

    def write_gains(
        self, names: Sequence[str], targets: Sequence[float], gains: Sequence[float], selected: int
    ) -> Path:
        rows = (
            [i, name, float(target), float(gain), i == selected]
            for i, (name, target, gain) in enumerate(zip(names, targets, gains))
        )
        return self._write_rows(
            "moment-gain.csv", ["index", "candidate", "target", "gain", "selected"], rows
        )

