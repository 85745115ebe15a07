"""Command line front-end: run, sweep, oracle and moment-gain experiments."""

import argparse
import logging
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

from injector import Injector

from . import __version__
from ._paths import default_output_path
from .components import OutputComponent
from .di import create_application_injector
from .errors import ConfigurationError, MicroMacroError, StepCollapse
from .experiments import MomentGainService, OracleService, RunManifest, RunService, SweepService
from .settings import Settings, load_settings

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FAILED = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="micromacro",
        description="Micro-macro acceleration of SDE ensembles with entropy-based matching.",
    )
    parser.add_argument("--log-level", default=None, help="Root log level, e.g. DEBUG.")
    parser.add_argument(
        "--output-dir",
        type=Path,
        default=None,
        help="Output directory; overrides MICROMACRO_OUTPUT_DIR and output.directory.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="Single accelerated run.")
    run.add_argument("config", type=Path)

    sweep = commands.add_parser("sweep", help="Convergence sweep along one axis.")
    sweep.add_argument("config", type=Path)
    sweep.add_argument("--axis", required=True, help="macro-step, level or particles.")
    sweep.add_argument("--values", required=True, help="Comma separated axis values.")

    oracle = commands.add_parser("oracle", help="Grid oracle probe.")
    oracle.add_argument("config", type=Path)
    oracle.add_argument(
        "--probe",
        required=True,
        help="entropy-expansion, matched-expansion, local-error or widening-gaussian.",
    )

    gain = commands.add_parser("moment-gain", help="Greedy moment selection at a snapshot.")
    gain.add_argument("config", type=Path)
    return parser


def parse_values(text: str) -> list[float]:
    """
    Parse the comma separated `--values` list.

    Raises:
        ConfigurationError: If the list is empty or holds a non-number.
    """
    try:
        values = [float(item) for item in text.split(",") if item.strip()]
    except ValueError as e:
        raise ConfigurationError(f"--values must hold numbers: {e}") from e
    if not values:
        raise ConfigurationError("--values is empty")
    return values


def _with_output_dir(settings: Settings, directory: Path | None) -> Settings:
    if directory is None:
        return settings
    output = settings.output.model_copy(update={"directory": directory})
    return settings.model_copy(update={"output": output})


def _dispatch(args: argparse.Namespace, injector: Injector) -> None:
    match args.command:
        case "run":
            injector.get(RunService).run()
        case "sweep":
            injector.get(SweepService).sweep(args.axis, parse_values(args.values))
        case "oracle":
            injector.get(OracleService).probe(args.probe)
        case "moment-gain":
            injector.get(MomentGainService).select()
        case _:
            raise ValueError(f"Unknown command {args.command}")


def _failure_note(error: Exception) -> str:
    note = f"{type(error).__name__}: {error}"
    step = getattr(error, "step_index", None)
    return note if step is None else f"{note} (macro step {step})"


def main(argv: Sequence[str] | None = None) -> int:
    """
    Entry point of the `micromacro` command.

    Exit status is 0 on success, 2 on configuration or usage errors and 3 when the
    numerics fail (step collapse, failed matching, infeasible candidate pool, failed
    sweep). The manifest is written in every case.

    Args:
        argv (Sequence[str] | None): Arguments; `sys.argv[1:]` when None.

    Returns:
        int: The exit status.
    """
    args = build_parser().parse_args(argv)
    if args.log_level:
        logging.getLogger().setLevel(args.log_level.upper())

    started = time.perf_counter()
    manifest = RunManifest(
        command=args.command,
        config_path=str(args.config),
        version=__version__,
        started_at=datetime.now(timezone.utc),
    )
    directory: Path = args.output_dir or default_output_path()
    prefix = "run"
    output: OutputComponent | None = None
    try:
        settings = _with_output_dir(load_settings(args.config), args.output_dir)
        manifest.config = settings.model_dump(mode="json")
        manifest.seed = settings.ensemble.seed
        directory, prefix = settings.output.directory, settings.output.prefix
        injector = create_application_injector(settings)
        output = injector.get(OutputComponent)
        _dispatch(args, injector)
    except ValueError as e:
        logger.error(f"Configuration error: {e}")
        manifest.failures.append(_failure_note(e))
        manifest.exit_status = EXIT_CONFIG
    except MicroMacroError as e:
        if isinstance(e, StepCollapse):
            logger.error(f"Step collapse at dt={e.dt:.6e}")
        logger.error(f"Run failed: {e}")
        manifest.failures.append(_failure_note(e))
        manifest.exit_status = EXIT_FAILED
    finally:
        if output is not None:
            manifest.outputs = [str(p) for p in output.written]
        manifest.finished_at = datetime.now(timezone.utc)
        manifest.wall_time = time.perf_counter() - started
        path = Path(directory) / f"{prefix}-manifest.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(manifest.model_dump_json(indent=2))
        logger.info(f"Wrote {path}")
    return manifest.exit_status
