import math
from pathlib import Path
from typing import Literal

import yaml
from pydantic import BaseModel, Field, ValidationError, model_validator

from .._paths import default_output_path
from ..core.matching import SolverOptions
from ..errors import ConfigurationError
from .settings_loader import load_experiment_settings


class ModelSettings(BaseModel):
    """
    Selection of the SDE model.

    Attributes:
        label (str): Registered model label.
        theta (float): Mean-reversion rate, used by the Ornstein-Uhlenbeck model.
        sigma (float): Noise amplitude, used by the Ornstein-Uhlenbeck model.
    """

    label: Literal[
        "pure-diffusion",
        "pure-diffusion-line",
        "ornstein-uhlenbeck",
        "periodic-drift",
        "zero",
    ] = Field(description="Registered model label")
    theta: float = Field(default=1.0, gt=0, description="OU mean-reversion rate")
    sigma: float = Field(default=math.sqrt(2.0), ge=0, description="OU noise amplitude")


class MicroSettings(BaseModel):
    """
    Microscopic burst of Euler-Maruyama steps.

    Attributes:
        window (float): Duration of the burst.
        k (int): Number of Euler-Maruyama steps in the burst.
    """

    window: float = Field(gt=0, description="Micro window (burst duration)")
    k: int = Field(ge=1, description="Number of Euler-Maruyama steps per burst")


class MacroSettings(BaseModel):
    """
    Macroscopic extrapolation mesh.

    Attributes:
        dt (float): Extrapolation step.
        horizon (float): Final time of the simulation.
    """

    dt: float = Field(gt=0, description="Macroscopic extrapolation step")
    horizon: float = Field(gt=0, description="Final time")


class RestrictionSettings(BaseModel):
    """
    Restriction functions tracked as macroscopic state.

    Attributes:
        family (str): Built-in restriction family.
        level (int): Number of restriction functions.
    """

    family: Literal["trigonometric", "scaled-power"] = Field(
        description="Built-in restriction family"
    )
    level: int = Field(ge=1, description="Number of restriction functions")


class InitialSettings(BaseModel):
    """
    Initial distribution sampled into the starting ensemble.

    Attributes:
        kind (str): Distribution family.
        mean (float): Location (also the point of a `point` initial condition).
        std (float): Spread of the normal and wrapped-normal kinds.
    """

    kind: Literal["uniform", "wrapped-normal", "normal", "point"] = Field(
        "wrapped-normal"
    )
    mean: float = Field(0.5)
    std: float = Field(0.1, gt=0)


class EnsembleSettings(BaseModel):
    """
    Particle ensemble.

    Attributes:
        j (int): Number of particles.
        seed (int): Root seed of every random stream of a run.
        initial (InitialSettings): Initial distribution.
    """

    j: int = Field(ge=2, description="Number of particles")
    seed: int = Field(ge=0, description="Root seed")
    initial: InitialSettings = Field(default_factory=InitialSettings)


class AdaptiveSettings(BaseModel):
    """
    Step halving after infeasible extrapolations.

    Attributes:
        enabled (bool): Whether infeasible matchings trigger halving of the macro step.
        min_dt (float | None): Smallest admissible macro step; defaults to the micro window.
        max_halvings (int): Upper bound on consecutive halvings.
    """

    enabled: bool = Field(True)
    min_dt: float | None = Field(None, gt=0)
    max_halvings: int = Field(30, ge=0)


class SweepSettings(BaseModel):
    """
    Convergence sweeps.

    Attributes:
        window_ratio (float): Micro window as a fraction of the macro step on the macro-step axis.
        micro_coefficient (float): c in dt_micro = c * window**2 on the macro-step axis.
        bump_center (float): Centre of the out-of-family Gaussian bump observable.
        bump_width (float): Width of the bump observable.
        bootstrap_replicates (int): Resamples used for the Monte Carlo noise column.
        workers (int): Rows evaluated concurrently.
    """

    window_ratio: float = Field(0.25, gt=0, le=1)
    micro_coefficient: float = Field(1.0, gt=0)
    bump_center: float = Field(0.5)
    bump_width: float = Field(0.1, gt=0)
    bootstrap_replicates: int = Field(200, ge=2)
    workers: int = Field(1, ge=1)


class OracleSettings(BaseModel):
    """
    Grid oracle on the one-dimensional torus.

    Attributes:
        grid_m (int): Number of grid cells.
        circumference (float | None): Circumference of the wide torus that stands in for
            the real line in Gaussian probes; 40 sqrt(sigma0 + 2 max dt) when unset.
        start_time (float): Time the initial density is evolved to before probing.
        dt_min (float): Smallest step of the geometric probe ladder.
        dt_ratio (float): Ratio of the probe ladder.
        dt_count (int): Number of ladder entries.
        dt_list (list[float] | None): Explicit ladder, overrides the geometric one.
        dtau_ratio (float | None): Micro window as a fraction of the step for the
            extrapolated local-error variant.
        sigma0 (float): Initial variance of the widening Gaussian.
        cfl_safety (float): Fraction of the CFL bound used for sub-stepping.
    """

    grid_m: int = Field(512, ge=16)
    circumference: float | None = Field(None, gt=0)
    start_time: float = Field(0.1, ge=0)
    dt_min: float = Field(1.0e-3, gt=0)
    dt_ratio: float = Field(2.0, gt=1)
    dt_count: int = Field(6, ge=2)
    dt_list: list[float] | None = Field(None)
    dtau_ratio: float | None = Field(None, gt=0, le=1)
    sigma0: float = Field(1.0, gt=0)
    cfl_safety: float = Field(0.9, gt=0, le=1)

    def ladder(self) -> list[float]:
        """
        Time steps probed by the oracle.

        Returns:
            The explicit `dt_list` or the geometric ladder dt_min * dt_ratio**i.
        """
        if self.dt_list:
            return sorted(self.dt_list)
        return [self.dt_min * self.dt_ratio**i for i in range(self.dt_count)]


class CandidateSettings(BaseModel):
    """
    Candidate restriction function for greedy moment selection.

    Attributes:
        name (str | None): Display name; derived from kind and order when omitted.
        kind (str): Function family.
        order (int): Frequency (sin/cos) or power.
        center (float): Bump centre.
        width (float): Bump width.
    """

    name: str | None = Field(None)
    kind: Literal["sin", "cos", "power", "bump"]
    order: int = Field(1, ge=1)
    center: float = Field(0.5)
    width: float = Field(0.1, gt=0)


class MomentGainSettings(BaseModel):
    """
    Greedy moment selection at a trajectory snapshot.

    Attributes:
        snapshot_step (int): Macro steps simulated before the snapshot is taken.
        candidates (list[CandidateSettings]): Candidate pool.
    """

    snapshot_step: int = Field(0, ge=0)
    candidates: list[CandidateSettings] = Field(default_factory=list)


class OutputSettings(BaseModel):
    """
    Location and naming of produced files.

    Attributes:
        directory (Path): Output directory.
        prefix (str): File name prefix.
    """

    directory: Path = Field(default_factory=default_output_path)
    prefix: str = Field("run", min_length=1)


class Settings(BaseModel):
    """
    Represents the settings of one experiment.

    Attributes:
        model (ModelSettings): The SDE model.
        micro (MicroSettings): The micro burst.
        macro (MacroSettings): The macro mesh.
        restriction (RestrictionSettings): The macroscopic state variables.
        ensemble (EnsembleSettings): The particle ensemble.
        solver (SolverOptions): The matching solver options.
        adaptive (AdaptiveSettings): The step-halving control.
        sweep (SweepSettings): The convergence sweep options.
        oracle (OracleSettings): The grid oracle options.
        moment_gain (MomentGainSettings): The greedy moment selection options.
        output (OutputSettings): The output options.
    """

    model: ModelSettings
    micro: MicroSettings
    macro: MacroSettings
    restriction: RestrictionSettings
    ensemble: EnsembleSettings
    solver: SolverOptions = Field(default_factory=SolverOptions)
    adaptive: AdaptiveSettings = Field(default_factory=AdaptiveSettings)
    sweep: SweepSettings = Field(default_factory=SweepSettings)
    oracle: OracleSettings = Field(default_factory=OracleSettings)
    moment_gain: MomentGainSettings = Field(default_factory=MomentGainSettings)
    output: OutputSettings = Field(default_factory=OutputSettings)

    @model_validator(mode="after")
    def _window_within_step(self) -> "Settings":
        if self.micro.window > self.macro.dt:
            raise ValueError(
                f"micro.window={self.micro.window} exceeds macro.dt={self.macro.dt}"
            )
        return self


def load_settings(config_path: Path | str) -> Settings:
    """
    Load and validate the settings of one experiment.

    Args:
        config_path: Path of the experiment configuration.

    Returns:
        The validated settings.

    Raises:
        ConfigurationError: If the file cannot be read, or a key is missing or has an
            invalid value. The message names the dotted key.
    """
    try:
        raw = load_experiment_settings(config_path)
    except (OSError, yaml.YAMLError, ValueError) as e:
        raise ConfigurationError(f"Cannot read configuration {config_path}: {e}") from e
    try:
        return Settings(**raw)
    except ValidationError as e:
        raise ConfigurationError(_describe(e)) from e


def _describe(error: ValidationError) -> str:
    problems = []
    for item in error.errors():
        key = ".".join(str(part) for part in item["loc"])
        if item["type"] == "missing":
            problems.append(f"missing required key {key}")
        else:
            problems.append(f"{key or 'settings'}: {item['msg']}")
    return "; ".join(problems)
