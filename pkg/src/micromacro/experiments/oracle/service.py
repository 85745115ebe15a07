import logging

import numpy as np
from injector import inject, singleton

from ...components import ModelComponent, OutputComponent
from ...core.grid import GridDensity, fp_evolve
from ...core.oracle_grid import (
    ProbeResult,
    entropy_expansion_probe,
    gaussian_on_wide_torus,
    local_error_probe,
    matched_expansion_probe,
    wide_torus_circumference,
    widening_gaussian_probe,
)
from ...core.restriction import RestrictionSet, build_restriction
from ...core.space_model import (
    WideningGaussianRef,
    require_unit_torus,
    widening_gaussian_entropy,
)
from ...settings import Settings

logger = logging.getLogger(__name__)

PROBES = ("entropy-expansion", "matched-expansion", "local-error", "widening-gaussian")


def wrapped_normal(mean: float, std: float, images: int = 5):
    def density(x: np.ndarray) -> np.ndarray:
        shifts = np.arange(-images, images + 1)[:, None]
        return np.exp(-((x[None, :] - mean + shifts) ** 2) / (2.0 * std**2)).sum(axis=0)

    return density


@singleton
class OracleService:
    """
    Grid oracle probes of the entropy expansions and the local error.

    Args:
        settings (Settings): The experiment settings.
        model_component (ModelComponent): The SDE model.
        output_component (OutputComponent): CSV writer.
    """

    @inject
    def __init__(
        self,
        settings: Settings,
        model_component: ModelComponent,
        output_component: OutputComponent,
    ) -> None:
        self.settings = settings
        self.cfg = settings.oracle
        self.model = model_component.model
        self.output = output_component

    def restriction(self) -> RestrictionSet:
        cfg = self.settings.restriction
        return build_restriction(cfg.family, cfg.level, self.model.space)

    def initial_density(self) -> GridDensity:
        """
        Initial distribution on the unit torus grid, evolved to `oracle.start_time`.

        Returns:
            GridDensity: The density the probes start from.
        """
        require_unit_torus(self.model.space, "The grid oracle")
        initial = self.settings.ensemble.initial
        match initial.kind:
            case "uniform":
                p = GridDensity.uniform(self.cfg.grid_m)
            case "wrapped-normal" | "normal":
                p = GridDensity.from_function(
                    wrapped_normal(initial.mean, initial.std), self.cfg.grid_m
                )
            case _:
                raise ValueError(f"The grid oracle cannot start from a {initial.kind} distribution")
        logger.info(f"Evolving the initial density to t={self.cfg.start_time}")
        return fp_evolve(p, self.model, self.cfg.start_time, self.cfg.cfl_safety)

    def _gaussian_expansion(self, ladder: list[float]) -> ProbeResult:
        sigma0 = self.cfg.sigma0
        length = self.cfg.circumference or wide_torus_circumference(sigma0, max(ladder))
        p = gaussian_on_wide_torus(WideningGaussianRef(sigma0), 0.0, self.cfg.grid_m, length)
        return entropy_expansion_probe(
            p,
            self.model,
            ladder,
            lambda dt: widening_gaussian_entropy(sigma0, dt),
            self.cfg.cfl_safety,
        )

    def probe(self, name: str) -> ProbeResult:
        """
        Run one probe and persist its table.

        Args:
            name (str): One of `entropy-expansion`, `matched-expansion`, `local-error`,
                `widening-gaussian`.

        Returns:
            ProbeResult: The probe ladder and its fits.

        Raises:
            ValueError: If the probe is unknown.
        """
        ladder = self.cfg.ladder()
        solver = self.settings.solver
        logger.info(f"Running probe {name} over dt={ladder}")
        match name:
            case "widening-gaussian":
                result = widening_gaussian_probe(
                    self.cfg.sigma0, ladder, self.cfg.grid_m, self.cfg.circumference
                )
            case "entropy-expansion" if self.model.label.startswith("pure-diffusion"):
                result = self._gaussian_expansion(ladder)
            case "entropy-expansion":
                result = entropy_expansion_probe(
                    self.initial_density(), self.model, ladder, safety=self.cfg.cfl_safety
                )
            case "matched-expansion":
                result = matched_expansion_probe(
                    self.initial_density(),
                    self.model,
                    self.restriction(),
                    ladder,
                    solver,
                    self.cfg.cfl_safety,
                )
            case "local-error":
                result = local_error_probe(
                    self.initial_density(),
                    self.model,
                    self.restriction(),
                    ladder,
                    solver,
                    self.cfg.dtau_ratio,
                    self.cfg.cfl_safety,
                )
            case _:
                raise ValueError(f"Unknown probe {name}")
        self.output.write_probe(result)
        return result
