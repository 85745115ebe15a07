"""Euler-Maruyama bursts of the microscopic dynamics."""

import logging
import math
from dataclasses import dataclass

import numpy as np

from .ensemble import WeightedEnsemble
from .space_model import SdeModel

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MicroConfig:
    """
    A burst of `steps` Euler-Maruyama steps over `window`.

    Attributes:
        window (float): Burst duration, window = steps * dt_micro.
        steps (int): Number of steps K.
    """

    window: float
    steps: int

    def __post_init__(self) -> None:
        if self.window <= 0:
            raise ValueError(f"window must be positive, got {self.window}")
        if self.steps < 1:
            raise ValueError(f"steps must be at least 1, got {self.steps}")

    @property
    def dt_micro(self) -> float:
        return self.window / self.steps

    @classmethod
    def quadratic(cls, window: float, coefficient: float = 1.0) -> "MicroConfig":
        """
        Choose K so that dt_micro is close to coefficient * window**2.

        Args:
            window (float): Burst duration.
            coefficient (float): Proportionality constant c.

        Returns:
            MicroConfig: The burst with K = max(1, round(1 / (c * window))).
        """
        steps = max(1, round(1.0 / (coefficient * window)))
        return cls(window, steps)


def em_step(
    ens: WeightedEnsemble, model: SdeModel, dt: float, rng: np.random.Generator
) -> WeightedEnsemble:
    """
    One Euler-Maruyama step x <- x + a(x) dt + b(x) sqrt(dt) xi for every particle.

    Args:
        ens (WeightedEnsemble): Current ensemble.
        model (SdeModel): The dynamics.
        dt (float): Step size, > 0.
        rng (np.random.Generator): Stream providing one (J, m) block of normals.

    Returns:
        WeightedEnsemble: Moved particles with unchanged weights.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    x = ens.positions
    xi = rng.standard_normal((ens.size, model.noise_channels))
    noise = np.einsum("jdm,jm->jd", model.diffusion(x), xi)
    return ens.moved(x + model.drift(x) * dt + noise * math.sqrt(dt))


def propagate(
    ens: WeightedEnsemble,
    model: SdeModel,
    cfg: MicroConfig,
    rng: np.random.Generator,
) -> list[WeightedEnsemble]:
    """
    Simulate the microscopic system over the burst.

    Args:
        ens (WeightedEnsemble): Initial ensemble, returned as element 0.
        model (SdeModel): The dynamics.
        cfg (MicroConfig): Burst description.
        rng (np.random.Generator): Stream consumed step by step.

    Returns:
        list[WeightedEnsemble]: The K + 1 ensembles of the burst.
    """
    states = [ens]
    for _ in range(cfg.steps):
        states.append(em_step(states[-1], model, cfg.dt_micro, rng))
    return states
