"""Periodic one-dimensional densities and the explicit Fokker-Planck scheme."""

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ..errors import CflViolated, MassConservationViolated, UnsupportedSpace
from .space_model import SdeModel

logger = logging.getLogger(__name__)

MASS_TOL = 1e-10
MASS_DRIFT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class GridDensity:
    """
    Density sampled at the cell midpoints of a periodic uniform grid.

    The default grid is the unit torus. A longer circumference centred on the origin
    (offset = -length / 2) is the wide-torus surrogate of the real line.

    Attributes:
        values (NDArray): M nonnegative values with sum(values) * h = 1.
        length (float): Circumference of the torus.
        offset (float): Left end of the fundamental cell.
    """

    values: NDArray[np.float64]
    length: float = 1.0
    offset: float = 0.0

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64, copy=True).reshape(-1)
        if values.size < 3:
            raise ValueError("A grid density needs at least three cells")
        if self.length <= 0:
            raise ValueError(f"length must be positive, got {self.length}")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ValueError("Grid density values must be finite and nonnegative")
        mass = values.sum() * self.length / values.size
        if abs(mass - 1.0) > MASS_TOL:
            raise ValueError(f"Grid density must have unit mass, got {mass!r}")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def h(self) -> float:
        return self.length / self.size

    @property
    def x(self) -> NDArray[np.float64]:
        return self.offset + (np.arange(self.size) + 0.5) * self.h

    @property
    def on_unit_torus(self) -> bool:
        return self.length == 1.0 and self.offset == 0.0

    def mass(self) -> float:
        return float(self.values.sum() * self.h)

    def same_grid(self, other: "GridDensity") -> bool:
        return (self.size, self.length, self.offset) == (other.size, other.length, other.offset)

    def with_values(self, values: ArrayLike) -> "GridDensity":
        """New density on the same grid; `values` are renormalised to unit mass."""
        values = np.asarray(values, dtype=np.float64)
        return GridDensity(values / (values.sum() * self.h), self.length, self.offset)

    @classmethod
    def from_function(
        cls,
        f: Callable[[NDArray[np.float64]], ArrayLike],
        size: int,
        length: float = 1.0,
        offset: float = 0.0,
    ) -> "GridDensity":
        """
        Sample `f` at the midpoints and normalise.

        Args:
            f (Callable): Unnormalised density.
            size (int): Number of cells M.
            length (float): Circumference.
            offset (float): Left end of the cell.

        Returns:
            GridDensity: The normalised density.
        """
        h = length / size
        x = offset + (np.arange(size) + 0.5) * h
        values = np.asarray(f(x), dtype=np.float64)
        return cls(values / (values.sum() * h), length, offset)

    @classmethod
    def uniform(cls, size: int, length: float = 1.0, offset: float = 0.0) -> "GridDensity":
        return cls(np.full(size, 1.0 / length), length, offset)


def _require_scalar_model(model: SdeModel) -> None:
    if model.space.dim != 1:
        raise UnsupportedSpace("The grid oracle only handles one-dimensional models")


def fokker_planck_operator(p: GridDensity, model: SdeModel) -> NDArray[np.float64]:
    """
    L*p = -(a p)' + (b^2 p)'' / 2 with second-order central differences.

    Args:
        p (GridDensity): The density.
        model (SdeModel): One-dimensional model.

    Returns:
        NDArray: L*p at the grid midpoints, with periodic wrap.
    """
    _require_scalar_model(model)
    x, h = p.x, p.h
    flux = model.drift_1d(x) * p.values
    spread = model.diffusion_squared_1d(x) * p.values
    advection = (np.roll(flux, -1) - np.roll(flux, 1)) / (2.0 * h)
    diffusion = (np.roll(spread, -1) - 2.0 * spread + np.roll(spread, 1)) / (2.0 * h**2)
    return diffusion - advection


def cfl_bound(p: GridDensity, model: SdeModel) -> float:
    """Largest stable explicit step h^2 / (2 max b^2); infinite without diffusion."""
    b2 = float(np.max(model.diffusion_squared_1d(p.x)))
    return math.inf if b2 == 0.0 else p.h**2 / (2.0 * b2)


def fp_step(p: GridDensity, model: SdeModel, dt: float) -> GridDensity:
    """
    One explicit Euler step of the Fokker-Planck equation.

    Args:
        p (GridDensity): Current density.
        model (SdeModel): One-dimensional model.
        dt (float): Time step within the CFL bound.

    Returns:
        GridDensity: The advanced, renormalised density.

    Raises:
        CflViolated: If dt exceeds h^2 / (2 max b^2).
        MassConservationViolated: If the step changed the mass by 1e-12 or more.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    bound = cfl_bound(p, model)
    if dt > bound * (1.0 + 1e-12):
        raise CflViolated(f"dt={dt:.6e} exceeds the CFL bound {bound:.6e}")
    values = p.values + dt * fokker_planck_operator(p, model)
    drift = abs(values.sum() * p.h - p.mass())
    if drift >= MASS_DRIFT_TOL:
        raise MassConservationViolated(f"Mass drifted by {drift:.3e} in one step")
    return p.with_values(values)


def fp_evolve(p: GridDensity, model: SdeModel, duration: float, safety: float = 0.9) -> GridDensity:
    """
    Advance the density over `duration` with equal sub-steps below safety * CFL bound.

    Args:
        p (GridDensity): Initial density.
        model (SdeModel): One-dimensional model.
        duration (float): Time to evolve, >= 0.
        safety (float): Fraction of the CFL bound used.

    Returns:
        GridDensity: The evolved density.
    """
    if duration < 0:
        raise ValueError(f"duration must be non-negative, got {duration}")
    if duration == 0:
        return p
    bound = cfl_bound(p, model)
    steps = 1 if math.isinf(bound) else max(1, math.ceil(duration / (safety * bound)))
    dt = duration / steps
    logger.debug(f"Evolving {duration:.4e} in {steps} steps of {dt:.4e}")
    for _ in range(steps):
        p = fp_step(p, model, dt)
    return p
