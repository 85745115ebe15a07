"""Weighted particle ensembles and discrete information functionals."""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import rel_entr

from ..errors import AbsoluteContinuityViolated, PreconditionViolated
from .space_model import ConfigurationSpace

logger = logging.getLogger(__name__)

WEIGHT_FLOOR = 1e-300
NORMALIZATION_TOL = 1e-12

Observable = Callable[[NDArray[np.float64]], NDArray[np.float64]]


def _frozen(array: NDArray[np.float64]) -> NDArray[np.float64]:
    array = np.array(array, dtype=np.float64, copy=True)
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class WeightedEnsemble:
    """
    J particles with normalised nonnegative weights.

    Arrays are copied and made read-only at construction.

    Attributes:
        positions (NDArray): (J, d) particle coordinates in the fundamental domain.
        weights (NDArray): (J,) weights summing to one.
        space (ConfigurationSpace): The configuration space.
        seed_lineage (str): Provenance of the random stream that produced the positions.
    """

    positions: NDArray[np.float64]
    weights: NDArray[np.float64]
    space: ConfigurationSpace
    seed_lineage: str = field(default="")

    def __post_init__(self) -> None:
        positions = np.asarray(self.positions, dtype=np.float64)
        if positions.ndim == 1:
            positions = positions[:, None]
        weights = np.asarray(self.weights, dtype=np.float64)
        if positions.ndim != 2 or positions.shape[1] != self.space.dim:
            raise ValueError(
                f"positions must have shape (J, {self.space.dim}), got {positions.shape}"
            )
        if positions.shape[0] < 2:
            raise ValueError("An ensemble needs at least two particles")
        if weights.shape != (positions.shape[0],):
            raise ValueError(
                f"weights must have shape ({positions.shape[0]},), got {weights.shape}"
            )
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise ValueError("weights must be finite and nonnegative")
        total = weights.sum()
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise ValueError(f"weights must sum to one, got {total!r}")
        if not self.space.contains(positions):
            raise ValueError("positions must lie in the fundamental domain of the space")
        object.__setattr__(self, "positions", _frozen(positions))
        object.__setattr__(self, "weights", _frozen(weights))

    @classmethod
    def uniform(
        cls, positions: ArrayLike, space: ConfigurationSpace, seed_lineage: str = ""
    ) -> "WeightedEnsemble":
        """Equally weighted ensemble; positions are reduced to the fundamental domain."""
        positions = space.reduce(positions)
        if positions.ndim == 1:
            positions = positions[:, None]
        size = positions.shape[0]
        return cls(positions, np.full(size, 1.0 / size), space, seed_lineage)

    @property
    def size(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def reweighted(self, weights: ArrayLike) -> "WeightedEnsemble":
        """
        Same particles with new weights.

        Weights below 1e-300 become exact zeros before renormalisation.

        Args:
            weights (ArrayLike): Unnormalised nonnegative weights.

        Returns:
            WeightedEnsemble: The reweighted ensemble.
        """
        weights = np.array(weights, dtype=np.float64)
        weights[weights < WEIGHT_FLOOR] = 0.0
        total = weights.sum()
        if not np.isfinite(total) or total <= 0:
            raise ValueError("Cannot renormalise weights with zero or non-finite mass")
        return WeightedEnsemble(self.positions, weights / total, self.space, self.seed_lineage)

    def moved(self, positions: ArrayLike, seed_lineage: str | None = None) -> "WeightedEnsemble":
        """New positions (reduced to the domain), weights kept."""
        positions = self.space.reduce(positions)
        lineage = self.seed_lineage if seed_lineage is None else seed_lineage
        return WeightedEnsemble(positions, self.weights, self.space, lineage)

    def shares_positions(self, other: "WeightedEnsemble") -> bool:
        return self.space == other.space and np.array_equal(self.positions, other.positions)


def expectation(ens: WeightedEnsemble, f: Observable) -> float | NDArray[np.float64]:
    """
    Weighted average sum_j w_j f(x_j).

    Args:
        ens (WeightedEnsemble): The ensemble.
        f (Observable): Maps (J, d) positions to (J,) values, or (J, k) for k observables.

    Returns:
        The scalar expectation, or a (k,) vector.
    """
    values = np.asarray(f(ens.positions), dtype=np.float64)
    result = ens.weights @ values
    return float(result) if np.ndim(result) == 0 else result


def _require_shared_support(nu: WeightedEnsemble, mu: WeightedEnsemble) -> None:
    if not nu.shares_positions(mu):
        raise PreconditionViolated("Ensembles must share their particle positions")


def discrete_relative_entropy(nu: WeightedEnsemble, mu: WeightedEnsemble) -> float:
    """
    D(nu || mu) = sum_j nu_j ln(nu_j / mu_j) on a shared support.

    Args:
        nu (WeightedEnsemble): First argument.
        mu (WeightedEnsemble): Reference; must charge every particle nu charges.

    Returns:
        float: The nonnegative relative entropy.

    Raises:
        AbsoluteContinuityViolated: If nu_j > 0 for some mu_j = 0.
    """
    _require_shared_support(nu, mu)
    if np.any((nu.weights > 0) & (mu.weights == 0)):
        raise AbsoluteContinuityViolated("nu is not absolutely continuous with respect to mu")
    return max(float(np.sum(rel_entr(nu.weights, mu.weights))), 0.0)


def total_variation(nu: WeightedEnsemble, mu: WeightedEnsemble) -> float:
    """Sum_j |nu_j - mu_j|, in [0, 2]."""
    _require_shared_support(nu, mu)
    return float(np.sum(np.abs(nu.weights - mu.weights)))


def sample_initial(
    kind: str,
    size: int,
    space: ConfigurationSpace,
    rng: np.random.Generator,
    mean: float = 0.5,
    std: float = 0.1,
    seed_lineage: str = "",
) -> WeightedEnsemble:
    """
    Sample an equally weighted initial ensemble.

    Args:
        kind (str): `uniform`, `wrapped-normal`, `normal` or `point`.
        size (int): Number of particles J.
        space (ConfigurationSpace): Target space.
        rng (np.random.Generator): Stream consumed in particle order.
        mean (float): Location.
        std (float): Spread.
        seed_lineage (str): Provenance recorded on the ensemble.

    Returns:
        WeightedEnsemble: The sampled ensemble.
    """
    shape = (size, space.dim)
    match kind:
        case "uniform":
            if not space.is_torus:
                raise ValueError("A uniform initial condition needs a torus")
            positions = rng.random(shape)
        case "wrapped-normal" | "normal":
            if kind == "normal" and space.is_torus:
                logger.debug("Normal initial condition on the torus is wrapped")
            positions = mean + std * rng.standard_normal(shape)
        case "point":
            positions = np.full(shape, mean)
        case _:
            raise ValueError(f"Unknown initial distribution {kind}")
    return WeightedEnsemble.uniform(positions, space, seed_lineage)


def bootstrap_standard_error(
    ens: WeightedEnsemble, f: Observable, rng: np.random.Generator, replicates: int = 200
) -> float:
    """
    Monte Carlo standard error of `expectation(ens, f)` by resampling particles.

    Args:
        ens (WeightedEnsemble): The ensemble.
        f (Observable): Scalar observable.
        rng (np.random.Generator): Resampling stream.
        replicates (int): Number of bootstrap resamples.

    Returns:
        float: Standard deviation of the resampled weighted averages.
    """
    values = np.asarray(f(ens.positions), dtype=np.float64)
    weighted = ens.weights * values
    estimates = np.empty(replicates)
    for r in range(replicates):
        idx = rng.integers(0, ens.size, ens.size)
        mass = ens.weights[idx].sum()
        estimates[r] = weighted[idx].sum() / mass if mass > 0 else np.nan
    return float(np.nanstd(estimates, ddof=1))


def save_ensemble_csv(ens: WeightedEnsemble, path: Path) -> Path:
    """
    Write one row per particle: x_1..x_d, weight (17 significant digits).

    Args:
        ens (WeightedEnsemble): The ensemble.
        path (Path): Destination.

    Returns:
        Path: The written file.
    """
    header = ",".join([f"x_{i + 1}" for i in range(ens.dim)] + ["weight"])
    table = np.column_stack([ens.positions, ens.weights])
    np.savetxt(path, table, fmt="%.16e", delimiter=",", header=header, comments="")
    return path


def load_ensemble_csv(
    path: Path, space: ConfigurationSpace, seed_lineage: str = ""
) -> WeightedEnsemble:
    """Read an ensemble written by `save_ensemble_csv`."""
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return WeightedEnsemble(table[:, :-1], table[:, -1], space, seed_lineage)
