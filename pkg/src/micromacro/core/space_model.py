"""Configuration spaces, SDE models and closed-form reference solutions."""

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ..errors import UnsupportedSpace

Drift = Callable[[NDArray[np.float64]], NDArray[np.float64]]
Diffusion = Callable[[NDArray[np.float64]], NDArray[np.float64]]


class SpaceKind(enum.Enum):
    TORUS = "torus"
    REAL_LINE = "real-line"


@dataclass(frozen=True)
class ConfigurationSpace:
    """
    Either the flat torus [0,1)^d or the Euclidean space R^d.

    Attributes:
        kind (SpaceKind): Torus or real line.
        dim (int): Dimension d.
    """

    kind: SpaceKind
    dim: int = 1

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError(f"Dimension must be positive, got {self.dim}")

    @classmethod
    def torus(cls, dim: int = 1) -> "ConfigurationSpace":
        return cls(SpaceKind.TORUS, dim)

    @classmethod
    def real_line(cls, dim: int = 1) -> "ConfigurationSpace":
        return cls(SpaceKind.REAL_LINE, dim)

    @property
    def is_torus(self) -> bool:
        return self.kind is SpaceKind.TORUS

    def reduce(self, x: ArrayLike) -> NDArray[np.float64]:
        """
        Map positions into the fundamental domain.

        Args:
            x (ArrayLike): Positions of any shape.

        Returns:
            NDArray: The positions reduced to [0,1) on the torus, unchanged on R^d.
        """
        x = np.asarray(x, dtype=np.float64)
        if not self.is_torus:
            return x
        reduced = x - np.floor(x)
        # x - floor(x) rounds to 1.0 for tiny negative x
        return np.where(reduced >= 1.0, 0.0, reduced)

    def contains(self, x: ArrayLike) -> bool:
        x = np.asarray(x, dtype=np.float64)
        if not np.all(np.isfinite(x)):
            return False
        if self.is_torus:
            return bool(np.all((x >= 0.0) & (x < 1.0)))
        return True

    def displacement(self, x: ArrayLike, y: ArrayLike) -> NDArray[np.float64]:
        """Componentwise shortest difference x - y (minimum image on the torus)."""
        diff = np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)
        if self.is_torus:
            diff = diff - np.round(diff)
        return diff

    def distance(self, x: ArrayLike, y: ArrayLike) -> NDArray[np.float64]:
        """
        Euclidean distance, minimised over lattice shifts on the torus.

        The last axis is the coordinate axis when d > 1.
        """
        diff = self.displacement(x, y)
        if self.dim == 1:
            return np.abs(diff)
        return np.sqrt(np.sum(diff**2, axis=-1))


@dataclass(frozen=True)
class SdeModel:
    """
    Time-homogeneous SDE dX = a(X) dt + b(X) dW on a configuration space.

    Drift and diffusion are vectorised over particles: `drift` maps a (J, d) array to
    (J, d) and `diffusion` maps it to (J, d, m), with m the number of noise channels.

    Attributes:
        space (ConfigurationSpace): Where the process lives.
        drift (Drift): The drift a.
        diffusion (Diffusion): The diffusion matrix b.
        noise_channels (int): Number m of independent Brownian motions.
        label (str): Human-readable identifier.
    """

    space: ConfigurationSpace
    drift: Drift
    diffusion: Diffusion
    noise_channels: int
    label: str

    def drift_1d(self, x: NDArray[np.float64]) -> NDArray[np.float64]:
        """Drift evaluated on a one-dimensional grid of shape (M,)."""
        return self.drift(x[:, None])[:, 0]

    def diffusion_squared_1d(self, x: NDArray[np.float64]) -> NDArray[np.float64]:
        """Scalar b b^T evaluated on a one-dimensional grid of shape (M,)."""
        b = self.diffusion(x[:, None])[:, 0, :]
        return np.sum(b**2, axis=-1)


def _constant_diffusion(value: float, dim: int) -> Diffusion:
    def diffusion(x: NDArray[np.float64]) -> NDArray[np.float64]:
        b = np.zeros((x.shape[0], dim, dim))
        b[:, np.arange(dim), np.arange(dim)] = value
        return b

    return diffusion


def zero_dynamics(space: ConfigurationSpace) -> SdeModel:
    """a = 0 and b = 0: every particle stays where it is."""
    return SdeModel(
        space=space,
        drift=np.zeros_like,
        diffusion=_constant_diffusion(0.0, space.dim),
        noise_channels=space.dim,
        label="zero",
    )


def pure_diffusion(space: ConfigurationSpace | None = None) -> SdeModel:
    """dX = sqrt(2) dW, whose generator is the Laplacian."""
    space = space or ConfigurationSpace.torus()
    return SdeModel(
        space=space,
        drift=np.zeros_like,
        diffusion=_constant_diffusion(math.sqrt(2.0), space.dim),
        noise_channels=space.dim,
        label="pure-diffusion" if space.is_torus else "pure-diffusion-line",
    )


def ornstein_uhlenbeck(theta: float = 1.0, sigma: float = math.sqrt(2.0)) -> SdeModel:
    """dX = -theta X dt + sigma dW on the real line."""
    if theta <= 0:
        raise ValueError(f"theta must be positive, got {theta}")
    return SdeModel(
        space=ConfigurationSpace.real_line(),
        drift=lambda x: -theta * x,
        diffusion=_constant_diffusion(sigma, 1),
        noise_channels=1,
        label="ornstein-uhlenbeck",
    )


def periodic_drift() -> SdeModel:
    """
    Nonlinear elliptic diffusion on the unit torus.

    a(x) = sin(2 pi x) and b(x) = sqrt(1 + cos(2 pi x) / 2), so b^2 >= 1/2.
    """

    def drift(x: NDArray[np.float64]) -> NDArray[np.float64]:
        return np.sin(2.0 * np.pi * x)

    def diffusion(x: NDArray[np.float64]) -> NDArray[np.float64]:
        return np.sqrt(1.0 + 0.5 * np.cos(2.0 * np.pi * x))[:, :, None]

    return SdeModel(
        space=ConfigurationSpace.torus(),
        drift=drift,
        diffusion=diffusion,
        noise_channels=1,
        label="periodic-drift",
    )


def build_model(label: str, theta: float = 1.0, sigma: float = math.sqrt(2.0)) -> SdeModel:
    """
    Look up a built-in model by label.

    Args:
        label (str): One of `pure-diffusion`, `pure-diffusion-line`,
            `ornstein-uhlenbeck`, `periodic-drift`, `zero`.
        theta (float): OU rate.
        sigma (float): OU noise amplitude.

    Returns:
        SdeModel: The model.

    Raises:
        ValueError: If the label is unknown.
    """
    match label:
        case "pure-diffusion":
            return pure_diffusion(ConfigurationSpace.torus())
        case "pure-diffusion-line":
            return pure_diffusion(ConfigurationSpace.real_line())
        case "ornstein-uhlenbeck":
            return ornstein_uhlenbeck(theta, sigma)
        case "periodic-drift":
            return periodic_drift()
        case "zero":
            return zero_dynamics(ConfigurationSpace.torus())
        case _:
            raise ValueError(f"Unknown model label {label}")


def require_unit_torus(space: ConfigurationSpace, what: str) -> None:
    if not (space.is_torus and space.dim == 1):
        raise UnsupportedSpace(f"{what} is only defined on the one-dimensional torus")


@dataclass(frozen=True)
class WideningGaussianRef:
    """
    Heat-equation solution started from N(0, sigma0).

    Attributes:
        sigma0 (float): Initial variance.
    """

    sigma0: float

    def __post_init__(self) -> None:
        if self.sigma0 <= 0:
            raise ValueError(f"sigma0 must be positive, got {self.sigma0}")

    def variance(self, t: float) -> float:
        return self.sigma0 + 2.0 * t

    def density(self, t: float, x: ArrayLike) -> NDArray[np.float64]:
        return widening_gaussian_density(t, x, self)


def widening_gaussian_density(
    t: float, x: ArrayLike, ref: WideningGaussianRef
) -> NDArray[np.float64]:
    """
    Density of N(0, sigma0 + 2t) at x.

    Args:
        t (float): Time, t >= 0.
        x (ArrayLike): Positions.
        ref (WideningGaussianRef): Initial variance.

    Returns:
        NDArray: The density values, same shape as x.
    """
    if t < 0:
        raise ValueError(f"t must be non-negative, got {t}")
    var = ref.variance(t)
    x = np.asarray(x, dtype=np.float64)
    return np.exp(-(x**2) / (2.0 * var)) / math.sqrt(2.0 * math.pi * var)


def widening_gaussian_entropy(sigma_t: float, dt: float) -> float:
    """
    Exact D(p(t + dt) || p(t)) for the widening Gaussian with variance sigma_t at time t.

    Equals (h - ln(1 + h)) / 2 with h = 2 dt / sigma_t, and dt**2 / sigma_t**2 to leading order.

    Args:
        sigma_t (float): Variance at time t, > 0.
        dt (float): Time increment, >= 0.

    Returns:
        float: The relative entropy.
    """
    if sigma_t <= 0:
        raise ValueError(f"sigma_t must be positive, got {sigma_t}")
    if dt < 0:
        raise ValueError(f"dt must be non-negative, got {dt}")
    h = 2.0 * dt / sigma_t
    return 0.5 * (h - math.log1p(h))


def ou_reference_moments(
    theta: float, sigma: float, x0_mean: float, x0_var: float, t: float
) -> tuple[float, float]:
    """
    Mean and variance of dX = -theta X dt + sigma dW at time t.

    Args:
        theta (float): Rate, > 0.
        sigma (float): Noise amplitude.
        x0_mean (float): Initial mean.
        x0_var (float): Initial variance.
        t (float): Time, >= 0.

    Returns:
        tuple[float, float]: (mean, variance).
    """
    if theta <= 0:
        raise ValueError(f"theta must be positive, got {theta}")
    if t < 0:
        raise ValueError(f"t must be non-negative, got {t}")
    decay = math.exp(-theta * t)
    mean = x0_mean * decay
    variance = x0_var * decay**2 - sigma**2 * math.expm1(-2.0 * theta * t) / (2.0 * theta)
    return mean, variance
