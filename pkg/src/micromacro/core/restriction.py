"""Restriction operators: moment maps and hierarchies of macroscopic state variables."""

import enum
import logging
from dataclasses import InitVar, dataclass
from typing import TYPE_CHECKING, Callable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ..errors import InvalidRestriction, UnsupportedSpace
from .ensemble import WeightedEnsemble
from .space_model import ConfigurationSpace, require_unit_torus

if TYPE_CHECKING:
    from .grid import GridDensity

logger = logging.getLogger(__name__)

GRAM_EIGENVALUE_FLOOR = 1e-10
_VALIDATION_POINTS = 4096


class RestrictionFamily(enum.Enum):
    TRIGONOMETRIC = "trigonometric"
    SCALED_POWER = "scaled-power"
    CUSTOM = "custom"


@dataclass(frozen=True)
class RestrictionFunction:
    """
    A named bounded map from the space to R, vectorised over (J, d) positions.

    Attributes:
        name (str): Display name, used in CSV headers.
        func (Callable): Maps (J, d) positions to (J,) values.
    """

    name: str
    func: Callable[[NDArray[np.float64]], NDArray[np.float64]]

    def __call__(self, x: NDArray[np.float64]) -> NDArray[np.float64]:
        return self.func(x)


def validation_points(space: ConfigurationSpace) -> NDArray[np.float64]:
    """Dense deterministic point set on which restriction systems are checked."""
    if space.dim == 1:
        if space.is_torus:
            grid = (np.arange(_VALIDATION_POINTS) + 0.5) / _VALIDATION_POINTS
        else:
            grid = np.linspace(-8.0, 8.0, _VALIDATION_POINTS + 1)
        return grid[:, None]
    rng = np.random.default_rng(0)
    points = rng.random((_VALIDATION_POINTS, space.dim))
    return points if space.is_torus else 16.0 * points - 8.0


@dataclass(frozen=True)
class RestrictionSet:
    """
    Ordered restriction functions phi_1..phi_L with hierarchy semantics.

    At construction the functions are checked to be non-constant and, together with the
    constant 1, linearly independent: the Gram matrix on a dense point set must have its
    smallest eigenvalue above 1e-10.

    Attributes:
        functions (tuple[RestrictionFunction, ...]): The ordered functions.
        family (RestrictionFamily): Family the functions were built from.
        space (ConfigurationSpace): Domain of the functions.
    """

    functions: tuple[RestrictionFunction, ...]
    family: RestrictionFamily
    space: ConfigurationSpace
    validate: InitVar[bool] = True

    def __post_init__(self, validate: bool) -> None:
        object.__setattr__(self, "functions", tuple(self.functions))
        if not self.functions:
            raise InvalidRestriction("A restriction set needs at least one function")
        if validate:
            self._check_independence()

    def _check_independence(self) -> None:
        table = self.evaluate(validation_points(self.space))
        spread = np.ptp(table, axis=0)
        for name, width in zip(self.names, spread):
            if width < 1e-12:
                raise InvalidRestriction(f"Restriction function {name} is constant")
        augmented = np.column_stack([np.ones(table.shape[0]), table])
        gram = augmented.T @ augmented / table.shape[0]
        smallest = float(np.linalg.eigvalsh(gram)[0])
        if smallest <= GRAM_EIGENVALUE_FLOOR:
            raise InvalidRestriction(
                f"{{1, {', '.join(self.names)}}} is numerically dependent "
                f"(smallest Gram eigenvalue {smallest:.3e})"
            )

    @property
    def level(self) -> int:
        return len(self.functions)

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.functions]

    def __len__(self) -> int:
        return self.level

    def evaluate(self, positions: ArrayLike) -> NDArray[np.float64]:
        """
        Evaluation table Phi[j, l] = phi_l(x_j).

        Args:
            positions (ArrayLike): (J, d) or (J,) positions.

        Returns:
            NDArray: (J, L) table.
        """
        positions = np.asarray(positions, dtype=np.float64)
        if positions.ndim == 1:
            positions = positions[:, None]
        return np.column_stack([np.asarray(f(positions), dtype=np.float64) for f in self.functions])

    def prefix(self, level: int) -> "RestrictionSet":
        """The first `level` functions, itself a valid restriction set."""
        if not 1 <= level <= self.level:
            raise ValueError(f"prefix level must lie in [1, {self.level}], got {level}")
        return RestrictionSet(self.functions[:level], self.family, self.space, validate=False)

    def extended(self, function: RestrictionFunction) -> "RestrictionSet":
        """Append one function; the result is validated and has the custom family."""
        return RestrictionSet(
            self.functions + (function,), RestrictionFamily.CUSTOM, self.space
        )

    def sup_norms(self) -> NDArray[np.float64]:
        """Sup norms estimated on the validation point set."""
        return np.max(np.abs(self.evaluate(validation_points(self.space))), axis=0)


@dataclass(frozen=True, eq=False)
class MacroState:
    """
    Vector m in R^L of macroscopic state variables.

    Attributes:
        m (NDArray): The L finite entries.
    """

    m: NDArray[np.float64]

    def __post_init__(self) -> None:
        m = np.array(self.m, dtype=np.float64, copy=True).reshape(-1)
        if m.size == 0 or not np.all(np.isfinite(m)):
            raise ValueError("A macroscopic state needs finite entries")
        m.flags.writeable = False
        object.__setattr__(self, "m", m)

    @property
    def level(self) -> int:
        return self.m.size

    def prefix(self, level: int) -> "MacroState":
        if not 1 <= level <= self.level:
            raise ValueError(f"prefix level must lie in [1, {self.level}], got {level}")
        return MacroState(self.m[:level])

    def extended(self, value: float) -> "MacroState":
        return MacroState(np.append(self.m, value))


def _trig(k: int, kind: str) -> RestrictionFunction:
    wave = np.sin if kind == "sin" else np.cos
    return RestrictionFunction(
        f"{kind}{k}", lambda x: wave(2.0 * np.pi * k * x[:, 0]) / k
    )


def _power(order: int) -> RestrictionFunction:
    def power(x: NDArray[np.float64]) -> NDArray[np.float64]:
        # the torus is identified with (0, 1]
        y = np.where(x[:, 0] == 0.0, 1.0, x[:, 0])
        return y**order / order

    return RestrictionFunction(f"pow{order}", power)


def trig_family(level: int, space: ConfigurationSpace | None = None) -> RestrictionSet:
    """
    sin(2 pi k x)/k, cos(2 pi k x)/k for k = 1..level/2, ordered sin1, cos1, sin2, ...

    Args:
        level (int): Even number of functions.
        space (ConfigurationSpace | None): Must be the one-dimensional torus.

    Returns:
        RestrictionSet: The trigonometric hierarchy.
    """
    space = space or ConfigurationSpace.torus()
    require_unit_torus(space, "The trigonometric family")
    if level < 2 or level % 2:
        raise ValueError(f"The trigonometric family needs an even level, got {level}")
    functions = []
    for k in range(1, level // 2 + 1):
        functions += [_trig(k, "sin"), _trig(k, "cos")]
    return RestrictionSet(tuple(functions), RestrictionFamily.TRIGONOMETRIC, space)


def scaled_power_family(level: int, space: ConfigurationSpace | None = None) -> RestrictionSet:
    """
    x**l / l for l = 1..level on the torus identified with (0, 1].

    With the 1e-10 Gram threshold the family is usable up to level 5.
    """
    space = space or ConfigurationSpace.torus()
    require_unit_torus(space, "The scaled power family")
    if level < 1:
        raise ValueError(f"level must be positive, got {level}")
    functions = tuple(_power(order) for order in range(1, level + 1))
    return RestrictionSet(functions, RestrictionFamily.SCALED_POWER, space)


def custom_family(
    functions: Sequence[Callable[[NDArray[np.float64]], NDArray[np.float64]]],
    names: Sequence[str],
    space: ConfigurationSpace,
) -> RestrictionSet:
    """User supplied closures; independence is validated numerically."""
    if len(functions) != len(names):
        raise ValueError("Every custom restriction function needs a name")
    wrapped = tuple(RestrictionFunction(n, f) for f, n in zip(functions, names))
    return RestrictionSet(wrapped, RestrictionFamily.CUSTOM, space)


def build_restriction(family: str, level: int, space: ConfigurationSpace) -> RestrictionSet:
    match family:
        case "trigonometric":
            return trig_family(level, space)
        case "scaled-power":
            return scaled_power_family(level, space)
        case _:
            raise ValueError(f"Unknown restriction family {family}")


def candidate_function(
    kind: str,
    order: int = 1,
    center: float = 0.5,
    width: float = 0.1,
    space: ConfigurationSpace | None = None,
    name: str | None = None,
) -> RestrictionFunction:
    """
    Build one candidate restriction function for greedy moment selection.

    Args:
        kind (str): `sin`, `cos`, `power` or `bump`.
        order (int): Frequency or power.
        center (float): Bump centre.
        width (float): Bump width.
        space (ConfigurationSpace | None): Domain; distances wrap on the torus.
        name (str | None): Display name override.

    Returns:
        RestrictionFunction: The candidate.
    """
    space = space or ConfigurationSpace.torus()
    match kind:
        case "sin" | "cos":
            require_unit_torus(space, "Trigonometric candidates")
            function = _trig(order, kind)
        case "power":
            if not space.is_torus:
                raise UnsupportedSpace("Power candidates are unbounded on the real line")
            function = _power(order)
        case "bump":
            function = gaussian_bump(center, width, space)
        case _:
            raise ValueError(f"Unknown candidate kind {kind}")
    if name is not None:
        return RestrictionFunction(name, function.func)
    return function


def gaussian_bump(center: float, width: float, space: ConfigurationSpace) -> RestrictionFunction:
    """exp(-d(x, center)^2 / (2 width^2)), with the torus distance on the torus."""

    def bump(x: NDArray[np.float64]) -> NDArray[np.float64]:
        d = space.distance(x[:, 0] if space.dim == 1 else x, center)
        return np.exp(-(d**2) / (2.0 * width**2))

    return RestrictionFunction(f"bump{center:g}", bump)


def restrict(restriction: RestrictionSet, ens: WeightedEnsemble) -> MacroState:
    """
    m_l = sum_j w_j phi_l(x_j).

    Args:
        restriction (RestrictionSet): The restriction functions.
        ens (WeightedEnsemble): The ensemble, on the same space.

    Returns:
        MacroState: The weighted moments.
    """
    if restriction.space != ens.space:
        raise UnsupportedSpace("Restriction and ensemble live on different spaces")
    return MacroState(ens.weights @ restriction.evaluate(ens.positions))


def grid_table(restriction: RestrictionSet, p: "GridDensity") -> NDArray[np.float64]:
    """
    Evaluation table of the restriction functions at the grid midpoints.

    Torus restrictions need the unit torus grid; real-line restrictions accept the
    wide-torus surrogate.
    """
    if restriction.space.dim != 1:
        raise UnsupportedSpace("Grid restriction needs one-dimensional functions")
    if restriction.space.is_torus and not p.on_unit_torus:
        raise UnsupportedSpace("Torus restriction functions need a grid on the unit torus")
    return restriction.evaluate(p.x)


def restrict_grid(restriction: RestrictionSet, p: "GridDensity") -> MacroState:
    """Composite midpoint quadrature sum_i p_i phi_l(x_i) h."""
    return MacroState((p.values * p.h) @ grid_table(restriction, p))
