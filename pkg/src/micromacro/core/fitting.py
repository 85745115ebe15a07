"""Order and limit estimation from step-size ladders."""

import logging
import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike

logger = logging.getLogger(__name__)

OUTLIER_SIGMAS = 3.0
OUTLIER_FLOOR = 1e-9


@dataclass(frozen=True)
class SlopeFit:
    """
    Least squares line through (log dt, log value).

    Attributes:
        slope (float): Fitted order.
        intercept (float): Fitted log constant.
        points (int): Points used by the fit.
        dropped_largest (bool): Whether the largest step was discarded as an outlier.
    """

    slope: float
    intercept: float
    points: int
    dropped_largest: bool = False


@dataclass(frozen=True)
class LimitFit:
    """
    Linear fit value ~ limit + slope * dt over the smallest steps.

    Attributes:
        limit (float): Intercept, the dt -> 0 limit.
        slope (float): First-order correction.
        points (int): Points used by the fit.
    """

    limit: float
    slope: float
    points: int


def fit_loglog_slope(
    dt: ArrayLike, values: ArrayLike, weights: ArrayLike | None = None
) -> SlopeFit:
    """
    Weighted least squares slope of log(values) against log(dt).

    The largest dt is discarded when its residual against the fit of the remaining
    points exceeds three standard deviations of their residuals.

    Args:
        dt (ArrayLike): Step sizes.
        values (ArrayLike): Positive measurements; other entries are ignored.
        weights (ArrayLike | None): Weights of the fit, one per point.

    Returns:
        SlopeFit: The fitted line.
    """
    dt = np.asarray(dt, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    w = np.ones_like(dt) if weights is None else np.asarray(weights, dtype=np.float64)
    keep = (dt > 0) & (values > 0) & np.isfinite(values)
    order = np.argsort(dt[keep])
    x, y, w = np.log(dt[keep][order]), np.log(values[keep][order]), w[keep][order]
    if x.size < 2:
        return SlopeFit(math.nan, math.nan, int(x.size))
    if x.size >= 4:
        slope, intercept = np.polyfit(x[:-1], y[:-1], 1, w=w[:-1])
        residuals = y[:-1] - (slope * x[:-1] + intercept)
        sigma = math.sqrt(float(residuals @ residuals) / (residuals.size - 2)) if residuals.size > 2 else 0.0
        outlier = abs(y[-1] - (slope * x[-1] + intercept))
        if outlier > max(OUTLIER_SIGMAS * sigma, OUTLIER_FLOOR):
            logger.debug(f"Dropping largest dt, residual {outlier:.3e} > {OUTLIER_SIGMAS} sigma")
            return SlopeFit(float(slope), float(intercept), int(x.size - 1), True)
    slope, intercept = np.polyfit(x, y, 1, w=w)
    return SlopeFit(float(slope), float(intercept), int(x.size))


def extrapolate_ratio_limit(dt: ArrayLike, values: ArrayLike, points: int | None = None) -> LimitFit:
    """
    Estimate lim values / dt**2 as dt -> 0.

    Args:
        dt (ArrayLike): Step sizes.
        values (ArrayLike): Quantities of order dt**2.
        points (int | None): Number of smallest steps used; half the ladder, at least 3,
            when None.

    Returns:
        LimitFit: Intercept and slope of the linear fit of values / dt**2 against dt.
    """
    dt = np.asarray(dt, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    keep = np.isfinite(values) & (dt > 0)
    order = np.argsort(dt[keep])
    dt, values = dt[keep][order], values[keep][order]
    if dt.size == 0:
        return LimitFit(math.nan, math.nan, 0)
    count = points or max(3, (dt.size + 1) // 2)
    count = min(count, dt.size)
    ratio = values[:count] / dt[:count] ** 2
    if count == 1:
        return LimitFit(float(ratio[0]), 0.0, 1)
    slope, intercept = np.polyfit(dt[:count], ratio, 1)
    return LimitFit(float(intercept), float(slope), int(count))
