"""
inversion.py - Occupancy Inversion

Maps an observed occupancy u back to the total arrival rate y that sustains it
(the unique positive root of the occupancy polynomial), with its first and
second derivatives, and solves the uniform-network fixed point.

Also exposes the sign-counting utilities used to check that each polynomial
has exactly one positive root.
"""

from dataclasses import dataclass
from typing import List, Sequence, Union
import logging
import math

import numpy as np
from scipy.optimize import brentq

from .errors import InstabilityError, InvalidInputError, NumericError
from .loss_queue import carried_load, occupancy_slope, stationary_distribution
from .models_net import OccupancyTarget, QueueParams, UniformSolution, U_CAP

logger = logging.getLogger(__name__)

MAX_DOUBLINGS = 200
RESIDUAL_TOL = 1e-10

OccupancyLike = Union[float, OccupancyTarget]


def _as_target(u: OccupancyLike) -> OccupancyTarget:
    return u if isinstance(u, OccupancyTarget) else OccupancyTarget(float(u))


def _solve_load(params: QueueParams, load: float, tol: float) -> float:
    """
    Root of carried_load(y) = load for load in (0, k*mu)

    Brackets by doubling from y = k*mu, solves with brentq, then polishes with
    Newton steps that are only accepted inside the bracket.
    """
    def residual(y: float) -> float:
        return carried_load(params, y) - load

    lo, hi = 0.0, params.capacity
    doublings = 0
    while residual(hi) < 0:
        lo, hi = hi, 2.0 * hi
        doublings += 1
        if doublings > MAX_DOUBLINGS:
            raise NumericError(
                f"could not bracket carried load {load} within {MAX_DOUBLINGS} doublings "
                f"(k={params.k}, mu={params.mu}); the target is too close to capacity"
            )

    y = brentq(residual, lo, hi, xtol=1e-14, rtol=8.9e-16, maxiter=500)

    for _ in range(3):
        r = residual(y)
        if r == 0.0:
            break
        slope = occupancy_slope(params, y) * params.capacity
        if slope <= 0:
            break
        candidate = y - r / slope
        if not lo <= candidate <= hi or abs(residual(candidate)) >= abs(r):
            break
        y = candidate

    final = abs(residual(y))
    if final > tol:
        raise NumericError(f"inversion residual {final:.3e} exceeds {tol:.3e}")
    logger.debug("solved carried load %.12g for k=%d mu=%.6g: y=%.12g after %d doublings",
                 load, params.k, params.mu, y, doublings)
    return y


def _solve_occupancy(params: QueueParams, target: float) -> float:
    """Root of occupancy(y) = target for target in (0, 1), residual measured in occupancy"""
    return _solve_load(params, target * params.capacity, RESIDUAL_TOL * params.capacity)


def invert_occupancy(params: QueueParams, u: OccupancyLike) -> float:
    """
    Total arrival rate y that produces occupancy u

    Args:
        params: Block parameters
        u: Occupancy in [0, U_CAP]

    Returns:
        y >= 0, exactly 0 for u = 0
    """
    target = _as_target(u)
    if target.u == 0.0:
        return 0.0
    return _solve_occupancy(params, target.u)


@dataclass(frozen=True)
class _Moments:
    """Raw moments of the busy-stall count at the solution y(u)"""
    y: float
    m1: float
    m2: float
    m3: float


def _moments(params: QueueParams, u: float) -> _Moments:
    if u <= 0:
        raise InvalidInputError("derivatives of the inversion are defined for u > 0")
    y = _solve_occupancy(params, u)
    pi = np.asarray(stationary_distribution(params, y).pi)
    i = np.arange(params.k + 1, dtype=float)
    return _Moments(y=y, m1=float(i @ pi), m2=float((i * i) @ pi), m3=float((i ** 3) @ pi))


def _implicit_terms(params: QueueParams, u: float):
    """
    Partial derivatives of the occupancy polynomial, rescaled by a positive constant

    With F(y, u) = mu * sum_i (i - uk) rho^i / i!, dividing by mu * sum_i rho^i / i!
    at the solution turns every partial into a moment of the stationary
    distribution. Ratios such as dy/du do not depend on the rescaling.
    """
    m = _moments(params, u)
    uk = u * params.k
    f_y = (m.m2 - uk * m.m1) / m.y
    f_yu = -params.k * m.m1 / m.y
    f_yy = (m.m3 - m.m2 - uk * (m.m2 - m.m1)) / (m.y * m.y)
    return m, f_y, f_yu, f_yy


def arrival_sensitivity(params: QueueParams, u: OccupancyLike) -> float:
    """
    dy/du at the solution, by implicit differentiation

    dy/du = -F_u / F_y = k*y / sum_i i (i - uk) pi_i
    """
    target = _as_target(u)
    _, f_y, _, _ = _implicit_terms(params, target.u)
    if f_y <= 0:
        raise NumericError(f"implicit derivative denominator vanished at u={target.u}")
    return params.k / f_y


def arrival_curvature(params: QueueParams, u: OccupancyLike) -> float:
    """
    d2y/du2 at the solution

    y'' = -(2 F_yu y' + F_yy y'^2) / F_y   (F_uu = 0)
    """
    target = _as_target(u)
    _, f_y, f_yu, f_yy = _implicit_terms(params, target.u)
    slope = params.k / f_y
    return -(2.0 * f_yu * slope + f_yy * slope * slope) / f_y


def convexity_margin(params: QueueParams, u: OccupancyLike) -> float:
    """
    h(x, y) = G_yy * dy/dx + 2 * G_xy, with x = k*u and G = -F

    Nonnegative exactly when the inversion is convex, since
    d2y/dx2 = G_x * h / G_y^2 with G_x > 0. Returned in the moment scale.
    """
    target = _as_target(u)
    _, f_y, f_yu, f_yy = _implicit_terms(params, target.u)
    dy_dx = 1.0 / f_y
    return -f_yy * dy_dx - 2.0 * f_yu / params.k


def convexity_margin_scale(params: QueueParams, u: OccupancyLike) -> float:
    """Magnitude of the two terms of h, for relative tolerances"""
    target = _as_target(u)
    _, f_y, f_yu, f_yy = _implicit_terms(params, target.u)
    return abs(f_yy / f_y) + abs(2.0 * f_yu / params.k)


def implicit_bound_gap(params: QueueParams, u: OccupancyLike) -> float:
    """
    2/y' + 2 - x with x = k*u and y' = dy/dx

    Nonnegative for k <= 2 at every occupancy; for larger k it turns negative
    near saturation, so the convexity check relies on convexity_margin instead.
    """
    target = _as_target(u)
    dy_dx = arrival_sensitivity(params, target) / params.k
    return 2.0 / dy_dx + 2.0 - params.k * target.u


def occupancy_poly_coeffs(params: QueueParams, u: OccupancyLike) -> List[float]:
    """
    Coefficients of sum_i c_i y^i whose positive root is y(u)

    c_i = (i - uk) / (i! * mu^(i-1)), i = 0..k, built by recurrence.
    For k=2, mu=1, u=0.5 that is (-1, 0, 0.5); a listing of (-1, 0, 0.25)
    for the same case does not satisfy this formula.
    """
    target = _as_target(u)
    return _descending_factorial_coeffs(params, target.u * params.k)


def uniform_poly_coeffs(params: QueueParams, lam: float) -> List[float]:
    """
    Coefficients of the uniform-network polynomial, lowest degree first

    c_0 = -lam and c_i = (i - lam/mu) / (i! * mu^(i-1)) for i >= 1
    """
    if not math.isfinite(lam) or lam <= 0:
        raise InvalidInputError(f"exogenous rate must be positive, got {lam!r}")
    return _descending_factorial_coeffs(params, lam / params.mu)


def _descending_factorial_coeffs(params: QueueParams, shift: float) -> List[float]:
    coeffs = []
    scale = params.mu  # 1 / (i! * mu^(i-1)) at i = 0
    for i in range(params.k + 1):
        if i > 0:
            scale /= i * params.mu
        coeffs.append((i - shift) * scale)
    return coeffs


def sign_changes(seq: Sequence[float]) -> int:
    """
    Number of strict sign alternations, zeros discarded

    Args:
        seq: Nonempty coefficient sequence

    Returns:
        Sign change count
    """
    if len(seq) == 0:
        raise InvalidInputError("sign counting needs a nonempty sequence")
    signs = [math.copysign(1.0, c) for c in seq if c != 0]
    if not signs:
        raise InvalidInputError("sign counting is undefined for an all-zero sequence")
    return sum(1 for a, b in zip(signs, signs[1:]) if a != b)


def solve_uniform(params: QueueParams, lam: float, d: int) -> UniformSolution:
    """
    Fixed point of a d-regular network of identical blocks

    Each block receives y = lam + d*x where d*x = y*pi_k, i.e. y*(1 - pi_k) = lam.

    Args:
        params: Block parameters shared by every node
        lam: Exogenous arrival rate per node
        d: Out-degree

    Returns:
        UniformSolution with y = lam + d*x. The rejected flow is positive, but
        once pi_k falls below machine epsilon the sum rounds back to lam.
    """
    if not math.isfinite(lam) or lam <= 0:
        raise InvalidInputError(f"exogenous rate must be positive, got {lam!r}")
    if isinstance(d, bool) or int(d) != d or d < 1:
        raise InvalidInputError(f"degree must be a positive integer, got {d!r}")
    if lam >= params.capacity:
        raise InstabilityError(
            f"exogenous rate {lam} is not below k*mu = {params.capacity}; "
            f"queues are only stable when lambda < k*mu"
        )
    root = _solve_load(params, lam, RESIDUAL_TOL * max(1.0, lam))
    rejected = stationary_distribution(params, root).rejection_rate
    return UniformSolution(y=lam + rejected, per_neighbor_rejection=rejected / int(d), degree=int(d), lam=float(lam))


def arrival_curve(params: QueueParams, grid: Sequence[float]) -> List[float]:
    """Total arrival rate needed for each occupancy on a grid"""
    return [invert_occupancy(params, u) for u in grid]


def default_curve_grid() -> List[float]:
    """Occupancy grid used for arrival-curve plot data"""
    return [round(u, 2) for u in np.linspace(0.30, 0.98, 35)]


__all__ = [
    "U_CAP",
    "invert_occupancy",
    "arrival_sensitivity",
    "arrival_curvature",
    "convexity_margin",
    "convexity_margin_scale",
    "implicit_bound_gap",
    "occupancy_poly_coeffs",
    "uniform_poly_coeffs",
    "sign_changes",
    "solve_uniform",
    "arrival_curve",
    "default_curve_grid",
]
