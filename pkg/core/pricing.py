"""
pricing.py - Congestion-Constrained Pricing

Responsibilities:
- linear demand U(p) and the price -> rejection map g(p)
- per-block price floors that honour a congestion cap
- projected-gradient solve of the occupancy-maximization problem, cross-checked
  against the closed-form floors
- convexity diagnostics for g
- elasticity calibration and caps relative to today's rejection
"""

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence
import logging
import math

import numpy as np

from .errors import InfeasibleCapError, InvalidInputError, NumericError
from .inversion import convexity_margin, convexity_margin_scale, invert_occupancy
from .models_net import (
    BlockFace,
    ElasticityModel,
    PricedBlock,
    PricingProblem,
    PricingSolution,
    U_CAP,
)

logger = logging.getLogger(__name__)

PRICE_TOL = 1e-12
CAP_SLACK = 1e-8
AGREEMENT_TOL = 1e-6


def _check_price(model: ElasticityModel, p: float) -> float:
    p = float(p)
    if math.isnan(p) or p < model.p_min - PRICE_TOL or p > model.p_max + PRICE_TOL:
        raise InvalidInputError(f"price {p} is outside [{model.p_min}, {model.p_max}]")
    return min(max(p, model.p_min), model.p_max)


def occupancy_of_price(model: ElasticityModel, p: float) -> float:
    """
    Demand U(p) = intercept - alpha * p, clamped into [0, U_CAP]

    Args:
        model: Demand model
        p: Price in [p_min, p_max]

    Returns:
        Occupancy the price is expected to produce
    """
    p = _check_price(model, p)
    return min(U_CAP, max(0.0, model.intercept - model.alpha * p))


def price_for_occupancy(model: ElasticityModel, u: float) -> float:
    """Price on the demand line that yields occupancy u"""
    if model.alpha <= 0:
        raise InvalidInputError("price has no effect on occupancy when alpha is 0")
    return (model.intercept - u) / model.alpha


def rejection_at_occupancy(block: BlockFace, u: float) -> float:
    """g = f(u) - u*k*mu, the rate of drivers turned away at occupancy u"""
    y = invert_occupancy(block.params, u)
    return max(0.0, y - u * block.params.capacity)


def rejection_of_price(block: BlockFace, model: ElasticityModel, p: float) -> float:
    """
    Rejection rate g(p) = f(U(p)) - U(p)*k*mu

    Equal to f(U(p)) * pi_k at the inverted arrival rate. Nonincreasing in p.
    """
    return rejection_at_occupancy(block, occupancy_of_price(model, p))


def congestion_price_floor(block: BlockFace, model: ElasticityModel,
                           cap: Optional[float]) -> float:
    """
    Smallest price in range whose rejection rate stays under the cap

    Args:
        block: Block face
        model: Demand model
        cap: Congestion cap x-bar (None or inf for uncapped)

    Returns:
        Feasible price floor; the lower end of the range when the cap is slack

    Raises:
        InfeasibleCapError: even p_max leaves g above the cap
    """
    lo = model.effective_p_min
    if cap is None or math.isinf(cap):
        return lo
    if math.isnan(cap) or cap < 0:
        raise InvalidInputError(f"block '{block.id}': congestion cap must be nonnegative, got {cap!r}")

    def g(p: float) -> float:
        return rejection_of_price(block, model, p)

    if g(lo) <= cap:
        return lo
    hi = model.p_max
    if math.isinf(hi) or g(hi) > cap:
        worst = g(hi) if not math.isinf(hi) else g(lo)
        raise InfeasibleCapError(
            block.id,
            f"cap {cap:.6g}/h is infeasible: the rejection rate is still {worst:.6g}/h "
            f"at the highest allowed price {hi:.6g}",
        )

    # keep hi feasible, lo infeasible
    while hi - lo > PRICE_TOL * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if g(mid) <= cap:
            hi = mid
        else:
            lo = mid
    logger.debug("block '%s': price floor %.12g for cap %.6g", block.id, hi, cap)
    return hi


def _projected_gradient(floors: np.ndarray, upper: np.ndarray, grad: np.ndarray,
                        step_fraction: float, tol: float, max_iter: int):
    """
    Minimise grad . p over the box [floors, upper]

    Each coordinate's step is scaled so one iteration moves step_fraction of
    its range. Starts from the upper corner.
    """
    span = upper - floors
    steps = np.divide(step_fraction * span, grad, out=np.zeros_like(span), where=grad > 0)
    p = upper.copy()
    for iteration in range(1, max_iter + 1):
        nxt = np.clip(p - steps * grad, floors, upper)
        update = float(np.max(np.abs(nxt - p), initial=0.0))
        p = nxt
        if update < tol:
            return p, iteration
    raise NumericError(f"projected gradient did not converge in {max_iter} iterations")


def optimize_prices(problem: PricingProblem) -> PricingSolution:
    """
    Maximise weighted occupancy subject to per-block congestion caps

    Args:
        problem: Blocks with demand models and caps

    Returns:
        PricingSolution; zero-elasticity blocks are excluded with a warning
    """
    solution = PricingSolution()
    active: List[PricedBlock] = []
    for entry in problem.entries:
        if entry.model.alpha <= 0:
            msg = f"block '{entry.id}': elasticity is 0, price has no effect; excluded from optimization"
            solution.excluded.append(entry.id)
            solution.add_warning(msg)
            logger.warning(msg)
            continue
        active.append(entry)

    if not active:
        return solution

    floors = np.array([congestion_price_floor(e.block, e.model, e.cap) for e in active])
    upper = np.array([e.model.p_max for e in active])
    weights = np.array([problem.weight(e) for e in active])
    grad = weights * np.array([e.model.alpha for e in active])

    prices, iterations = _projected_gradient(
        floors, upper, grad, problem.step_fraction, problem.tol, problem.max_iter
    )
    gap = float(np.max(np.abs(prices - floors), initial=0.0))
    if gap > AGREEMENT_TOL:
        msg = f"projected gradient and closed-form floors disagree by {gap:.3e}"
        solution.add_warning(msg)
        logger.warning(msg)

    projected = np.clip(prices - grad, floors, upper)
    solution.kkt_residual = float(np.linalg.norm(prices - projected))
    solution.closed_form_gap = gap
    solution.iterations = iterations

    objective = 0.0
    for e, p, floor, w in zip(active, prices, floors, weights):
        u = occupancy_of_price(e.model, p)
        g = rejection_at_occupancy(e.block, u)
        if e.cap is not None and g > e.cap + CAP_SLACK:
            raise NumericError(f"block '{e.id}': rejection {g:.12g} exceeds cap {e.cap:.12g} at the optimum")
        solution.prices[e.id] = float(p)
        solution.floors[e.id] = float(floor)
        solution.occupancies[e.id] = u
        solution.rejections[e.id] = g
        solution.caps[e.id] = None if e.cap is None or math.isinf(e.cap) else float(e.cap)
        objective += w * u
    solution.objective = objective

    logger.info("optimized %d block prices in %d iterations (objective %.6g, kkt %.3e)",
                len(active), iterations, objective, solution.kkt_residual)
    return solution


@dataclass
class ConvexityReport:
    """Second-difference and margin checks of g over a price grid"""
    block_id: str
    prices: List[float] = field(default_factory=list)
    rejections: List[float] = field(default_factory=list)
    second_differences: List[float] = field(default_factory=list)
    margins: List[float] = field(default_factory=list)
    violations: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    @property
    def is_empty(self) -> bool:
        return not self.second_differences and not self.margins


def verify_convexity(block: BlockFace, model: ElasticityModel,
                     grid: Sequence[float]) -> ConvexityReport:
    """
    Check that g is convex in price over a grid

    Slopes of g between neighbouring grid points must not decrease (up to
    1e-6 of the local slope scale), and the implicit-derivative margin must be
    nonnegative (down to 1e-8 of its scale) at each point with u > 0.

    Args:
        block: Block face
        model: Demand model
        grid: Prices in [p_min, p_max]

    Returns:
        ConvexityReport; empty when the grid has fewer than three points
    """
    report = ConvexityReport(block_id=block.id)
    prices = sorted(float(p) for p in grid)
    if len(prices) < 3:
        return report

    report.prices = prices
    report.rejections = [rejection_of_price(block, model, p) for p in prices]

    slopes = [
        (g1 - g0) / (p1 - p0)
        for (p0, g0), (p1, g1) in zip(zip(prices, report.rejections), zip(prices[1:], report.rejections[1:]))
        if p1 > p0
    ]
    for j, (s0, s1) in enumerate(zip(slopes, slopes[1:])):
        diff = s1 - s0
        report.second_differences.append(diff)
        scale = max(1.0, abs(s0), abs(s1))
        if diff < -1e-6 * scale:
            report.violations.append(f"slope of g decreases by {-diff:.3e} around p = {prices[j + 1]:.6g}")

    for p in prices:
        u = occupancy_of_price(model, p)
        if u <= 0:
            continue
        h = convexity_margin(block.params, u)
        report.margins.append(h)
        if h < -1e-8 * max(1.0, convexity_margin_scale(block.params, u)):
            report.violations.append(f"convexity margin {h:.3e} is negative at u = {u:.6g}")

    for v in report.violations:
        logger.warning("block '%s': %s", block.id, v)
    return report


def calibrate_alpha(elasticity: float, p0: float, u0: float) -> float:
    """
    Occupancy-per-dollar slope from a percentage elasticity

    alpha = |elasticity| * u0 / p0, the slope of the demand line through
    the reference point (p0, u0).
    """
    if p0 <= 0:
        raise InvalidInputError(f"reference price must be positive, got {p0}")
    if not 0 <= u0 < 1:
        raise InvalidInputError(f"reference occupancy must lie in [0, 1), got {u0}")
    return abs(elasticity) * u0 / p0


def anchored_model(alpha: float, p0: float, u0: float, p_min: float = 0.0,
                   p_max: Optional[float] = None) -> ElasticityModel:
    """Demand line with slope alpha passing through today's (p0, u0)"""
    return ElasticityModel(alpha=alpha, p_min=p_min, p_max=p_max, intercept=u0 + alpha * p0)


def baseline_rejection(block: BlockFace, model: Optional[ElasticityModel] = None) -> float:
    """Today's rejection rate: at the observed occupancy, else at the posted price"""
    if block.observed_u is not None:
        return rejection_at_occupancy(block, block.observed_u)
    if block.price is not None and model is not None:
        return rejection_of_price(block, model, block.price)
    raise InvalidInputError(f"block '{block.id}': needs observed_u or a price to compute a baseline")


def relative_caps(blocks: Iterable[BlockFace], fraction: float,
                  models: Optional[Mapping[str, ElasticityModel]] = None) -> Dict[str, float]:
    """
    Caps set to a fraction of each block's baseline rejection

    fraction = 0.2 cuts congestion by 80%.
    """
    if not 0 <= fraction <= 1:
        raise InvalidInputError(f"relative cap fraction must lie in [0, 1], got {fraction}")
    models = models or {}
    return {b.id: fraction * baseline_rejection(b, models.get(b.id)) for b in blocks}


__all__ = [
    "ConvexityReport",
    "occupancy_of_price",
    "price_for_occupancy",
    "rejection_at_occupancy",
    "rejection_of_price",
    "congestion_price_floor",
    "optimize_prices",
    "verify_convexity",
    "calibrate_alpha",
    "anchored_model",
    "baseline_rejection",
    "relative_caps",
]
