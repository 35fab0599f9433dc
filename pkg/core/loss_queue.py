"""
loss_queue.py - Single Block-Face Loss Queue

A block-face with k stalls and per-stall service rate mu, fed at total rate y,
is an Erlang loss system: arrivals that find every stall taken are rejected.

Responsibilities:
- stationary distribution of the birth-death chain (no factorials)
- blocking probability via the Erlang B recursion
- occupancy and its derivative in the arrival rate
"""

import math

import numpy as np

from .errors import InvalidInputError
from .models_net import LossProfile, QueueParams


def _check_rate(y: float) -> float:
    """Validate an arrival rate"""
    try:
        y = float(y)
    except (TypeError, ValueError):
        raise InvalidInputError(f"arrival rate must be a number, got {y!r}") from None
    if not math.isfinite(y) or y < 0:
        raise InvalidInputError(f"arrival rate must be finite and nonnegative, got {y!r}")
    return y


def stationary_distribution(params: QueueParams, y: float) -> LossProfile:
    """
    Stationary distribution of the loss queue at total arrival rate y

    Terms rho^i/i! are built by the ratio recurrence term_i = term_{i-1} * rho/i,
    anchored at the mode so that no intermediate value overflows.

    Args:
        params: Block parameters
        y: Total arrival rate (vehicles/hour)

    Returns:
        LossProfile with pi_0..pi_k, blocking = pi_k and occupancy
    """
    y = _check_rate(y)
    k = params.k
    rho = y / params.mu

    if rho == 0.0:
        pi = np.zeros(k + 1)
        pi[0] = 1.0
    else:
        mode = min(k, int(rho))
        terms = np.empty(k + 1)
        terms[mode] = 1.0
        if mode < k:
            # above the mode each ratio rho/i is below 1
            terms[mode + 1:] = np.cumprod(rho / np.arange(mode + 1, k + 1))
        if mode > 0:
            # below the mode, walk down with ratios i/rho <= 1
            down = np.cumprod(np.arange(mode, 0, -1) / rho)
            terms[:mode] = down[::-1]
        pi = terms / terms.sum()

    return LossProfile(
        y=y,
        pi=tuple(float(p) for p in pi),
        blocking=float(pi[-1]),
        occupancy=rho * float(pi[:-1].sum()) / k,
    )


def erlang_blocking(params: QueueParams, y: float) -> float:
    """
    Blocking probability pi_k by the Erlang B recursion

    B_0 = 1, B_j = rho*B_{j-1} / (j + rho*B_{j-1}); stable for large k.
    """
    y = _check_rate(y)
    rho = y / params.mu
    b = 1.0
    for j in range(1, params.k + 1):
        a = rho * b
        b = a / (j + a)
    return b


def _blocking_and_slope(params: QueueParams, rho: float):
    """Erlang B and its derivative in rho, differentiating the recursion term by term"""
    b, db = 1.0, 0.0
    for j in range(1, params.k + 1):
        a = rho * b
        da = b + rho * db
        denom = j + a
        b, db = a / denom, j * da / (denom * denom)
    return b, db


def carried_fraction(params: QueueParams, y: float) -> float:
    """
    Share of arrivals that find a free stall, 1 - pi_k

    Taken from the last recursion step, 1 - B_k = k / (k + rho*B_{k-1}),
    so it keeps full precision when pi_k is close to 1.
    """
    y = _check_rate(y)
    rho = y / params.mu
    b = 1.0
    for j in range(1, params.k):
        a = rho * b
        b = a / (j + a)
    return params.k / (params.k + rho * b)


def occupancy(params: QueueParams, y: float) -> float:
    """
    Long-run fraction of stalls in use

    u = y * (1 - pi_k) / (k * mu)
    """
    return carried_load(params, y) / params.capacity


def occupancy_slope(params: QueueParams, y: float) -> float:
    """
    Analytic derivative du/dy

    d/dy [rho (1 - B) / k] = (1 - B - rho * dB/drho) / (k * mu)
    """
    y = _check_rate(y)
    rho = y / params.mu
    b, db = _blocking_and_slope(params, rho)
    return (1.0 - b - rho * db) / (params.k * params.mu)


def carried_load(params: QueueParams, y: float) -> float:
    """Rate at which drivers actually park, y * (1 - pi_k)"""
    fraction = carried_fraction(params, y)
    return float(y) * fraction
