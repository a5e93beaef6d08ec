"""Converse bounds, small-case capacities and epsilon-privacy baselines.

Leakage arguments are in bits except for the epsilon-privacy helpers, which
take nats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .core import binary_entropy, inv_binary_entropy

MAXL_22_EDGE = math.log2(1.5)


@dataclass(frozen=True)
class BoundValue:
    """A bound with its raw formula value and the value capped to a meaningful range.

    Attributes:
        raw: formula value (may exceed 1, or be inf/nan when vacuous).
        clamped: min(raw, 1), or 1 when the bound is vacuous.
        clamped_flag: True when the raw value or an internal argument was clamped.
        vacuous: True when the formula gives no information (non-positive denominator).
    """

    raw: float
    clamped: float
    clamped_flag: bool = False
    vacuous: bool = False

    def __float__(self) -> float:
        return self.clamped


def _check_rho(rho: float) -> None:
    if math.isnan(rho) or rho < 0:
        raise ValueError(f"leakage must be non-negative, got {rho}")


def _clip01(x: float) -> tuple[float, bool]:
    if x < 0.0:
        return 0.0, True
    if x > 1.0:
        return 1.0, True
    return x, False


def tv_bound_mi(rho: float) -> float:
    """Total variation bound 1 - 2 H_b^-1(1 - rho) for MI leakage rho in [0, 1]."""
    _check_rho(rho)
    if rho > 1.0:
        raise ValueError(f"MI leakage bound needs rho <= 1, got {rho}")
    return 1.0 - 2.0 * inv_binary_entropy(1.0 - rho)


def tv_bound_maxl(rho: float) -> float:
    """Total variation bound 2^rho - 1 for maximal leakage rho."""
    _check_rho(rho)
    return 2.0**rho - 1.0


def entropy_diff_bound(delta: float, alphabet_size: int) -> float:
    """delta log2(k - 1) + H_b(delta): entropy gap of two laws at TV distance delta."""
    if alphabet_size < 2:
        raise ValueError("alphabet_size must be at least 2")
    if not 0.0 <= delta <= 1.0:
        raise ValueError(f"delta must lie in [0, 1], got {delta}")
    return delta * math.log2(alphabet_size - 1) + binary_entropy(delta)


def r_ub_mi(M: int, n: int, rho: float) -> BoundValue:
    """Rate upper bound under MI leakage rho (bits)."""
    _check_rho(rho)
    arg, flag = _clip01(1.0 - rho)
    h = inv_binary_entropy(arg)
    denom = 1.0 / n ** (M - 1) + 2.0 * sum(h / n ** (m - 1) for m in range(1, M))
    raw = 1.0 / denom
    return BoundValue(raw=raw, clamped=min(raw, 1.0), clamped_flag=flag or raw > 1.0)


def r_ub_maxl(M: int, n: int, rho: float) -> BoundValue:
    """Rate upper bound under maximal leakage rho (bits); vacuous once the denominator hits 0."""
    _check_rho(rho)
    denom = 1.0 + sum(n ** (-m) for m in range(1, M)) - sum((2.0**rho - 1.0) / n ** (m - 1) for m in range(1, M))
    if denom <= 0.0:
        return BoundValue(raw=math.inf, clamped=1.0, clamped_flag=True, vacuous=True)
    raw = 1.0 / denom
    return BoundValue(raw=raw, clamped=min(raw, 1.0), clamped_flag=denom < 1.0)


def capacity_22_mi_oneleak(rho: float) -> BoundValue:
    """Capacity of (2, 2) WPIR under MI leakage when only one server may leak."""
    _check_rho(rho)
    arg, flag = _clip01(1.0 - 2.0 * rho)
    raw = 1.0 / (1.0 + inv_binary_entropy(arg))
    return BoundValue(raw=raw, clamped=raw, clamped_flag=flag)


def capacity_22_maxl(rho: float) -> BoundValue:
    """Capacity of (2, 2) WPIR under maximal leakage: 1 / (5/2 - 2^rho).

    Past log2(3/2) the rate saturates at 1 and the result is flagged.
    """
    _check_rho(rho)
    if rho > MAXL_22_EDGE:
        return BoundValue(raw=1.0 / (2.5 - 2.0**rho) if 2.0**rho < 2.5 else math.inf, clamped=1.0, clamped_flag=True)
    raw = 1.0 / (2.5 - 2.0**rho)
    return BoundValue(raw=raw, clamped=min(raw, 1.0))


def lpir_rate(M: int, n: int, rho: float) -> float:
    """Rate of the epsilon-private baseline at budget rho (nats)."""
    _check_rho(rho)
    if math.isinf(rho):
        return 1.0
    k = n ** (M - 1) - 1
    return 1.0 / (1.0 + k / ((n - 1) * math.exp(rho) + k))


def lpir_ub(M: int, n: int, rho: float) -> float:
    """Upper bound on the epsilon-private rate at budget rho (nats)."""
    _check_rho(rho)
    if math.isinf(rho):
        return 1.0
    a = n * math.exp(rho)
    return (1.0 - 1.0 / a) / (1.0 - a ** (-M))
