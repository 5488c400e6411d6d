"""Cancellation-free forms of the exponential ratios used by the OU formulas."""

import math

# below these arguments the closed forms lose digits to cancellation
_RATIO_SERIES_BELOW = 1e-6
_RESIDUAL_SERIES_BELOW = 1e-3


def decay_ratio(x: float) -> float:
    """(1 - exp(-x)) / x, equal to 1 at x = 0."""
    if abs(x) < _RATIO_SERIES_BELOW:
        return 1.0 - x / 2.0 + x * x / 6.0
    return -math.expm1(-x) / x


def decay_residual(x: float) -> float:
    """1 - (1 - exp(-x)) / x, equal to 0 at x = 0."""
    if abs(x) < _RESIDUAL_SERIES_BELOW:
        return x / 2.0 - x * x / 6.0 + x**3 / 24.0 - x**4 / 120.0
    return 1.0 + math.expm1(-x) / x


def ou_variance_factor(theta: float, t: float) -> float:
    """(1 - exp(-2 theta t)) / (2 theta), finite for t = inf."""
    x = 2.0 * theta * t
    if x < 1.0:
        return t * decay_ratio(x)
    return -math.expm1(-x) / (2.0 * theta)
