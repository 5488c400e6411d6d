"""Closed-form log-normal predictive distribution of the future spot rate.

Rates observed at the origin are held fixed over the horizon. With
tau = horizon in years and x = theta * tau,

    E[log S_{t+h}]   = log S_t + r * tau + (k0 / theta)(1 - e^{-x})
                       + mu * (tau - (1 - e^{-x}) / theta)
    Var[log S_{t+h}] = sigma_s^2 tau + sigma_k^2 (1 - e^{-2x}) / (2 theta)
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import date
from typing import Sequence

import numpy as np
from scipy.special import ndtri

from ._expansions import decay_ratio, decay_residual, ou_variance_factor
from .calibration import DiffusionParams, OUParams
from .errors import DegenerateDistribution, InvalidLevel, NonPositivePrice
from .market_data import MarketRow, year_fraction

DEFAULT_LEVELS = (0.50, 0.60, 0.70, 0.80, 0.90, 0.95, 0.99)


@dataclass(frozen=True)
class ForecastDistribution:
    mean_log: float
    var_log: float
    horizon_years: float
    origin_spot: float
    origin_date: date | None = None

    def __post_init__(self):
        if not (math.isfinite(self.var_log) and self.var_log >= 0):
            raise ValueError(f"var_log must be non-negative and finite, got {self.var_log}")
        if not math.isfinite(self.mean_log):
            raise ValueError(f"mean_log must be finite, got {self.mean_log}")
        if self.horizon_years < 0:
            raise ValueError("horizon_years must be non-negative")

    @property
    def sd_log(self) -> float:
        return math.sqrt(self.var_log)

    @property
    def median(self) -> float:
        return math.exp(self.mean_log)


def forecast_log_mean(log_s0: float, rate_diff: float, k0: float, params: OUParams, horizon_years: float) -> float:
    if horizon_years < 0:
        raise ValueError("horizon_years must be non-negative")
    tau = horizon_years
    x = params.theta * tau
    # (1 - e^{-x}) / theta and tau - (1 - e^{-x}) / theta, both cancellation-free
    decayed = tau * decay_ratio(x)
    residual = tau * decay_residual(x)
    return log_s0 + rate_diff * tau + k0 * decayed + params.mu * residual


def ou_integral_variance(theta: float, t: float) -> float:
    """Variance of int_0^t exp(-theta (t - s)) dZ_s, i.e. (1 - e^{-2 theta t}) / (2 theta)."""
    if t < 0:
        raise ValueError("t must be non-negative")
    if not theta > 0:
        raise ValueError("theta must be positive")
    return ou_variance_factor(theta, t)


def forecast_log_var(sigma_s: float, sigma_k: float, theta: float, horizon_years: float) -> float:
    if horizon_years < 0:
        raise ValueError("horizon_years must be non-negative")
    return sigma_s**2 * horizon_years + sigma_k**2 * ou_integral_variance(theta, horizon_years)


def make_forecast(origin: MarketRow, k0: float, ou: OUParams, diff: DiffusionParams, horizon_days: int) -> ForecastDistribution:
    """Predictive law of S_{t+h} issued at ``origin`` with seed premium ``k0``."""
    if horizon_days < 0:
        raise ValueError("horizon_days must be non-negative")
    tau = year_fraction(horizon_days)
    return ForecastDistribution(
        mean_log=forecast_log_mean(math.log(origin.spot), origin.rate_diff, k0, ou, tau),
        var_log=forecast_log_var(diff.sigma_s, ou.sigma_k, ou.theta, tau),
        horizon_years=tau,
        origin_spot=origin.spot,
        origin_date=origin.date,
    )


def normal_quantile(level: float) -> float:
    """Two-sided standard normal critical value for a central ``level`` interval."""
    _check_level(level)
    return float(ndtri(0.5 + 0.5 * level))


def _check_level(level: float) -> None:
    if not (0.0 <= level < 1.0):
        raise InvalidLevel(f"confidence level must lie in [0, 1), got {level}")


def confidence_interval(dist: ForecastDistribution, level: float) -> tuple[float, float]:
    z = normal_quantile(level)
    half = z * dist.sd_log
    return math.exp(dist.mean_log - half), math.exp(dist.mean_log + half)


def lognormal_pdf(dist: ForecastDistribution, s):
    """Log-normal density of S_{t+h}; accepts a scalar or an array of prices."""
    if dist.var_log == 0.0:
        raise DegenerateDistribution("zero variance: the predictive law is a point mass")
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr <= 0):
        raise NonPositivePrice("density is defined for positive prices only")
    var = dist.var_log
    dens = np.exp(-((np.log(s_arr) - dist.mean_log) ** 2) / (2.0 * var)) / (s_arr * math.sqrt(2.0 * math.pi * var))
    return float(dens) if dens.ndim == 0 else dens


def quantile_fan(dist: ForecastDistribution, levels: Sequence[float]) -> list[tuple[float, float, float]]:
    """Nested (level, lower, upper) bands for ascending ``levels``."""
    levels = list(levels)
    for lv in levels:
        _check_level(lv)
    if any(b < a for a, b in zip(levels, levels[1:])):
        raise InvalidLevel("levels must be sorted ascending")
    return [(lv, *confidence_interval(dist, lv)) for lv in levels]


def level_label(level: float) -> str:
    """50 for 0.5, 99.5 for 0.995."""
    return format(round(level * 100, 10), "g")


def forecast_record(dist: ForecastDistribution, horizon_days: int, levels: Sequence[float] = DEFAULT_LEVELS) -> dict:
    """Flat output record: origin, moments, then lower/upper per level."""
    rec = {
        "origin_date": dist.origin_date.isoformat() if dist.origin_date else "",
        "horizon_days": int(horizon_days),
        "mean_log": dist.mean_log,
        "var_log": dist.var_log,
    }
    for lv, lo, hi in quantile_fan(dist, levels):
        rec[f"lower_{level_label(lv)}"] = lo
        rec[f"upper_{level_label(lv)}"] = hi
    return rec
