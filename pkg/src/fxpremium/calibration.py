"""Ornstein-Uhlenbeck calibration of the realized premium and spot volatility.

The premium is modelled as

    dK_t = theta * (mu - K_t) dt + sigma_k dZ_t

Sampled at a fixed step the process is an AR(1) with Gaussian innovations,

    K_{t+1} = a * K_t + b + eps,   a = exp(-theta * dt),
    b = mu * (1 - a),              Var(eps) = sigma_k^2 (1 - a^2) / (2 theta),

so least squares on consecutive pairs is the exact conditional MLE.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import date
from pathlib import Path

import numpy as np

from ._expansions import ou_variance_factor
from .errors import DegenerateSeries, InsufficientData, NonStationaryFit
from .market_data import MarketSeries, PremiumSeries, year_fraction

# series whose spread is below this (relative to their magnitude) carry only
# floating-point noise and are treated as constant
_CONSTANT_TOL = 1e-12


@dataclass(frozen=True)
class OUParams:
    """theta and sigma_k are per year; mu is in the premium's own units."""

    theta: float
    mu: float
    sigma_k: float

    def __post_init__(self):
        if not (math.isfinite(self.theta) and self.theta > 0):
            raise ValueError(f"theta must be positive and finite, got {self.theta}")
        if not math.isfinite(self.mu):
            raise ValueError(f"mu must be finite, got {self.mu}")
        if not (math.isfinite(self.sigma_k) and self.sigma_k >= 0):
            raise ValueError(f"sigma_k must be non-negative and finite, got {self.sigma_k}")

    @property
    def stationary_variance(self) -> float:
        return self.sigma_k**2 / (2.0 * self.theta)

    @property
    def half_life(self) -> float:
        """Years for a deviation from mu to halve."""
        return math.log(2.0) / self.theta


@dataclass(frozen=True)
class DiffusionParams:
    sigma_s: float

    def __post_init__(self):
        if not (math.isfinite(self.sigma_s) and self.sigma_s >= 0):
            raise ValueError(f"sigma_s must be non-negative and finite, got {self.sigma_s}")


@dataclass(frozen=True)
class FitDiagnostics:
    log_likelihood: float
    n_obs: int
    ar1_coefficient: float
    delta_t: float


def ou_transition(params: OUParams, k0, dt):
    """Mean and variance of K_{t+dt} given K_t = k0.

    Works elementwise when ``k0`` is an array; ``dt`` is a scalar.
    """
    if dt < 0:
        raise ValueError(f"dt must be non-negative, got {dt}")
    weight = -math.expm1(-params.theta * dt)
    mean = k0 + (params.mu - k0) * weight
    variance = params.sigma_k**2 * ou_variance_factor(params.theta, dt)
    return mean, variance


def ou_log_likelihood(values, params: OUParams, delta_t: float) -> float:
    """Gaussian transition-density log-likelihood of consecutive observations."""
    k = np.asarray(values, dtype=float)
    mean, var = ou_transition(params, k[:-1], delta_t)
    resid = k[1:] - mean
    if var == 0.0:
        return math.inf if not np.any(resid) else -math.inf
    m = resid.size
    return float(-0.5 * (m * math.log(2.0 * math.pi * var) + np.dot(resid, resid) / var))


def ou_fit_mle(premium: PremiumSeries | np.ndarray, delta_t: float | None = None) -> tuple[OUParams, FitDiagnostics]:
    """Exact-discretization conditional MLE of (theta, mu, sigma_k).

    Parameters
    ----------
    premium : PremiumSeries or array
        Observations equally spaced by ``delta_t`` years.
    delta_t : float, optional
        Step in years. Defaults to the premium's stride over 252.

    Raises
    ------
    InsufficientData
        Fewer than 3 observations.
    NonStationaryFit
        Constant series, or fitted AR(1) slope outside (0, 1): the data show
        no mean reversion and theta is undefined.
    DegenerateSeries
        The regressor is constant while the series is not.
    """
    if isinstance(premium, PremiumSeries):
        values = premium.values
        if delta_t is None:
            delta_t = premium.delta_t
    else:
        values = np.asarray(premium, dtype=float)
    if delta_t is None or not delta_t > 0:
        raise ValueError(f"delta_t must be positive, got {delta_t}")
    n = values.size
    if n < 3:
        raise InsufficientData(f"OU fit needs at least 3 observations, got {n}")
    if not np.isfinite(values).all():
        raise ValueError("premium contains non-finite values")

    scale = max(1.0, float(np.max(np.abs(values))))
    if np.ptp(values) <= _CONSTANT_TOL * scale:
        raise NonStationaryFit("premium series is constant; mean-reversion rate is unidentifiable")

    x, y = values[:-1], values[1:]
    x_bar, y_bar = x.mean(), y.mean()
    xc = x - x_bar
    s_xx = float(np.dot(xc, xc))
    if s_xx <= (_CONSTANT_TOL * scale) ** 2 * x.size:
        raise DegenerateSeries("lagged premium has no variation; AR(1) slope is undefined")
    a = float(np.dot(xc, y - y_bar)) / s_xx
    if not (0.0 < a < 1.0):
        raise NonStationaryFit(f"AR(1) slope {a:.6g} outside (0, 1); no mean reversion detected")
    b = y_bar - a * x_bar
    resid = y - (a * x + b)
    v = float(np.dot(resid, resid)) / resid.size

    theta = -math.log(a) / delta_t
    params = OUParams(theta=theta, mu=float(b / (1.0 - a)), sigma_k=math.sqrt(v * 2.0 * theta / (1.0 - a * a)))
    diag = FitDiagnostics(
        log_likelihood=ou_log_likelihood(values, params, delta_t),
        n_obs=int(n),
        ar1_coefficient=a,
        delta_t=float(delta_t),
    )
    return params, diag


def fit_sigma_s(train: MarketSeries, premium: PremiumSeries, ou: OUParams, delta_t: float = year_fraction(1)) -> DiffusionParams:
    """Diffusion volatility left after the premium's share of return variance.

    One-step log returns are stripped of the model drift
    (i_US - i_KR + mu / tau_h) * delta_t and their sample variance is
    annualized. The OU term's share of that rate over the premium horizon,
    sigma_k^2 (1 - e^{-2 theta tau_h}) / (2 theta tau_h), is removed and the
    remainder is sigma_s^2, floored at zero. With this split the forecast
    variance at tau_h equals the observed return variance over tau_h.

    The premium enters the drift at its fitted long-run level: the realized
    h-period premium contains the day's own return, and its variation is
    already accounted for by the subtracted share.
    """
    if len(train) < 3:
        raise InsufficientData(f"sigma_s estimation needs at least 3 rows, got {len(train)}")
    tau_h = premium.horizon_years
    returns = np.diff(train.log_spot)
    drift = (train.rate_diff[:-1] + ou.mu / tau_h) * delta_t
    total = float(np.var(returns - drift, ddof=1)) / delta_t
    premium_share = ou.sigma_k**2 * ou_variance_factor(ou.theta, tau_h) / tau_h
    return DiffusionParams(sigma_s=math.sqrt(max(0.0, total - premium_share)))


@dataclass(frozen=True)
class ParameterDocument:
    """Fitted parameters as written by ``fit`` and read by ``forecast``."""

    theta: float
    mu: float
    sigma_k: float
    sigma_s: float
    delta_t: float
    n_obs: int
    log_likelihood: float
    fit_date: date
    horizon_days: int | None = None

    @classmethod
    def from_fit(cls, ou: OUParams, diff: DiffusionParams, diag: FitDiagnostics, fit_date: date, horizon_days: int | None = None):
        return cls(ou.theta, ou.mu, ou.sigma_k, diff.sigma_s, diag.delta_t, diag.n_obs,
                   diag.log_likelihood, fit_date, horizon_days)

    @property
    def ou(self) -> OUParams:
        return OUParams(self.theta, self.mu, self.sigma_k)

    @property
    def diffusion(self) -> DiffusionParams:
        return DiffusionParams(self.sigma_s)

    def dumps(self) -> str:
        lines = [f"{key} = {format(getattr(self, key), '.17g')}"
                 for key in ("theta", "mu", "sigma_k", "sigma_s", "delta_t")]
        lines.append(f"n_obs = {self.n_obs}")
        lines.append(f"log_likelihood = {format(self.log_likelihood, '.17g')}")
        lines.append(f"fit_date = {self.fit_date.isoformat()}")
        if self.horizon_days is not None:
            lines.append(f"horizon_days = {self.horizon_days}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "ParameterDocument":
        raw = parse_key_values(text)
        required = ("theta", "mu", "sigma_k", "sigma_s", "delta_t", "n_obs", "log_likelihood", "fit_date")
        missing = [k for k in required if k not in raw]
        if missing:
            raise ValueError(f"parameter document lacks key(s): {', '.join(missing)}")
        return cls(
            theta=float(raw["theta"]),
            mu=float(raw["mu"]),
            sigma_k=float(raw["sigma_k"]),
            sigma_s=float(raw["sigma_s"]),
            delta_t=float(raw["delta_t"]),
            n_obs=int(raw["n_obs"]),
            log_likelihood=float(raw["log_likelihood"]),
            fit_date=date.fromisoformat(raw["fit_date"]),
            horizon_days=int(raw["horizon_days"]) if "horizon_days" in raw else None,
        )

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def read(cls, path: str | Path) -> "ParameterDocument":
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def parse_key_values(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; blank lines and ``#`` comments are skipped."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out
