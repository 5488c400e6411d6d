"""Monte Carlo simulation of the coupled spot / premium system.

    dS_t / S_t = (i_US - i_KR + K_t) dt + sigma_s dW_t
    dK_t       = theta (mu - K_t) dt + sigma_k dZ_t,     W independent of Z

log S is stepped with a log-Euler update using the premium at the start of
each step. The premium uses either its exact Gaussian transition or an
Euler step.

Paths are grouped in fixed blocks of ``PATHS_PER_BLOCK``. Each block draws
from its own Philox stream keyed by (seed, block index), and block moments are
merged in block order. Output therefore does not depend on thread count.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import date
from typing import Sequence

import numpy as np

from .calibration import DiffusionParams, OUParams, ou_transition
from .forecaster import forecast_log_mean, forecast_log_var
from .market_data import MarketSeries, year_fraction

PATHS_PER_BLOCK = 8192
SCHEMES = ("exact_ou", "euler")


@dataclass(frozen=True)
class SimulationConfig:
    n_paths: int
    n_steps: int
    dt: float = year_fraction(1)
    seed: int = 0
    scheme: str = "exact_ou"
    # subtract sigma_s^2 / 2 from the log drift (price-SDE convention)
    ito_correction: bool = False

    def __post_init__(self):
        if self.n_paths < 1 or self.n_steps < 1:
            raise ValueError("n_paths and n_steps must be >= 1")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")


@dataclass(frozen=True, eq=False)
class PathEnsembleStats:
    """Per-step cross-sectional statistics; every array has n_steps + 1 entries."""

    times: np.ndarray
    mean_log_s: np.ndarray
    var_log_s: np.ndarray
    mc_standard_error: np.ndarray
    var_standard_error: np.ndarray
    mean_k: np.ndarray
    var_k: np.ndarray
    final_skewness: float
    final_excess_kurtosis: float
    n_paths: int

    def __eq__(self, other):
        if not isinstance(other, PathEnsembleStats):
            return NotImplemented
        arrays = ("times", "mean_log_s", "var_log_s", "mc_standard_error", "var_standard_error", "mean_k", "var_k")
        return (
            all(np.array_equal(getattr(self, a), getattr(other, a), equal_nan=True) for a in arrays)
            and np.array_equal([self.final_skewness, self.final_excess_kurtosis, self.n_paths],
                               [other.final_skewness, other.final_excess_kurtosis, other.n_paths], equal_nan=True)
        )


@dataclass
class _Moments:
    """Count, mean and central power sums M2..M4 per step."""

    n: int
    mean: np.ndarray
    m2: np.ndarray
    m3: np.ndarray = field(default=None)
    m4: np.ndarray = field(default=None)

    @classmethod
    def of(cls, x: np.ndarray) -> "_Moments":
        # x has shape (steps, paths); shifting by the first path keeps identical
        # paths exactly identical, so a deterministic system has zero spread
        shift = x[:, :1]
        mean = shift[:, 0] + (x - shift).mean(axis=1)
        d = (x - shift) - (mean - shift[:, 0])[:, None]
        d2 = d * d
        return cls(x.shape[1], mean, d2.sum(axis=1), (d2 * d).sum(axis=1), (d2 * d2).sum(axis=1))

    def merge(self, other: "_Moments") -> "_Moments":
        na, nb = self.n, other.n
        n = na + nb
        delta = other.mean - self.mean
        d2 = delta * delta
        mean = self.mean + delta * nb / n
        m2 = self.m2 + other.m2 + d2 * na * nb / n
        m3 = (self.m3 + other.m3 + d2 * delta * na * nb * (na - nb) / n**2
              + 3.0 * delta * (na * other.m2 - nb * self.m2) / n)
        m4 = (self.m4 + other.m4 + d2 * d2 * na * nb * (na * na - na * nb + nb * nb) / n**3
              + 6.0 * d2 * (na * na * other.m2 + nb * nb * self.m2) / n**2
              + 4.0 * delta * (na * other.m3 - nb * self.m3) / n)
        return _Moments(n, mean, m2, m3, m4)


def _block_rng(seed: int, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence(seed % 2**64, spawn_key=(block,))
    return np.random.Generator(np.random.Philox(ss))


def _blocks(n_paths: int) -> list[tuple[int, int]]:
    return [(b, min(PATHS_PER_BLOCK, n_paths - start))
            for b, start in enumerate(range(0, n_paths, PATHS_PER_BLOCK))]


@dataclass(frozen=True)
class _Model:
    config: SimulationConfig
    ou: OUParams
    diff: DiffusionParams
    log_s0: float
    k0: float
    rate_diff: float

    def run(self, block: int, size: int):
        """Full paths and shocks for one block, each shaped (steps, size)."""
        cfg, ou = self.config, self.ou
        rng = _block_rng(cfg.seed, block)
        dt = cfg.dt
        sqrt_dt = math.sqrt(dt)
        sigma_s = self.diff.sigma_s
        drift_shift = self.rate_diff - (0.5 * sigma_s**2 if cfg.ito_correction else 0.0)
        if cfg.scheme == "exact_ou":
            decay = math.exp(-ou.theta * dt)
            k_sd = math.sqrt(ou_transition(ou, 0.0, dt)[1])

        log_s = np.empty((cfg.n_steps + 1, size))
        k = np.empty((cfg.n_steps + 1, size))
        log_s[0] = self.log_s0
        k[0] = self.k0
        shocks = rng.standard_normal((cfg.n_steps, 2, size))
        for i in range(cfg.n_steps):
            eta, xi = shocks[i]
            log_s[i + 1] = log_s[i] + (drift_shift + k[i]) * dt + sigma_s * sqrt_dt * xi
            if cfg.scheme == "exact_ou":
                k[i + 1] = k[i] * decay + ou.mu * (1.0 - decay) + k_sd * eta
            else:
                k[i + 1] = k[i] + ou.theta * (ou.mu - k[i]) * dt + ou.sigma_k * sqrt_dt * eta
        return log_s, k, shocks

    def moments(self, block: int, size: int) -> tuple[_Moments, _Moments]:
        log_s, k, _ = self.run(block, size)
        return _Moments.of(log_s), _Moments.of(k)


def _merged(model: _Model, threads: int | None):
    blocks = _blocks(model.config.n_paths)
    if threads == 1 or len(blocks) == 1:
        parts = [model.moments(b, size) for b, size in blocks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda bs: model.moments(*bs), blocks))
    s_mom, k_mom = parts[0]
    for s_part, k_part in parts[1:]:
        s_mom = s_mom.merge(s_part)
        k_mom = k_mom.merge(k_part)
    return s_mom, k_mom


def simulate_system(
    config: SimulationConfig,
    ou: OUParams,
    diff: DiffusionParams,
    s0: float,
    k0: float,
    rate_diff: float,
    threads: int | None = None,
) -> PathEnsembleStats:
    """Ensemble statistics of log S and K at every step.

    ``threads`` only changes wall time; results are bit-identical for any value.
    """
    if not s0 > 0:
        raise ValueError("s0 must be positive")
    model = _Model(config, ou, diff, math.log(s0), float(k0), float(rate_diff))
    s_mom, k_mom = _merged(model, threads)
    n = s_mom.n
    if n > 1:
        var = s_mom.m2 / (n - 1)
        var_k = k_mom.m2 / (n - 1)
        m2_pop = s_mom.m2 / n
        se_mean = np.sqrt(var / n)
        se_var = np.sqrt(np.maximum(s_mom.m4 / n - m2_pop**2, 0.0) / n)
        fm2, fm3, fm4 = m2_pop[-1], s_mom.m3[-1] / n, s_mom.m4[-1] / n
        skew = fm3 / fm2**1.5 if fm2 > 0 else 0.0
        kurt = fm4 / fm2**2 - 3.0 if fm2 > 0 else 0.0
    else:
        warnings.warn("a single path gives no usable Monte Carlo standard error", RuntimeWarning, stacklevel=2)
        zeros = np.zeros_like(s_mom.mean)
        var, var_k = zeros, zeros.copy()
        se_mean = np.full_like(zeros, np.nan)
        se_var = se_mean.copy()
        skew = kurt = math.nan
    return PathEnsembleStats(
        times=np.arange(config.n_steps + 1) * config.dt,
        mean_log_s=s_mom.mean,
        var_log_s=var,
        mc_standard_error=se_mean,
        var_standard_error=se_var,
        mean_k=k_mom.mean,
        var_k=var_k,
        final_skewness=float(skew),
        final_excess_kurtosis=float(kurt),
        n_paths=n,
    )


@dataclass(frozen=True, eq=False)
class SimulatedPaths:
    log_s: np.ndarray
    k: np.ndarray
    premium_shocks: np.ndarray
    spot_shocks: np.ndarray


def simulate_paths(config: SimulationConfig, ou: OUParams, diff: DiffusionParams, s0: float, k0: float, rate_diff: float) -> SimulatedPaths:
    """Raw paths, shaped (steps, paths); intended for small ensembles."""
    model = _Model(config, ou, diff, math.log(s0), float(k0), float(rate_diff))
    runs = [model.run(b, size) for b, size in _blocks(config.n_paths)]
    return SimulatedPaths(
        log_s=np.concatenate([r[0] for r in runs], axis=1),
        k=np.concatenate([r[1] for r in runs], axis=1),
        premium_shocks=np.concatenate([r[2][:, 0] for r in runs], axis=1),
        spot_shocks=np.concatenate([r[2][:, 1] for r in runs], axis=1),
    )


def integrated_ou_variance(theta: float, t: float) -> float:
    """Var of int_0^t X_s ds for a unit-volatility OU noise X started at 0.

    This is the premium's actual contribution to Var[log S_t] under the
    coupled dynamics: (t - 2(1 - e^{-x})/theta + (1 - e^{-2x})/(2 theta)) / theta^2
    with x = theta t.
    """
    x = theta * t
    if x < 1e-3:
        return t**3 * (1.0 / 3.0 - x / 4.0 + 7.0 * x * x / 60.0 - x**3 / 24.0)
    return (t + 2.0 * math.expm1(-x) / theta - math.expm1(-2.0 * x) / (2.0 * theta)) / theta**2


@dataclass(frozen=True)
class HorizonGap:
    """MC-minus-analytic gaps at one horizon, in MC standard errors.

    ``var_gap_in_se`` compares with the closed-form forecast variance;
    ``integrated_var_gap_in_se`` compares with the exact variance of the
    integrated premium noise.
    """

    horizon: float
    mean_gap_in_se: float
    var_gap_in_se: float
    integrated_var_gap_in_se: float
    mc_mean: float
    mc_var: float
    analytic_mean: float
    analytic_var: float
    integrated_var: float
    mean_se: float
    var_se: float


def _in_se(diff: float, se: float, scale: float) -> float:
    # gaps at rounding level are zero, whatever the (possibly rounding-level) SE
    if abs(diff) <= 1e-12 * max(1.0, abs(scale)):
        return 0.0
    if se > 0:
        return diff / se
    return math.copysign(math.inf, diff)


def mc_vs_analytic(
    config: SimulationConfig,
    ou: OUParams,
    diff: DiffusionParams,
    s0: float,
    k0: float,
    rate_diff: float,
    horizons: Sequence[float],
    threads: int | None = None,
    stats: PathEnsembleStats | None = None,
) -> list[HorizonGap]:
    """Compare simulated moments of log S with the closed-form forecast.

    ``horizons`` are in years and must be whole multiples of ``config.dt``
    within the simulated span.
    """
    steps = []
    for h in horizons:
        step = round(h / config.dt)
        if step < 0 or step > config.n_steps or abs(step * config.dt - h) > 1e-9 * max(1.0, h):
            raise ValueError(f"horizon {h} is not a simulated step (dt={config.dt}, n_steps={config.n_steps})")
        steps.append(step)
    if stats is None:
        stats = simulate_system(config, ou, diff, s0, k0, rate_diff, threads=threads)
    log_s0 = math.log(s0)
    out = []
    for h, step in zip(horizons, steps):
        mean_a = forecast_log_mean(log_s0, rate_diff, k0, ou, h)
        var_a = forecast_log_var(diff.sigma_s, ou.sigma_k, ou.theta, h)
        var_int = diff.sigma_s**2 * h + ou.sigma_k**2 * integrated_ou_variance(ou.theta, h)
        mc_mean = float(stats.mean_log_s[step])
        mc_var = float(stats.var_log_s[step])
        se_m = float(stats.mc_standard_error[step])
        se_v = float(stats.var_standard_error[step])
        out.append(HorizonGap(
            horizon=h,
            mean_gap_in_se=_in_se(mc_mean - mean_a, se_m, mean_a),
            var_gap_in_se=_in_se(mc_var - var_a, se_v, var_a),
            integrated_var_gap_in_se=_in_se(mc_var - var_int, se_v, var_int),
            mc_mean=mc_mean,
            mc_var=mc_var,
            analytic_mean=mean_a,
            analytic_var=var_a,
            integrated_var=var_int,
            mean_se=se_m,
            var_se=se_v,
        ))
    return out


def simulate_market(
    ou: OUParams,
    diff: DiffusionParams,
    n_days: int,
    seed: int,
    s0: float = 1100.0,
    us_yield: float = 0.03,
    kr_yield: float = 0.035,
    k0: float | None = None,
    start: date = date(2010, 1, 4),
    ito_correction: bool = False,
) -> MarketSeries:
    """One daily market path from the model, on consecutive business days.

    Yields are held constant. The premium starts at ``k0``, or at ``mu`` when
    not given.
    """
    config = SimulationConfig(n_paths=1, n_steps=n_days - 1, seed=seed, ito_correction=ito_correction)
    model = _Model(config, ou, diff, math.log(s0), ou.mu if k0 is None else float(k0), us_yield - kr_yield)
    log_s, _, _ = model.run(0, 1)
    dates = np.busday_offset(np.datetime64(start, "D"), np.arange(n_days), roll="forward")
    spot = np.exp(log_s[:, 0])
    spot[0] = s0
    return MarketSeries(dates, spot, np.full(n_days, us_yield), np.full(n_days, kr_yield))
