"""Out-of-sample coverage backtest.

For each horizon the premium series is built and fitted on the training
window only. Every validation origin whose target date lies inside the data
is then forecast with the latest realized premium available at the origin.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .calibration import DiffusionParams, FitDiagnostics, OUParams, fit_sigma_s, ou_fit_mle
from .errors import EmptyInput, FitError, FxPremiumError, HorizonTooLong, LengthMismatch
from .forecaster import DEFAULT_LEVELS, forecast_log_mean, forecast_log_var, level_label, normal_quantile
from .market_data import MarketSeries, SplitSpec, compute_premium, split_train_validation, year_fraction

DEFAULT_HORIZONS = (10, 21, 63, 126, 252)
HORIZON_NAMES = {10: "2-Week", 21: "1-Month", 63: "3-Month", 126: "6-Month", 252: "1-Year"}


def horizon_name(days: int) -> str:
    return HORIZON_NAMES.get(days, f"{days}-Day")


@dataclass(frozen=True)
class BacktestConfig:
    horizons_days: tuple[int, ...] = DEFAULT_HORIZONS
    levels: tuple[float, ...] = DEFAULT_LEVELS
    train_fraction: float = 0.8
    stride_days: int = 1

    def __post_init__(self):
        object.__setattr__(self, "horizons_days", tuple(int(h) for h in self.horizons_days))
        object.__setattr__(self, "levels", tuple(float(lv) for lv in self.levels))
        h, lv = self.horizons_days, self.levels
        if not h or any(x < 1 for x in h) or list(h) != sorted(set(h)):
            raise ValueError(f"horizons must be distinct positive integers in ascending order, got {h}")
        if not lv or any(not (0.0 < x < 1.0) for x in lv) or list(lv) != sorted(set(lv)):
            raise ValueError(f"levels must be distinct values in (0, 1) in ascending order, got {lv}")
        if self.stride_days < 1:
            raise ValueError("stride_days must be >= 1")
        SplitSpec(self.train_fraction)


@dataclass(frozen=True)
class HorizonResult:
    horizon_days: int
    ou: OUParams
    diffusion: DiffusionParams
    diagnostics: FitDiagnostics
    n_evaluations: int
    coverage: dict[float, float]


@dataclass(frozen=True)
class HorizonFailure:
    horizon_days: int
    error: str
    message: str
    fit_error: bool = False


@dataclass(frozen=True)
class CoverageReport:
    config: BacktestConfig
    n_train: int
    n_validation: int
    results: dict[int, HorizonResult]
    failures: dict[int, HorizonFailure] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.failures

    def coverage(self, horizon_days: int, level: float) -> float:
        return self.results[horizon_days].coverage[level]

    def table_rows(self) -> list[list[str]]:
        """Machine-readable coverage table; coverage as a fraction, 17 digits."""
        header = ["Confidence Level"] + [horizon_name(h) for h in self.config.horizons_days]
        rows = [header]
        for lv in self.config.levels:
            row = [f"{level_label(lv)}%"]
            for h in self.config.horizons_days:
                res = self.results.get(h)
                row.append(format(res.coverage[lv], ".17g") if res else "NA")
            rows.append(row)
        return rows

    def format_table(self) -> str:
        """Human-readable table with percentages to 4 significant digits."""
        header = ["Confidence Level"] + [horizon_name(h) for h in self.config.horizons_days]
        body = []
        for lv in self.config.levels:
            row = [f"{level_label(lv)}%"]
            for h in self.config.horizons_days:
                res = self.results.get(h)
                row.append(f"{100 * res.coverage[lv]:.4g}%" if res else "NA")
            body.append(row)
        widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
        fmt = lambda r: "  ".join(c.rjust(w) for c, w in zip(r, widths))
        lines = [fmt(header), "  ".join("-" * w for w in widths)] + [fmt(r) for r in body]
        return "\n".join(lines)

    def to_dict(self) -> dict:
        horizons = {}
        for h in self.config.horizons_days:
            if h in self.results:
                r = self.results[h]
                horizons[str(h)] = {
                    "status": "ok",
                    "label": horizon_name(h),
                    "n_evaluations": r.n_evaluations,
                    "ou": {"theta": r.ou.theta, "mu": r.ou.mu, "sigma_k": r.ou.sigma_k},
                    "sigma_s": r.diffusion.sigma_s,
                    "log_likelihood": r.diagnostics.log_likelihood,
                    "n_obs": r.diagnostics.n_obs,
                    "ar1_coefficient": r.diagnostics.ar1_coefficient,
                    "delta_t": r.diagnostics.delta_t,
                    "cells": [
                        {"level": lv, "coverage": r.coverage[lv], "n_evaluations": r.n_evaluations}
                        for lv in self.config.levels
                    ],
                }
            else:
                f = self.failures[h]
                horizons[str(h)] = {"status": "error", "label": horizon_name(h), "error": f.error, "message": f.message}
        return {
            "config": {
                "horizons_days": list(self.config.horizons_days),
                "levels": list(self.config.levels),
                "train_fraction": self.config.train_fraction,
                "stride_days": self.config.stride_days,
            },
            "n_train": self.n_train,
            "n_validation": self.n_validation,
            "horizons": horizons,
        }

    def write_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            csv.writer(fh, lineterminator="\n").writerows(self.table_rows())

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, allow_nan=True) + "\n", encoding="utf-8")


def coverage_rate(intervals: Sequence[tuple[float, float]], realized: Sequence[float]) -> float:
    """Fraction of realized values inside their closed [lower, upper] interval."""
    iv = np.asarray(intervals, dtype=float).reshape(-1, 2) if len(intervals) else np.empty((0, 2))
    y = np.asarray(realized, dtype=float)
    if iv.shape[0] != y.size:
        raise LengthMismatch(f"{iv.shape[0]} intervals but {y.size} realized values")
    if y.size == 0:
        raise EmptyInput("coverage of an empty sample is undefined")
    return float(np.mean((iv[:, 0] <= y) & (y <= iv[:, 1])))


def fit_horizon(train: MarketSeries, horizon_days: int, stride_days: int = 1):
    """Premium construction and calibration on ``train`` for one horizon."""
    premium = compute_premium(train, horizon_days, stride_days)
    ou, diag = ou_fit_mle(premium)
    diff = fit_sigma_s(train, premium, ou)
    return ou, diff, diag


def _evaluate_horizon(series: MarketSeries, train: MarketSeries, n_train: int, h: int, config: BacktestConfig) -> HorizonResult:
    n = len(series)
    origins = np.arange(n_train, n - h)
    if origins.size == 0:
        raise HorizonTooLong(
            f"no validation origin has a {h}-day target inside the data "
            f"({n - n_train} validation rows)"
        )
    if origins[0] - h < 0:
        raise HorizonTooLong(f"first validation origin has no realized {h}-day premium")
    if len(train) <= h:
        raise HorizonTooLong(f"training window of {len(train)} rows is too short for a {h}-day horizon")
    ou, diff, diag = fit_horizon(train, h, config.stride_days)

    tau = year_fraction(h)
    log_s = series.log_spot
    rd = series.rate_diff
    # latest premium realized by the origin: the window [t - h, t]
    k0 = log_s[origins] - log_s[origins - h] - rd[origins - h] * tau
    mean = np.array([forecast_log_mean(log_s[t], rd[t], k, ou, tau) for t, k in zip(origins, k0)])
    sd = math.sqrt(forecast_log_var(diff.sigma_s, ou.sigma_k, ou.theta, tau))
    realized = series.spot[origins + h]
    coverage = {}
    for lv in config.levels:
        half = normal_quantile(lv) * sd
        intervals = np.column_stack([np.exp(mean - half), np.exp(mean + half)])
        coverage[lv] = coverage_rate(intervals, realized)
    return HorizonResult(h, ou, diff, diag, int(origins.size), coverage)


def run_backtest(series: MarketSeries, config: BacktestConfig = BacktestConfig(), strict: bool = True) -> CoverageReport:
    """Fit on the training window and score interval coverage on validation.

    With ``strict`` a failing horizon raises, annotated with the horizon.
    Otherwise failures are collected in the report and the remaining horizons
    still run.
    """
    train, valid = split_train_validation(series, SplitSpec(config.train_fraction))
    n_train = len(train)
    results: dict[int, HorizonResult] = {}
    failures: dict[int, HorizonFailure] = {}
    for h in config.horizons_days:
        try:
            results[h] = _evaluate_horizon(series, train, n_train, h, config)
        except FxPremiumError as exc:
            exc.horizon_days = h
            if strict:
                exc.args = (f"horizon {h} days: {exc}",)
                raise
            failures[h] = HorizonFailure(h, type(exc).__name__, str(exc), isinstance(exc, FitError))
    return CoverageReport(config, n_train, len(valid), results, failures)

