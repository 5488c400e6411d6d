"""Acceptance criteria, one PASS/FAIL line each (see the terminal summary).

Tolerances are fixed in advance and are not tuned to the observed outcome.
Criteria that fail under the implemented model are left failing; the analysis
lives in the project's decision notes and in README.md.
"""

import contextlib
import csv
import math
import os
import time
import warnings
from datetime import date

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st
from scipy.integrate import quad

from conftest import ou_path, record
from fxpremium.backtester import BacktestConfig, run_backtest
from fxpremium.calibration import DiffusionParams, OUParams, ou_fit_mle, ou_transition
from fxpremium.cli import main
from fxpremium.forecaster import (
    ForecastDistribution,
    confidence_interval,
    forecast_log_var,
    lognormal_pdf,
    ou_integral_variance,
)
from fxpremium.market_data import MarketSeries, write_market_csv
from fxpremium.simulation import PATHS_PER_BLOCK, SimulationConfig, mc_vs_analytic, simulate_market, simulate_system

# frozen quadrature oracle for (1 - e^{-2 theta t}) / (2 theta) at theta = 2, t = 1
INTEGRAL_VAR_2_1 = 0.24542109027781647
PROPERTY_CASES = 1000
PROPERTY_SETTINGS = settings(max_examples=PROPERTY_CASES, deadline=None, derandomize=True,
                             suppress_health_check=[HealthCheck.too_slow, HealthCheck.filter_too_much])


@contextlib.contextmanager
def criterion(name: str, detail):
    """Record PASS when the block completes, FAIL with the error otherwise."""
    try:
        yield
    except Exception as exc:
        record(name, False, f"{detail()} | {type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}")
        raise
    record(name, True, detail())


# 1. Monte Carlo versus closed form ------------------------------------------------------

MC_OU = OUParams(2.0, 0.0, 0.05)
MC_DIFF = DiffusionParams(0.10)


@pytest.fixture(scope="module")
def mc_run():
    cfg = SimulationConfig(n_paths=200_000, n_steps=252, seed=0, scheme="exact_ou")
    start = time.perf_counter()
    gap = mc_vs_analytic(cfg, MC_OU, MC_DIFF, 1000.0, 0.02, 0.0, [1.0], threads=os.cpu_count())[0]
    return gap, time.perf_counter() - start


def test_ac1_mc_mean_and_runtime(mc_run):
    gap, elapsed = mc_run
    detail = lambda: (f"mean gap {gap.mean_gap_in_se:+.2f} SE (limit 3), "
                      f"MC {gap.mc_mean:.8f} vs {gap.analytic_mean:.8f}, runtime {elapsed:.1f} s (limit 60)")
    with criterion("AC1a MC mean of log S vs closed form", detail):
        assert abs(gap.mean_gap_in_se) <= 3.0
        assert elapsed <= 60.0


def test_ac1_mc_variance(mc_run):
    gap, _ = mc_run
    detail = lambda: (f"var gap {gap.var_gap_in_se:+.2f} SE (limit 3), MC {gap.mc_var:.8f} vs closed form "
                      f"{gap.analytic_var:.8f}; exact integrated-premium variance {gap.integrated_var:.8f} "
                      f"is {gap.integrated_var_gap_in_se:+.2f} SE away")
    assert gap.analytic_var == pytest.approx(0.01 + 0.0025 * INTEGRAL_VAR_2_1, abs=1e-14)
    with criterion("AC1b MC variance of log S vs closed form", detail):
        assert abs(gap.var_gap_in_se) <= 3.0


# 2. OU integral variance ----------------------------------------------------------------

def test_ac2_integral_variance():
    oracle, _ = quad(lambda s: math.exp(-2 * 2.0 * (1 - s)), 0, 1, epsabs=1e-14)
    got = ou_integral_variance(2.0, 1.0)
    limits = {th: ou_integral_variance(th, math.inf) for th in (0.5, 1.0, 5.0)}
    large_t = {th: ou_integral_variance(th, 1e3) for th in (0.5, 1.0, 5.0)}
    detail = lambda: (f"value {got:.10f}, quadrature {oracle:.10f}, |diff| {abs(got - oracle):.1e} (limit 1e-6); "
                      f"max limit error {max(abs(v - 1 / (2 * t)) for t, v in limits.items()):.1e} (limit 1e-9)")
    with criterion("AC2 OU integral variance", detail):
        assert abs(oracle - INTEGRAL_VAR_2_1) < 1e-12
        assert abs(got - oracle) <= 1e-6
        assert abs(got - 0.2454211) <= 1e-6
        for th in limits:
            assert abs(limits[th] - 1 / (2 * th)) <= 1e-9
            assert abs(large_t[th] - 1 / (2 * th)) <= 1e-9


# 3. Maximum-likelihood recovery ---------------------------------------------------------

def test_ac3_mle_recovery():
    start = time.perf_counter()
    fits = [ou_fit_mle(ou_path(5.0, 0.0, 0.05, 4000, 1 / 252, seed=s), 1 / 252)[0] for s in range(100)]
    elapsed = time.perf_counter() - start
    theta = np.median([f.theta for f in fits])
    mu = np.median([f.mu for f in fits])
    sigma = np.median([f.sigma_k for f in fits])
    detail = lambda: (f"median theta {theta:.4f} ({100 * (theta / 5 - 1):+.2f}%, limit 10%), "
                      f"median mu {mu:+.5f} (limit 0.005), median sigma_k {sigma:.5f} "
                      f"({100 * (sigma / 0.05 - 1):+.2f}%, limit 5%), runtime {elapsed:.2f} s (limit 30)")
    with criterion("AC3 MLE recovery over 100 seeds", detail):
        assert abs(theta / 5.0 - 1) <= 0.10
        assert abs(mu) <= 0.005
        assert abs(sigma / 0.05 - 1) <= 0.05
        assert elapsed <= 30.0


# 4. Coverage on model-generated data ----------------------------------------------------

def test_ac4_synthetic_coverage():
    levels = (0.5, 0.8, 0.9, 0.95)
    series = simulate_market(OUParams(5.0, 0.0, 0.05), DiffusionParams(0.10), 5000, seed=0)
    report = run_backtest(series, BacktestConfig(horizons_days=(10, 21), levels=levels))
    cells = {(h, lv): report.coverage(h, lv) for h in (10, 21) for lv in levels}
    worst = max(cells, key=lambda c: abs(cells[c] - c[1]))
    detail = lambda: ("; ".join(f"{h}d " + "/".join(f"{100 * cells[h, lv]:.2f}" for lv in levels) for h in (10, 21))
                      + f" vs 50/80/90/95; worst {worst[0]}d@{worst[1]:.0%} "
                      f"{100 * (cells[worst] - worst[1]):+.2f} pp (limit 5)")
    with criterion("AC4 synthetic coverage within 5 pp", detail):
        for (h, lv), c in cells.items():
            assert abs(c - lv) <= 0.05, f"{h}-day {lv:.0%}: {c:.4f}"


# 5. Table layout of the default backtest ------------------------------------------------

TABLE_HEADER = ["Confidence Level", "2-Week", "1-Month", "3-Month", "6-Month", "1-Year"]
TABLE_ROWS = ["50%", "60%", "70%", "80%", "90%", "95%", "99%"]
def backtest_table(data, out):
    rc = main(["backtest", "--data", str(data), "--out", str(out)])
    with open(out / "coverage.csv", newline="") as fh:
        return rc, list(csv.reader(fh))


def check_layout(rows):
    assert rows[0] == TABLE_HEADER
    assert [r[0] for r in rows[1:]] == TABLE_ROWS
    cells = np.array([[float(x) for x in r[1:]] for r in rows[1:]])
    assert cells.shape == (7, 5) and np.all((0 <= cells) & (cells <= 1))
    return cells


def test_ac5_default_backtest_layout(tmp_path, capsys):
    # 2010-01-04 .. 2025-06 on business days; the user's own file is checked too when provided
    series = simulate_market(OUParams(5.0, 0.0, 0.05), DiffusionParams(0.10), 4020, seed=2010,
                             s0=1150.0, us_yield=0.038, kr_yield=0.054, start=date(2010, 1, 4))
    data = tmp_path / "synthetic.csv"
    write_market_csv(series, data)
    user = os.environ.get("FXPREMIUM_USDKRW_CSV")
    notes = []

    def detail():
        return f"7x5 layout on synthetic {series.dates[0]}..{series.dates[-1]}" + "".join(notes)

    with criterion("AC5 default backtest emits the 7x5 table layout", detail):
        rc, rows = backtest_table(data, tmp_path)
        assert rc == 0
        check_layout(rows)
        if user:
            out = tmp_path / "user"
            out.mkdir()
            rc, rows = backtest_table(user, out)
            assert rc == 0
            cells = check_layout(rows)
            nominal = np.array([0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99])[:, None]
            gap = 100 * np.abs(cells[:, :2] - nominal)
            notes.append(f"; user data rc=0, short-horizon mean |coverage - nominal| "
                         f"2-Week {gap[:, 0].mean():.2f} pp, 1-Month {gap[:, 1].mean():.2f} pp (not gated)")
        else:
            notes.append("; FXPREMIUM_USDKRW_CSV not set, user-data run skipped")
    capsys.readouterr()


# 6. Density sanity ----------------------------------------------------------------------

def test_ac6_density_sanity():
    dists = [ForecastDistribution(m, v, 1.0, 1.0) for m, v in ((7.0, 0.01), (0.0, 0.25), (7.2, 0.0004))]
    worst_total, worst_mass = 0.0, 0.0
    for d in dists:
        med = d.median
        cuts = [0.0] + [med * math.exp(k * d.sd_log) for k in (-12, -3, 0, 3, 12)]
        total = sum(quad(lambda s: lognormal_pdf(d, s), a, b, epsabs=1e-14, limit=200)[0]
                    for a, b in zip(cuts, cuts[1:]))
        total += quad(lambda s: lognormal_pdf(d, s), cuts[-1], np.inf, epsabs=1e-14)[0]
        worst_total = max(worst_total, abs(total - 1))
        for lv in (0.5, 0.9, 0.99):
            lo, hi = confidence_interval(d, lv)
            mass = quad(lambda s: lognormal_pdf(d, s), lo, hi, epsabs=1e-14, limit=200)[0]
            worst_mass = max(worst_mass, abs(mass - lv))
    detail = lambda: f"max |integral - 1| {worst_total:.1e} (limit 1e-6), max |mass - level| {worst_mass:.1e} (limit 1e-4)"
    with criterion("AC6 density integrates to 1 and matches interval levels", detail):
        assert worst_total <= 1e-6
        assert worst_mass <= 1e-4


# 7. Small-theta continuity --------------------------------------------------------------

def test_ac7_small_theta_continuity():
    theta, sk, ss = 1e-12, 0.05, 0.10
    errors = []
    for dt in (0.1, 1.0, 10.0):
        errors.append(abs(ou_transition(OUParams(theta, 0.0, sk), 0.0, dt)[1] - sk**2 * dt) / (sk**2 * dt))
        errors.append(abs(ou_integral_variance(theta, dt) - dt) / dt)
        errors.append(abs(forecast_log_var(ss, sk, theta, dt) - (ss**2 + sk**2) * dt) / ((ss**2 + sk**2) * dt))
    detail = lambda: f"max relative error {max(errors):.1e} over dt in 0.1, 1, 10 (limit 1e-8)"
    with criterion("AC7 small-theta continuity", detail):
        assert max(errors) <= 1e-8


# 8. Invariants over randomized cases ----------------------------------------------------

def random_market(seed, theta, sigma_k, sigma_s, n):
    return simulate_market(OUParams(theta, 0.0, sigma_k), DiffusionParams(sigma_s), n, seed)


market_args = dict(
    seed=st.integers(0, 2**32 - 1),
    theta=st.floats(1.0, 30.0),
    sigma_k=st.floats(0.005, 0.2),
    sigma_s=st.floats(0.01, 0.3),
    n=st.integers(80, 400),
    horizons=st.lists(st.integers(1, 15), min_size=1, max_size=3, unique=True).map(sorted),
)


class Counter:
    def __init__(self):
        self.cases = 0
        self.checks = 0


def test_ac8a_interval_nesting():
    c = Counter()

    @PROPERTY_SETTINGS
    @given(mean=st.floats(-10, 10), var=st.floats(0, 5),
           levels=st.lists(st.floats(0, 0.9999), min_size=2, max_size=8, unique=True).map(sorted))
    def prop(mean, var, levels):
        c.cases += 1
        d = ForecastDistribution(mean, var, 1.0, 1.0)
        bounds = [confidence_interval(d, lv) for lv in levels]
        for (a1, b1), (a2, b2) in zip(bounds, bounds[1:]):
            c.checks += 1
            assert a2 <= a1 <= b1 <= b2

    with criterion("AC8a interval nesting", lambda: f"{c.cases} cases, {c.checks} level pairs"):
        prop()
        assert c.cases >= PROPERTY_CASES


def test_ac8b_coverage_monotone_in_level():
    c = Counter()

    @PROPERTY_SETTINGS
    @given(**market_args)
    def prop(seed, theta, sigma_k, sigma_s, n, horizons):
        c.cases += 1
        report = run_backtest(random_market(seed, theta, sigma_k, sigma_s, n),
                              BacktestConfig(horizons_days=tuple(horizons)), strict=False)
        for r in report.results.values():
            cov = [r.coverage[lv] for lv in report.config.levels]
            c.checks += 1
            assert all(x <= y for x, y in zip(cov, cov[1:]))

    with criterion("AC8b coverage monotone in level", lambda: f"{c.cases} cases, {c.checks} horizons scored"):
        prop()
        assert c.cases >= PROPERTY_CASES


def test_ac8c_no_look_ahead():
    c = Counter()

    @PROPERTY_SETTINGS
    @given(**market_args, shock=st.floats(-0.5, 0.5), rate=st.floats(-0.1, 0.1))
    def prop(seed, theta, sigma_k, sigma_s, n, horizons, shock, rate):
        c.cases += 1
        s = random_market(seed, theta, sigma_k, sigma_s, n)
        cfg = BacktestConfig(horizons_days=tuple(horizons))
        base = run_backtest(s, cfg, strict=False)
        n_train = base.n_train
        spot, us = s.spot.copy(), s.us_yield.copy()
        spot[n_train:] *= np.exp(shock * np.linspace(1.0, -1.0, n - n_train))
        us[n_train:] += rate
        moved = run_backtest(MarketSeries(s.dates, spot, us, s.kr_yield), cfg, strict=False)
        assert set(moved.results) == set(base.results)
        for h, r in base.results.items():
            c.checks += 1
            m = moved.results[h]
            assert (m.ou, m.diffusion, m.diagnostics) == (r.ou, r.diffusion, r.diagnostics)

    with criterion("AC8c no look-ahead (bit-exact fits)", lambda: f"{c.cases} cases, {c.checks} horizon fits compared"):
        prop()
        assert c.cases >= PROPERTY_CASES


def test_ac8d_seed_determinism_across_threads():
    c = Counter()
    ou, diff = OUParams(2.0, 0.0, 0.05), DiffusionParams(0.10)

    @PROPERTY_SETTINGS
    @given(seed=st.integers(0, 2**63 - 1), n_paths=st.integers(1, 2 * PATHS_PER_BLOCK + 50),
           n_steps=st.integers(1, 3), threads=st.integers(2, 8),
           scheme=st.sampled_from(["exact_ou", "euler"]))
    def prop(seed, n_paths, n_steps, threads, scheme):
        c.cases += 1
        cfg = SimulationConfig(n_paths=n_paths, n_steps=n_steps, seed=seed, scheme=scheme)
        with np.errstate(all="ignore"), _quiet():
            a = simulate_system(cfg, ou, diff, 1000.0, 0.01, 0.0, threads=1)
            b = simulate_system(cfg, ou, diff, 1000.0, 0.01, 0.0, threads=threads)
        assert a == b

    with criterion("AC8d seed determinism across thread counts", lambda: f"{c.cases} cases"):
        prop()
        assert c.cases >= PROPERTY_CASES


@contextlib.contextmanager
def _quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        yield
