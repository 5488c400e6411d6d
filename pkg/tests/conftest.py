import math

import numpy as np
import pytest
from scipy.signal import lfilter

from fxpremium.calibration import DiffusionParams, OUParams
from fxpremium.market_data import MarketSeries
from fxpremium.simulation import simulate_market

# criterion id -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def record(criterion: str, passed: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (bool(passed), detail)
    print(f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[name]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")


def business_days(n: int, start: str = "2015-01-05") -> np.ndarray:
    return np.busday_offset(np.datetime64(start, "D"), np.arange(n), roll="forward")


def make_series(spot, us=0.03, kr=0.035, start="2015-01-05") -> MarketSeries:
    spot = np.asarray(spot, dtype=float)
    n = spot.size
    return MarketSeries(business_days(n, start), spot, np.broadcast_to(us, n).copy(), np.broadcast_to(kr, n).copy())


def ou_path(theta, mu, sigma_k, n, dt, seed, x0=None):
    """Exact AR(1) sampling of an OU path, independent of the package simulator."""
    rng = np.random.default_rng(seed)
    a = math.exp(-theta * dt)
    sd = sigma_k * math.sqrt(-math.expm1(-2 * theta * dt) / (2 * theta))
    if x0 is None:
        x0 = rng.normal(mu, sigma_k / math.sqrt(2 * theta))
    eps = rng.normal(0.0, sd, n - 1)
    tail = lfilter([1.0], [1.0, -a], eps + mu * (1 - a), zi=[a * x0])[0]
    return np.concatenate([[x0], tail])


@pytest.fixture
def model_series():
    """Daily market path from the model with a known, well-identified premium."""
    def build(n=5000, seed=0, theta=5.0, mu=0.0, sigma_k=0.05, sigma_s=0.10):
        return simulate_market(OUParams(theta, mu, sigma_k), DiffusionParams(sigma_s), n, seed)
    return build
