"""Mean-reverting exchange-rate risk premium: calibration, density forecasts
and coverage backtesting."""

from .backtester import BacktestConfig, CoverageReport, coverage_rate, run_backtest
from .calibration import (
    DiffusionParams,
    FitDiagnostics,
    OUParams,
    ParameterDocument,
    fit_sigma_s,
    ou_fit_mle,
    ou_transition,
)
from .forecaster import (
    DEFAULT_LEVELS,
    ForecastDistribution,
    confidence_interval,
    forecast_log_mean,
    forecast_log_var,
    lognormal_pdf,
    make_forecast,
    ou_integral_variance,
    quantile_fan,
)
from .market_data import (
    MarketSeries,
    PremiumSeries,
    SplitSpec,
    compute_premium,
    load_market_csv,
    split_train_validation,
    write_market_csv,
)
from .simulation import SimulationConfig, mc_vs_analytic, simulate_market, simulate_system

__version__ = "0.1.0"
