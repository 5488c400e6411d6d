"""Command-line entry point: ``fxpremium {fit,forecast,backtest,simulate}``.

Settings resolve as command-line flag, then config file (``--config`` or the
FXPREMIUM_CONFIG environment variable), then built-in defaults: horizons of
10/21/63/126/252 business days, levels 50% to 99% and an 80/20 split.

Exit codes: 0 success, 2 data error, 3 fit error, 1 Monte Carlo gate failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import warnings
from dataclasses import dataclass, fields
from fractions import Fraction
from pathlib import Path

from .backtester import DEFAULT_HORIZONS, BacktestConfig, run_backtest
from .calibration import DiffusionParams, OUParams, ParameterDocument, fit_sigma_s, ou_fit_mle, parse_key_values
from .errors import DataError, FitError, FxPremiumError
from .forecaster import DEFAULT_LEVELS, forecast_record, level_label, make_forecast
from .market_data import TRADING_DAYS_PER_YEAR, compute_premium, load_market_csv, year_fraction
from .simulation import SimulationConfig, mc_vs_analytic

CONFIG_ENV = "FXPREMIUM_CONFIG"
EXIT_OK, EXIT_GATE, EXIT_DATA, EXIT_FIT = 0, 1, 2, 3
GAP_LIMIT_SE = 3.0


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in str(text).split(",") if x.strip())


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in str(text).split(",") if x.strip())


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _fraction(text) -> float:
    return float(Fraction(str(text).strip()))


@dataclass
class RunConfig:
    data_path: str | None = None
    output_dir: str = "."
    params_path: str | None = None
    horizons_days: tuple[int, ...] | None = None
    levels: tuple[float, ...] = DEFAULT_LEVELS
    train_fraction: float = 0.8
    stride_days: int = 1
    seed: int = 0
    threads: int | None = None
    n_paths: int = 20000
    dt: float = year_fraction(1)
    scheme: str = "exact_ou"
    ito_correction: bool = False
    s0: float = 1000.0
    k0: float = 0.02
    rate_diff: float = 0.0

    def validate(self) -> None:
        """Fail fast before any computation starts."""
        if self.horizons_days is not None and any(h < 0 for h in self.horizons_days):
            raise ValueError("horizons must be non-negative")
        BacktestConfig(levels=self.levels, train_fraction=self.train_fraction, stride_days=self.stride_days)
        if self.threads is not None and self.threads < 1:
            raise ValueError("threads must be >= 1")
        SimulationConfig(n_paths=self.n_paths, n_steps=1, dt=self.dt, seed=self.seed, scheme=self.scheme)


# config-file key -> (RunConfig field, parser)
_KEYS = {
    "data": ("data_path", str),
    "out": ("output_dir", str),
    "params": ("params_path", str),
    "horizon": ("horizons_days", _int_list),
    "horizons": ("horizons_days", _int_list),
    "levels": ("levels", _float_list),
    "train_fraction": ("train_fraction", float),
    "stride": ("stride_days", int),
    "seed": ("seed", int),
    "threads": ("threads", int),
    "paths": ("n_paths", int),
    "n_paths": ("n_paths", int),
    "dt": ("dt", _fraction),
    "scheme": ("scheme", str),
    "ito_correction": ("ito_correction", _bool),
    "s0": ("s0", float),
    "k0": ("k0", float),
    "rate_diff": ("rate_diff", float),
}


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    config_path = args.config or os.environ.get(CONFIG_ENV)
    if config_path:
        for key, value in parse_key_values(Path(config_path).read_text(encoding="utf-8")).items():
            if key not in _KEYS:
                raise ValueError(f"{config_path}: unknown config key {key!r}")
            name, parse = _KEYS[key]
            setattr(cfg, name, parse(value))
    for f in fields(RunConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            setattr(cfg, f.name, value)
    cfg.validate()
    return cfg


def _fail(exc: BaseException, code: int) -> int:
    print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    horizon = getattr(exc, "horizon_days", None)
    if horizon is not None:
        payload["horizon_days"] = horizon
    print(json.dumps(payload), file=sys.stderr)
    return code


def _single_horizon(cfg: RunConfig, default: int) -> int:
    if cfg.horizons_days is None:
        return default
    if len(cfg.horizons_days) != 1:
        raise ValueError("this command takes a single --horizon")
    return cfg.horizons_days[0]


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require_data(cfg: RunConfig) -> str:
    if not cfg.data_path:
        raise DataError("no data file given (use --data or 'data = ...' in the config)")
    if not Path(cfg.data_path).is_file():
        raise DataError(f"data file not found: {cfg.data_path}")
    return cfg.data_path


def cmd_fit(cfg: RunConfig) -> int:
    h = _single_horizon(cfg, 21)
    series = load_market_csv(_require_data(cfg))
    premium = compute_premium(series, h, cfg.stride_days)
    ou, diag = ou_fit_mle(premium)
    diff = fit_sigma_s(series, premium, ou)
    doc = ParameterDocument.from_fit(ou, diff, diag, series.row(len(series) - 1).date, h)
    path = Path(cfg.params_path) if cfg.params_path else _out_dir(cfg) / f"params_h{h}.txt"
    path.parent.mkdir(parents=True, exist_ok=True)
    doc.write(path)
    print(f"horizon_days   {h}")
    print(f"theta          {ou.theta:.6g}  (half-life {ou.half_life * TRADING_DAYS_PER_YEAR:.4g} days)")
    print(f"mu             {ou.mu:.6g}")
    print(f"sigma_k        {ou.sigma_k:.6g}")
    print(f"sigma_s        {diff.sigma_s:.6g}")
    print(f"ar1            {diag.ar1_coefficient:.6g}")
    print(f"log_likelihood {diag.log_likelihood:.6g}")
    print(f"n_obs          {diag.n_obs}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_forecast(cfg: RunConfig) -> int:
    if not cfg.params_path:
        raise DataError("no parameter file given (use --params)")
    if not Path(cfg.params_path).is_file():
        raise DataError(f"parameter file not found: {cfg.params_path}")
    doc = ParameterDocument.read(cfg.params_path)
    h = _single_horizon(cfg, doc.horizon_days if doc.horizon_days is not None else 21)
    series = load_market_csv(_require_data(cfg))
    t = len(series) - 1
    if h == 0:
        k0 = 0.0
    else:
        if t - h < 0:
            raise DataError(f"need more than {h} rows to seed the premium for a {h}-day forecast")
        k0 = float(compute_premium(series.slice(t - h, t + 1), h).values[0])
    dist = make_forecast(series.row(t), k0, doc.ou, doc.diffusion, h)
    rec = forecast_record(dist, h, cfg.levels)
    out = _out_dir(cfg)
    with (out / "forecast.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(rec.keys())
        writer.writerow([_fmt17(v) for v in rec.values()])
    (out / "forecast.json").write_text(json.dumps({**rec, "k0": k0}, indent=2) + "\n", encoding="utf-8")
    print(f"origin {rec['origin_date']}  horizon {h} days  spot {dist.origin_spot:.6g}  k0 {k0:.4g}")
    print(f"mean_log {dist.mean_log:.6g}  var_log {dist.var_log:.4g}  median {dist.median:.6g}")
    for lv in cfg.levels:
        lab = level_label(lv)
        print(f"{lab:>5}%  [{rec[f'lower_{lab}']:.6g}, {rec[f'upper_{lab}']:.6g}]")
    return EXIT_OK


def _fmt17(v):
    return format(v, ".17g") if isinstance(v, float) else v


def cmd_backtest(cfg: RunConfig) -> int:
    series = load_market_csv(_require_data(cfg))
    config = BacktestConfig(
        horizons_days=cfg.horizons_days or DEFAULT_HORIZONS,
        levels=cfg.levels,
        train_fraction=cfg.train_fraction,
        stride_days=cfg.stride_days,
    )
    report = run_backtest(series, config, strict=False)
    out = _out_dir(cfg)
    report.write_csv(out / "coverage.csv")
    report.write_json(out / "backtest.json")
    print(report.format_table())
    print(f"\ntrain rows {report.n_train}, validation rows {report.n_validation}")
    for h, r in report.results.items():
        print(f"{h:>4}d  n={r.n_evaluations}  theta={r.ou.theta:.4g}  mu={r.ou.mu:.4g}  "
              f"sigma_k={r.ou.sigma_k:.4g}  sigma_s={r.diffusion.sigma_s:.4g}")
    if report.failures:
        for f in report.failures.values():
            print(f"horizon {f.horizon_days} failed: {f.error}: {f.message}", file=sys.stderr)
        payload = {"failures": [{"horizon_days": f.horizon_days, "error": f.error, "message": f.message}
                                for f in report.failures.values()]}
        print(json.dumps(payload), file=sys.stderr)
        return EXIT_DATA if any(not f.fit_error for f in report.failures.values()) else EXIT_FIT
    return EXIT_OK


def cmd_simulate(cfg: RunConfig) -> int:
    if cfg.params_path:
        doc = ParameterDocument.read(cfg.params_path)
        ou, diff = doc.ou, doc.diffusion
    else:
        ou, diff = OUParams(theta=2.0, mu=0.0, sigma_k=0.05), DiffusionParams(sigma_s=0.10)
    horizons_days = cfg.horizons_days or DEFAULT_HORIZONS
    horizons = [year_fraction(h) for h in horizons_days]
    n_steps = round(max(horizons) / cfg.dt)
    sim = SimulationConfig(n_paths=cfg.n_paths, n_steps=max(n_steps, 1), dt=cfg.dt, seed=cfg.seed,
                           scheme=cfg.scheme, ito_correction=cfg.ito_correction)
    threads = cfg.threads or os.cpu_count()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        gaps = mc_vs_analytic(sim, ou, diff, cfg.s0, cfg.k0, cfg.rate_diff, horizons, threads=threads)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)

    out = _out_dir(cfg)
    columns = ["horizon_days", "horizon_years", "mc_mean", "analytic_mean", "mean_se", "mean_gap_in_se",
               "mc_var", "analytic_var", "var_se", "var_gap_in_se", "integrated_var", "integrated_var_gap_in_se",
               "within_3se"]
    failed = []
    with (out / "mc_gaps.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for hd, g in zip(horizons_days, gaps):
            ok = abs(g.mean_gap_in_se) <= GAP_LIMIT_SE and abs(g.var_gap_in_se) <= GAP_LIMIT_SE
            if not ok:
                failed.append(hd)
            writer.writerow([hd] + [_fmt17(float(x)) for x in (
                g.horizon, g.mc_mean, g.analytic_mean, g.mean_se, g.mean_gap_in_se, g.mc_var,
                g.analytic_var, g.var_se, g.var_gap_in_se, g.integrated_var, g.integrated_var_gap_in_se)]
                + [str(ok).lower()])

    print(f"scheme={sim.scheme} paths={sim.n_paths} dt={sim.dt:.6g} seed={sim.seed} "
          f"theta={ou.theta:.4g} mu={ou.mu:.4g} sigma_k={ou.sigma_k:.4g} sigma_s={diff.sigma_s:.4g}")
    print(f"{'days':>5} {'mean gap':>9} {'var gap':>9} {'int. var gap':>12}  status")
    for hd, g in zip(horizons_days, gaps):
        status = "FAIL" if hd in failed else "pass"
        print(f"{hd:>5} {g.mean_gap_in_se:>9.3g} {g.var_gap_in_se:>9.3g} {g.integrated_var_gap_in_se:>12.3g}  {status}")
    if sim.n_paths < 2:
        print("warning: a single path gives no usable standard error", file=sys.stderr)
    if not failed:
        print(f"summary: PASS (all gaps within {GAP_LIMIT_SE:g} SE)")
        return EXIT_OK
    if sim.scheme == "euler":
        print(f"warning: gaps beyond {GAP_LIMIT_SE:g} SE at horizons {failed}; "
              "the first-order Euler premium step is biased at this dt", file=sys.stderr)
        print("summary: WARN (Euler discretization bias)")
        return EXIT_OK
    print(f"summary: FAIL (gaps beyond {GAP_LIMIT_SE:g} SE at horizons {failed})")
    return EXIT_GATE


def _common(p: argparse.ArgumentParser, *, horizon_help: str) -> None:
    p.add_argument("--data", dest="data_path", help="input CSV with header date,spot,us_yield,kr_yield")
    p.add_argument("--out", dest="output_dir", help="output directory (default: current directory)")
    p.add_argument("--horizon", dest="horizons_days", type=_int_list, help=horizon_help)
    p.add_argument("--levels", type=_float_list,
                   help="comma-separated confidence levels (default: 0.5,0.6,0.7,0.8,0.9,0.95,0.99)")
    p.add_argument("--train-fraction", dest="train_fraction", type=float,
                   help="chronological training share (default: 0.8)")
    p.add_argument("--stride", dest="stride_days", type=int,
                   help="business days between premium origins (default: 1)")
    p.add_argument("--seed", type=int, help="random seed (default: 0)")
    p.add_argument("--threads", type=int, help="worker threads (default: all cores); results do not depend on it")
    p.add_argument("--config", help=f"key = value config file (default: ${CONFIG_ENV} if set)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fxpremium", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="calibrate the premium and spot volatility")
    _common(p, horizon_help="premium horizon in business days (default: 21)")
    p.add_argument("--params", dest="params_path", help="parameter file to write (default: OUT/params_hH.txt)")

    p = sub.add_parser("forecast", help="predictive intervals at the latest origin")
    _common(p, horizon_help="forecast horizon in business days (default: horizon in the parameter file)")
    p.add_argument("--params", dest="params_path", help="parameter file written by 'fit'")

    p = sub.add_parser("backtest", help="80/20 out-of-sample coverage table")
    _common(p, horizon_help="comma-separated horizons in business days (default: 10,21,63,126,252)")

    p = sub.add_parser("simulate", help="Monte Carlo check of the closed-form moments")
    _common(p, horizon_help="comma-separated horizons in business days (default: 10,21,63,126,252)")
    p.add_argument("--params", dest="params_path",
                   help="parameter file (default: theta=2, mu=0, sigma_k=0.05, sigma_s=0.10)")
    p.add_argument("--paths", dest="n_paths", type=int, help="number of paths (default: 20000)")
    p.add_argument("--dt", type=_fraction, help="step in years, e.g. 1/252 (default) or 1/12")
    p.add_argument("--scheme", choices=("exact_ou", "euler"), help="premium scheme (default: exact_ou)")
    p.add_argument("--ito-correction", dest="ito_correction", action="store_const", const=True,
                   help="subtract sigma_s^2/2 from the log drift")
    p.add_argument("--s0", type=float, help="initial spot (default: 1000)")
    p.add_argument("--k0", type=float, help="initial premium (default: 0.02)")
    p.add_argument("--rate-diff", dest="rate_diff", type=float, help="i_US - i_KR per annum (default: 0)")
    return parser


COMMANDS = {"fit": cmd_fit, "forecast": cmd_forecast, "backtest": cmd_backtest, "simulate": cmd_simulate}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except FitError as exc:
        return _fail(exc, EXIT_FIT)
    except (DataError, FxPremiumError, OSError, ValueError) as exc:
        return _fail(exc, EXIT_DATA)


if __name__ == "__main__":
    sys.exit(main())
