"""Market data ingestion, realized risk-premium construction and splitting.

Row convention: ``horizon_days`` counts observed trading rows, and year
fractions use 252 trading days per year.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import (
    DegenerateSplit,
    HorizonTooLong,
    MissingColumn,
    NonPositiveSpot,
    UnparseableRow,
    UnsortedDates,
)

TRADING_DAYS_PER_YEAR = 252
CSV_COLUMNS = ("date", "spot", "us_yield", "kr_yield")


def year_fraction(days: int | float) -> float:
    """Trading-day count to year fraction."""
    return days / TRADING_DAYS_PER_YEAR


def _frozen(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


class MarketRow(NamedTuple):
    date: date
    spot: float
    us_yield: float
    kr_yield: float

    @property
    def rate_diff(self) -> float:
        return self.us_yield - self.kr_yield


@dataclass(frozen=True, eq=False)
class MarketSeries:
    """Aligned daily spot rate and 10-year yields (decimal per annum).

    ``us_yield`` is the base-currency yield and ``kr_yield`` the quote-currency
    yield, so ``us_yield - kr_yield`` is the differential in the parity drift.
    """

    dates: np.ndarray
    spot: np.ndarray
    us_yield: np.ndarray
    kr_yield: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "dates", _frozen(self.dates, "datetime64[D]"))
        for name in ("spot", "us_yield", "kr_yield"):
            object.__setattr__(self, name, _frozen(getattr(self, name), float))
        n = len(self.dates)
        if not (len(self.spot) == len(self.us_yield) == len(self.kr_yield) == n):
            raise ValueError("all MarketSeries fields must have the same length")
        if n < 1:
            raise ValueError("MarketSeries needs at least one row")
        if np.any(np.diff(self.dates) <= np.timedelta64(0, "D")):
            raise UnsortedDates("dates must be strictly increasing")
        bad = ~(np.isfinite(self.spot) & (self.spot > 0))
        if bad.any():
            i = int(np.argmax(bad))
            raise NonPositiveSpot(f"spot must be positive and finite; row {i} has {self.spot[i]!r}")
        if not (np.isfinite(self.us_yield).all() and np.isfinite(self.kr_yield).all()):
            raise ValueError("yields must be finite")

    def __len__(self) -> int:
        return len(self.dates)

    def __eq__(self, other) -> bool:
        if not isinstance(other, MarketSeries):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("dates", "spot", "us_yield", "kr_yield")
        )

    @property
    def rate_diff(self) -> np.ndarray:
        return self.us_yield - self.kr_yield

    @property
    def log_spot(self) -> np.ndarray:
        return np.log(self.spot)

    def row(self, i: int) -> MarketRow:
        return MarketRow(
            self.dates[i].item(),
            float(self.spot[i]),
            float(self.us_yield[i]),
            float(self.kr_yield[i]),
        )

    def slice(self, start: int | None = None, stop: int | None = None) -> "MarketSeries":
        s = slice(start, stop)
        return MarketSeries(self.dates[s], self.spot[s], self.us_yield[s], self.kr_yield[s])

    @classmethod
    def concat(cls, first: "MarketSeries", second: "MarketSeries") -> "MarketSeries":
        return cls(
            np.concatenate([first.dates, second.dates]),
            np.concatenate([first.spot, second.spot]),
            np.concatenate([first.us_yield, second.us_yield]),
            np.concatenate([first.kr_yield, second.kr_yield]),
        )


@dataclass(frozen=True, eq=False)
class PremiumSeries:
    """Realized h-period log premium indexed by forecast origin.

    ``origin_index`` holds the row of each origin in the source series.
    """

    origin_dates: np.ndarray
    values: np.ndarray
    horizon_days: int
    stride_days: int = 1
    origin_index: np.ndarray | None = None

    def __post_init__(self):
        if self.horizon_days < 1 or self.stride_days < 1:
            raise ValueError("horizon_days and stride_days must be >= 1")
        object.__setattr__(self, "origin_dates", _frozen(self.origin_dates, "datetime64[D]"))
        object.__setattr__(self, "values", _frozen(self.values, float))
        if self.origin_index is None:
            idx = np.arange(len(self.values)) * self.stride_days
        else:
            idx = self.origin_index
        object.__setattr__(self, "origin_index", _frozen(idx, np.int64))
        if not (len(self.origin_dates) == len(self.values) == len(self.origin_index)):
            raise ValueError("origin_dates, values and origin_index must align")
        if not np.isfinite(self.values).all():
            raise ValueError("premium values must be finite")

    def __len__(self) -> int:
        return len(self.values)

    @property
    def horizon_years(self) -> float:
        return year_fraction(self.horizon_days)

    @property
    def delta_t(self) -> float:
        """Year fraction between consecutive origins."""
        return year_fraction(self.stride_days)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8

    def __post_init__(self):
        if not (0.0 < self.train_fraction < 1.0):
            raise ValueError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")


def _parse_float(text: str, field: str, line: int) -> float:
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise UnparseableRow(line, f"cannot parse {field}={text!r}") from None
    if not math.isfinite(value):
        raise UnparseableRow(line, f"{field} is not finite")
    return value


def load_market_csv(path: str | Path) -> MarketSeries:
    """Read a ``date,spot,us_yield,kr_yield`` CSV file.

    Extra columns are ignored. Any row with a missing or unparseable field is
    an error: silently dropping it would shift every horizon offset after it.
    """
    path = Path(path)
    dates: list[date] = []
    spot: list[float] = []
    us: list[float] = []
    kr: list[float] = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in (reader.fieldnames or [])]
        missing = [c for c in CSV_COLUMNS if c not in header]
        if missing:
            raise MissingColumn(f"{path}: header lacks column(s) {', '.join(missing)}")
        reader.fieldnames = header
        for row in reader:
            line = reader.line_num
            if any(row.get(c) is None or row[c].strip() == "" for c in CSV_COLUMNS):
                raise UnparseableRow(line, "missing field")
            try:
                d = date.fromisoformat(row["date"].strip())
            except ValueError:
                raise UnparseableRow(line, f"bad date {row['date']!r}") from None
            s = _parse_float(row["spot"], "spot", line)
            if not (s > 0 and math.isfinite(s)):
                raise NonPositiveSpot(f"line {line}: spot must be positive, got {row['spot'].strip()}")
            dates.append(d)
            spot.append(s)
            us.append(_parse_float(row["us_yield"], "us_yield", line))
            kr.append(_parse_float(row["kr_yield"], "kr_yield", line))
    if len(dates) < 2:
        raise UnparseableRow(reader.line_num, f"{path}: need at least 2 data rows, got {len(dates)}")
    for i in range(1, len(dates)):
        if dates[i] <= dates[i - 1]:
            raise UnsortedDates(f"{path}: date {dates[i]} does not follow {dates[i - 1]}")
    return MarketSeries(np.array(dates, dtype="datetime64[D]"), spot, us, kr)


def write_market_csv(series: MarketSeries, path: str | Path) -> None:
    # repr gives the shortest string that round-trips exactly
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for i in range(len(series)):
            r = series.row(i)
            writer.writerow([r.date.isoformat(), repr(r.spot), repr(r.us_yield), repr(r.kr_yield)])


def compute_premium(series: MarketSeries, horizon_days: int, stride_days: int = 1) -> PremiumSeries:
    """Realized risk premium K_t for every origin with t + h in range.

    K_t = log(S_{t+h} / S_t) - (i_US,t - i_KR,t) * h / 252
    """
    if horizon_days < 1 or stride_days < 1:
        raise ValueError("horizon_days and stride_days must be >= 1")
    n = len(series)
    if n <= horizon_days:
        raise HorizonTooLong(f"series of {n} rows is too short for a {horizon_days}-day horizon")
    log_s = series.log_spot
    origins = np.arange(0, n - horizon_days, stride_days)
    values = (
        log_s[origins + horizon_days]
        - log_s[origins]
        - series.rate_diff[origins] * year_fraction(horizon_days)
    )
    return PremiumSeries(series.dates[origins], values, horizon_days, stride_days, origins)


def split_train_validation(series: MarketSeries, spec: SplitSpec) -> tuple[MarketSeries, MarketSeries]:
    """Chronological split: first floor(f * N) rows train, the rest validate."""
    n = len(series)
    n_train = math.floor(spec.train_fraction * n)
    if n_train < 1 or n_train >= n:
        raise DegenerateSplit(f"train_fraction={spec.train_fraction} on {n} rows leaves an empty side")
    return series.slice(0, n_train), series.slice(n_train, n)
