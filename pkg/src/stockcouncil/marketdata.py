"""Price ingestion and the return/volatility primitives.

Returns are close-to-close simple returns. Every annualization goes through
``TRADING_DAYS`` so the day-count convention lives in exactly one place.
"""

from __future__ import annotations

import csv
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path

from .errors import DataError

TRADING_DAYS = 252

PRICE_COLUMNS = ("date", "open", "high", "low", "close", "volume")


@dataclass(frozen=True)
class PriceBar:
    date: date
    open: float
    high: float
    low: float
    close: float
    volume: float

    def __post_init__(self) -> None:
        for name in ("open", "high", "low", "close"):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0:
                raise DataError(f"{self.date}: non-positive price {name}={value!r}")
        if not math.isfinite(self.volume) or self.volume < 0:
            raise DataError(f"{self.date}: negative volume {self.volume!r}")
        if not (self.low <= self.open <= self.high and self.low <= self.close <= self.high):
            raise DataError(
                f"{self.date}: OHLC out of range "
                f"(o={self.open}, h={self.high}, l={self.low}, c={self.close})"
            )


@dataclass(frozen=True)
class PriceSeries:
    ticker: str
    bars: tuple[PriceBar, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "bars", tuple(self.bars))
        if not self.bars:
            raise DataError(f"{self.ticker}: price series is empty")
        for prev, cur in zip(self.bars, self.bars[1:]):
            if cur.date == prev.date:
                raise DataError(f"{self.ticker}: duplicate date {cur.date}")
            if cur.date < prev.date:
                raise DataError(f"{self.ticker}: dates not ascending at {cur.date}")

    @property
    def dates(self) -> list[date]:
        return [b.date for b in self.bars]

    @property
    def closes(self) -> list[float]:
        return [b.close for b in self.bars]

    def window(self, start: date | None = None, end: date | None = None) -> PriceSeries:
        """Bars with ``start <= date <= end``; raises if nothing is left."""
        bars = [
            b for b in self.bars
            if (start is None or b.date >= start) and (end is None or b.date <= end)
        ]
        if not bars:
            raise DataError(f"{self.ticker}: no bars between {start} and {end}")
        return PriceSeries(self.ticker, tuple(bars))


@dataclass(frozen=True)
class ReturnSeries:
    """Simple returns (fractions) keyed by date, for a ticker or a portfolio."""

    id: str
    dates: tuple[date, ...]
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if len(self.dates) != len(self.values):
            raise DataError(f"{self.id}: {len(self.dates)} dates but {len(self.values)} values")
        for prev, cur in zip(self.dates, self.dates[1:]):
            if cur <= prev:
                raise DataError(f"{self.id}: dates not strictly ascending at {cur}")
        for d, v in zip(self.dates, self.values):
            if not math.isfinite(v) or v <= -1.0:
                raise DataError(f"{self.id}: invalid return {v!r} on {d}")

    @property
    def points(self) -> list[tuple[date, float]]:
        return list(zip(self.dates, self.values))

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class Panel:
    """Return columns aligned on a shared date index."""

    dates: tuple[date, ...]
    columns: dict[str, tuple[float, ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for prev, cur in zip(self.dates, self.dates[1:]):
            if cur <= prev:
                raise DataError(f"panel dates not strictly ascending at {cur}")
        for key, col in self.columns.items():
            if len(col) != len(self.dates):
                raise DataError(f"panel column {key} has {len(col)} rows, expected {len(self.dates)}")

    def series(self, key: str) -> ReturnSeries:
        return ReturnSeries(key, self.dates, self.columns[key])


def _parse_float(raw: str, what: str, lineno: int) -> float:
    try:
        return float(raw)
    except ValueError:
        raise DataError(f"line {lineno}: cannot parse {what} {raw!r}") from None


def load_price_csv(path: str | Path) -> PriceSeries:
    """Read an OHLCV csv; rows may come in any order."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in (reader.fieldnames or [])]
        missing = [c for c in PRICE_COLUMNS if c not in header]
        extra = [c for c in header if c not in PRICE_COLUMNS and c != "ticker"]
        if missing or extra:
            raise DataError(f"{path.name}: bad header (missing={missing}, extra={extra})")
        tickers: set[str] = set()
        bars = []
        seen: set[date] = set()
        for lineno, row in enumerate(reader, start=2):
            row = {k.strip(): (v or "").strip() for k, v in row.items()}
            try:
                day = date.fromisoformat(row["date"])
            except ValueError:
                raise DataError(f"{path.name} line {lineno}: bad date {row['date']!r}") from None
            if day in seen:
                raise DataError(f"{path.name}: duplicate date {day}")
            seen.add(day)
            if "ticker" in row:
                tickers.add(row["ticker"])
            values = {c: _parse_float(row[c], c, lineno) for c in PRICE_COLUMNS[1:]}
            try:
                bars.append(PriceBar(day, **values))
            except DataError as exc:
                raise DataError(f"{path.name} line {lineno}: {exc}") from None
    if len(tickers) > 1:
        raise DataError(f"{path.name}: mixed tickers {sorted(tickers)}")
    ticker = tickers.pop() if tickers else path.stem
    bars.sort(key=lambda b: b.date)
    return PriceSeries(ticker, tuple(bars))


def daily_returns(series: PriceSeries) -> ReturnSeries:
    if len(series.bars) < 2:
        raise DataError(f"{series.ticker}: need at least 2 bars for returns")
    closes = series.closes
    values = [cur / prev - 1.0 for prev, cur in zip(closes, closes[1:])]
    return ReturnSeries(series.ticker, tuple(series.dates[1:]), tuple(values))


def cumulative_return(returns: ReturnSeries | Sequence[float]) -> float:
    values = returns.values if isinstance(returns, ReturnSeries) else tuple(returns)
    if not values:
        raise DataError("cumulative return of an empty series")
    growth = 1.0
    for r in values:
        growth *= 1.0 + r
    return growth - 1.0


def annualize_return(r_cum: float, n: int, periods_per_year: int = TRADING_DAYS) -> float:
    """``(1 + r_cum) ** (periods_per_year / n) - 1`` for an ``n``-day holding period."""
    if n < 1:
        raise DataError(f"trading-day count must be >= 1, got {n}")
    if r_cum <= -1.0:
        raise DataError(f"cumulative return must exceed -1, got {r_cum}")
    # expm1/log1p keep full relative precision for returns near zero
    return math.expm1(periods_per_year / n * math.log1p(r_cum))


def daily_volatility(returns: ReturnSeries | Sequence[float]) -> float:
    """Sample standard deviation (divisor n - 1)."""
    values = returns.values if isinstance(returns, ReturnSeries) else tuple(returns)
    if len(values) < 2:
        raise DataError("volatility needs at least 2 returns")
    if max(values) == min(values):
        return 0.0
    mean = math.fsum(values) / len(values)
    return math.sqrt(math.fsum((v - mean) ** 2 for v in values) / (len(values) - 1))


def annualize_volatility(sigma_daily: float, periods_per_year: int = TRADING_DAYS) -> float:
    if sigma_daily < 0:
        raise DataError(f"volatility must be non-negative, got {sigma_daily}")
    return sigma_daily * math.sqrt(periods_per_year)


def align(series: Iterable[ReturnSeries]) -> Panel:
    """Restrict every series to the dates they all share. No filling."""
    series = list(series)
    if not series:
        raise DataError("align needs at least one series")
    ids = [s.id for s in series]
    if len(set(ids)) != len(ids):
        raise DataError(f"duplicate series ids in {ids}")
    common = set(series[0].dates)
    for s in series[1:]:
        common &= set(s.dates)
    if not common:
        raise DataError(f"no common dates across {ids}")
    dates = tuple(sorted(common))
    columns = {}
    for s in series:
        lookup = dict(zip(s.dates, s.values))
        columns[s.id] = tuple(lookup[d] for d in dates)
    return Panel(dates, columns)
