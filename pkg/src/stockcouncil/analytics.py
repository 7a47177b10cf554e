"""Equal-weight portfolios and backtest statistics."""

from __future__ import annotations

import csv
import io
import json
import math
from collections import defaultdict
from collections.abc import Sequence
from dataclasses import dataclass, field
from datetime import date, timedelta
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DataError, ZeroVolatilityError
from .marketdata import TRADING_DAYS, Panel, ReturnSeries, cumulative_return

DEFAULT_WINDOW = 21
WEIGHT_TOLERANCE = 1e-12


@dataclass(frozen=True)
class Portfolio:
    id: str
    inception: date
    holdings: dict[str, float]

    def __post_init__(self) -> None:
        if not self.holdings:
            raise DataError(f"portfolio {self.id}: no holdings")
        for ticker, weight in self.holdings.items():
            if not weight > 0:
                raise DataError(f"portfolio {self.id}: non-positive weight for {ticker}")
        total = math.fsum(self.holdings.values())
        if abs(total - 1.0) > WEIGHT_TOLERANCE:
            raise DataError(f"portfolio {self.id}: weights sum to {total!r}")

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "inception": self.inception.isoformat(),
            "holdings": dict(self.holdings),
        }

    @classmethod
    def from_json(cls, data: dict) -> Portfolio:
        try:
            return cls(
                id=str(data["id"]),
                inception=date.fromisoformat(data["inception"]),
                holdings={str(k): float(v) for k, v in data["holdings"].items()},
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, DataError):
                raise
            raise DataError(f"malformed portfolio file: {exc}") from None

    @classmethod
    def load(cls, path: str | Path) -> Portfolio:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise DataError(f"cannot read portfolio {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise DataError(f"portfolio {path} is not valid JSON: {exc}") from None
        return cls.from_json(data)


@dataclass(frozen=True)
class SharpeSpec:
    rf_annual: float = 0.0
    periods_per_year: int = TRADING_DAYS
    window: int = DEFAULT_WINDOW

    def __post_init__(self) -> None:
        if self.periods_per_year < 1:
            raise DataError(f"periods_per_year must be >= 1, got {self.periods_per_year}")
        if self.window < 2:
            raise DataError(f"rolling window must be >= 2, got {self.window}")

    @property
    def rf_per_period(self) -> float:
        return self.rf_annual / self.periods_per_year


@dataclass(frozen=True)
class RollingSharpe:
    """Window-end dated Sharpe values; degenerate windows are counted in ``gaps``."""

    points: tuple[tuple[date, float], ...]
    gaps: int = 0

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class BacktestResult:
    portfolio_id: str
    returns: ReturnSeries
    curve: tuple[tuple[date, float], ...]
    sharpe: float | None
    rolling: RollingSharpe
    max_drawdown: float

    @property
    def final_cum_return(self) -> float:
        return self.curve[-1][1] - 1.0


@dataclass(frozen=True)
class ComparisonRow:
    portfolio: str
    final_cum_return: float
    sharpe: float | None
    max_drawdown: float


@dataclass(frozen=True)
class ComparisonTable:
    rows: tuple[ComparisonRow, ...] = field(default_factory=tuple)

    HEADER = ("portfolio", "final_cum_return", "sharpe", "max_drawdown")

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.HEADER)
        for row in self.rows:
            writer.writerow([
                row.portfolio,
                repr(row.final_cum_return),
                "" if row.sharpe is None else repr(row.sharpe),
                repr(row.max_drawdown),
            ])
        return buf.getvalue()


def equal_weight(tickers: Sequence[str], inception: date, portfolio_id: str = "equal_weight") -> Portfolio:
    tickers = list(tickers)
    if not tickers:
        raise DataError("empty universe")
    dupes = sorted({t for t in tickers if tickers.count(t) > 1})
    if dupes:
        raise DataError(f"duplicate tickers: {dupes}")
    weight = 1.0 / len(tickers)
    return Portfolio(portfolio_id, inception, {t: weight for t in tickers})


def portfolio_returns(portfolio: Portfolio, panel: Panel) -> ReturnSeries:
    """Daily-rebalanced weighted return on every panel date from inception on."""
    missing = [t for t in portfolio.holdings if t not in panel.columns]
    if missing:
        raise DataError(f"portfolio {portfolio.id}: no return column for {missing}")
    rows = [i for i, d in enumerate(panel.dates) if d >= portfolio.inception]
    if not rows:
        raise DataError(f"portfolio {portfolio.id}: no panel dates on or after {portfolio.inception}")

    # Group tickers sharing a weight so equal-weight books reduce to w * fsum(...)
    groups: dict[float, list[str]] = defaultdict(list)
    for ticker, weight in portfolio.holdings.items():
        groups[weight].append(ticker)

    values = []
    for i in rows:
        values.append(math.fsum(
            w * math.fsum(panel.columns[t][i] for t in members)
            for w, members in groups.items()
        ))
    return ReturnSeries(portfolio.id, tuple(panel.dates[i] for i in rows), tuple(values))


def _excess_sums(windows: np.ndarray, rf: float) -> np.ndarray:
    """Row sums of ``windows - rf`` with Neumaier compensation.

    The excess mean is often tiny next to the raw returns, so a plain sum
    loses most of its significant digits to cancellation.
    """
    def two_sum(a, b):
        s = a + b
        z = s - a
        return s, (a - (s - z)) + (b - z)

    # pairwise cascade: every addition keeps its exact rounding residual
    vals, err = two_sum(windows, np.full_like(windows, -rf))
    comp = err.sum(axis=1)
    while vals.shape[1] > 1:
        half = vals.shape[1] // 2
        s, err = two_sum(vals[:, :half], vals[:, half:2 * half])
        comp += err.sum(axis=1)
        vals = np.concatenate([s, vals[:, 2 * half:]], axis=1) if vals.shape[1] % 2 else s
    return vals[:, 0] + comp


def _window_sharpe(windows: np.ndarray, spec: SharpeSpec) -> tuple[np.ndarray, np.ndarray]:
    """Annualized Sharpe per row of ``windows``; second array flags rows with no dispersion."""
    flat = windows.max(axis=1) == windows.min(axis=1)
    w = windows.shape[1]
    rf = spec.rf_per_period
    excess = _excess_sums(windows, rf) / w
    dev = windows - (excess + rf)[:, None]
    std = np.sqrt((dev * dev).sum(axis=1) / (w - 1))
    ppy = spec.periods_per_year
    with np.errstate(divide="ignore", invalid="ignore"):
        out = excess * ppy / (std * math.sqrt(ppy))
    out[flat] = np.nan
    return out, flat


def sharpe(returns: ReturnSeries, spec: SharpeSpec = SharpeSpec()) -> float:
    """Annualized Sharpe ratio of a daily return series."""
    if len(returns) < 2:
        raise DataError(f"{returns.id}: Sharpe needs at least 2 returns")
    values = np.asarray(returns.values, dtype=np.float64)[None, :]
    out, flat = _window_sharpe(values, spec)
    if flat[0]:
        raise ZeroVolatilityError(f"{returns.id}: zero volatility, Sharpe undefined")
    return float(out[0])


def rolling_sharpe(returns: ReturnSeries, spec: SharpeSpec = SharpeSpec()) -> RollingSharpe:
    w = spec.window
    if len(returns) < w:
        raise DataError(f"{returns.id}: {len(returns)} returns is shorter than window {w}")
    values = np.asarray(returns.values, dtype=np.float64)
    out, flat = _window_sharpe(sliding_window_view(values, w), spec)
    ends = returns.dates[w - 1:]
    gaps = int(flat.sum())
    if gaps:
        points = tuple((d, s) for d, s, f in zip(ends, out.tolist(), flat.tolist()) if not f)
    else:
        points = tuple(zip(ends, out.tolist()))
    return RollingSharpe(points, gaps)


def cumulative_curve(returns: ReturnSeries, start: date | None = None) -> tuple[tuple[date, float], ...]:
    """Growth of 1.0; the leading 1.0 is dated ``start`` (default: the day before the first return)."""
    if len(returns) == 0:
        raise DataError(f"{returns.id}: empty return series")
    if start is None:
        start = returns.dates[0] - timedelta(days=1)
    elif start >= returns.dates[0]:
        raise DataError(f"{returns.id}: curve start {start} is not before first return {returns.dates[0]}")
    curve = [(start, 1.0)]
    growth = 1.0
    for d, r in zip(returns.dates, returns.values):
        growth *= 1.0 + r
        curve.append((d, growth))
    return tuple(curve)


def max_drawdown(curve: Sequence[tuple[date, float]]) -> float:
    if not curve:
        raise DataError("drawdown of an empty curve")
    worst = 0.0
    peak = -math.inf
    for d, value in curve:
        if not value > 0:
            raise DataError(f"non-positive curve value {value!r} on {d}")
        peak = max(peak, value)
        worst = min(worst, value / peak - 1.0)
    return worst


def backtest(
    portfolio: Portfolio,
    panel: Panel,
    spec: SharpeSpec = SharpeSpec(),
    start: date | None = None,
) -> BacktestResult:
    returns = portfolio_returns(portfolio, panel)
    curve = cumulative_curve(returns, start)
    try:
        ratio: float | None = sharpe(returns, spec)
    except ZeroVolatilityError:
        ratio = None
    rolling = rolling_sharpe(returns, spec) if len(returns) >= spec.window else RollingSharpe((), 0)
    return BacktestResult(portfolio.id, returns, curve, ratio, rolling, max_drawdown(curve))


def compare(results: Sequence[BacktestResult]) -> ComparisonTable:
    """Rank by Sharpe (descending, undefined last), ties by portfolio id."""
    if len(results) < 2:
        raise DataError(f"comparison needs at least 2 results, got {len(results)}")
    ids = [r.portfolio_id for r in results]
    if len(set(ids)) != len(ids):
        raise DataError(f"duplicate portfolio ids: {ids}")
    first = max(r.returns.dates[0] for r in results)
    last = min(r.returns.dates[-1] for r in results)
    if first > last:
        raise DataError("backtest results do not overlap in time")
    rows = [
        ComparisonRow(
            r.portfolio_id,
            cumulative_return(r.returns),
            r.sharpe,
            r.max_drawdown,
        )
        for r in results
    ]
    rows.sort(key=lambda row: (row.sharpe is None, -(row.sharpe or 0.0), row.portfolio))
    return ComparisonTable(tuple(rows))
