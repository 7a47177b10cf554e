from __future__ import annotations

import math
from datetime import date
from decimal import Decimal, getcontext

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import returns, write_prices
from stockcouncil.errors import DataError
from stockcouncil.marketdata import (
    TRADING_DAYS,
    PriceBar,
    align,
    annualize_return,
    annualize_volatility,
    cumulative_return,
    daily_returns,
    daily_volatility,
    load_price_csv,
)

getcontext().prec = 50


def test_load_21_rows(tmp_path):
    s = load_price_csv(write_prices(tmp_path / "AAA.csv", [100 + i for i in range(21)]))
    assert s.ticker == "AAA"
    assert len(s.bars) == 21
    assert s.dates == sorted(s.dates)


def test_load_sorts_rows(tmp_path):
    p = tmp_path / "BBB.csv"
    p.write_text("date,open,high,low,close,volume\n"
                 "2024-01-03,2,2,2,2,1\n2024-01-02,1,1,1,1,1\n")
    assert [b.close for b in load_price_csv(p).bars] == [1.0, 2.0]


def test_duplicate_date_rejected(tmp_path):
    p = tmp_path / "DUP.csv"
    p.write_text("date,open,high,low,close,volume\n2024-01-02,1,1,1,1,1\n2024-01-02,1,1,1,1,1\n")
    with pytest.raises(DataError, match="duplicate"):
        load_price_csv(p)


def test_zero_close_rejected(tmp_path):
    p = tmp_path / "ZERO.csv"
    p.write_text("date,open,high,low,close,volume\n2024-01-02,1,1,0,0,1\n")
    with pytest.raises(DataError):
        load_price_csv(p)


def test_bad_header_rejected(tmp_path):
    p = tmp_path / "HDR.csv"
    p.write_text("day,close\n2024-01-02,1\n")
    with pytest.raises(DataError):
        load_price_csv(p)


def test_bar_ordering_checked():
    with pytest.raises(DataError):
        PriceBar(date(2024, 1, 2), 10.0, 9.0, 8.0, 9.5, 1)


@pytest.mark.parametrize("closes, expected", [
    ([100, 110], [0.10]),
    ([100, 100, 100], [0.0, 0.0]),
    ([100, 110, 99], [0.10, -0.10]),
])
def test_daily_returns(tmp_path, closes, expected):
    rets = daily_returns(load_price_csv(write_prices(tmp_path / "X.csv", closes)))
    assert rets.values == pytest.approx(expected, rel=1e-12, abs=1e-15)


@pytest.mark.parametrize("values, expected", [([0.0, 0.0], 0.0), ([0.10, -0.10], -0.01), ([0.05], 0.05)])
def test_cumulative_return(values, expected):
    assert cumulative_return(values) == pytest.approx(expected, rel=1e-12, abs=1e-15)


def test_annualize_return_examples():
    assert annualize_return(0.0, 126) == 0.0
    assert annualize_return(0.10, 252) == pytest.approx(0.10, rel=1e-15)
    # 1.05**4 - 1 evaluated in decimal arithmetic
    oracle = Decimal("1.05") ** 4 - 1
    assert oracle == Decimal("0.21550625")
    assert annualize_return(0.05, 63) == pytest.approx(0.21550625, rel=1e-12)


def test_annualize_return_rejects_bad_input():
    with pytest.raises(DataError):
        annualize_return(-1.0, 10)
    with pytest.raises(DataError):
        annualize_return(0.1, 0)


def test_daily_volatility_examples():
    assert daily_volatility([0.01, 0.01, 0.01]) == 0.0
    assert daily_volatility([0.0, 0.02]) == pytest.approx(0.01414213562373095, rel=1e-12)
    with pytest.raises(DataError):
        daily_volatility([0.01])


def test_daily_volatility_matches_two_pass_oracle():
    import random

    rng = random.Random(7)
    xs = [rng.gauss(0.0005, 0.02) for _ in range(1000)]
    dx = [Decimal(x) for x in xs]
    mean = sum(dx) / len(dx)
    oracle = math.sqrt(float(sum((x - mean) ** 2 for x in dx) / (len(dx) - 1)))
    assert daily_volatility(xs) == pytest.approx(oracle, rel=1e-12)


def test_annualize_volatility_examples():
    assert annualize_volatility(0.0) == 0.0
    assert annualize_volatility(1 / math.sqrt(252)) == pytest.approx(1.0, rel=1e-15)
    assert annualize_volatility(0.01) == pytest.approx(0.15874507866387544, rel=1e-12)
    assert TRADING_DAYS == 252


def test_align_examples():
    a = returns([0.01] * 10, sid="a")
    b = returns([0.02] * 8, start=a.dates[2], sid="b")
    panel = align([a, b])
    assert len(panel.dates) == 8
    assert panel.dates == b.dates
    same = align([a, returns([0.0] * 10, sid="c")])
    assert len(same.dates) == 10 and set(same.columns) == {"a", "c"}
    with pytest.raises(DataError):
        align([a, returns([0.0] * 3, start=date(2030, 1, 1), sid="d")])
    with pytest.raises(DataError):
        align([a, a])


def test_align_idempotent():
    a = returns([0.01] * 10, sid="a")
    b = returns([0.02] * 8, start=a.dates[2], sid="b")
    panel = align([a, b])
    again = align([panel.series("a"), panel.series("b")])
    assert again == panel


finite_r = st.floats(min_value=-0.95, max_value=3.0, allow_nan=False)


@given(finite_r)
def test_annualize_identity_at_252(r):
    assert annualize_return(r, 252) == pytest.approx(r, rel=1e-12, abs=1e-15)


@given(st.floats(min_value=-0.9, max_value=2.0), st.floats(min_value=-0.9, max_value=2.0), st.integers(1, 1000))
def test_annualize_monotone(a, b, n):
    if a < b:
        assert annualize_return(a, n) <= annualize_return(b, n)


@given(st.floats(min_value=0, max_value=1), st.floats(min_value=0, max_value=100))
def test_volatility_scaling(sigma, k):
    assert annualize_volatility(k * sigma) == pytest.approx(k * annualize_volatility(sigma), rel=1e-12, abs=1e-300)


step = st.floats(min_value=-0.5, max_value=0.5, allow_nan=False)


@given(st.lists(step, min_size=1, max_size=50), st.lists(step, min_size=1, max_size=50))
def test_cumulative_concatenation(xs, ys):
    joined = cumulative_return(xs + ys)
    composed = (1 + cumulative_return(xs)) * (1 + cumulative_return(ys)) - 1
    assert joined == pytest.approx(composed, rel=1e-12, abs=1e-14)


@given(st.floats(min_value=1.0, max_value=1000.0),
       st.lists(st.floats(min_value=0.5, max_value=2.0), min_size=1, max_size=60))
def test_returns_reproduce_price_ratio(tmp_path_factory, first, ratios):
    # daily moves between -50% and +100%; a return stored as c1/c0 - 1 cannot
    # carry full relative precision through a near-total one-day loss
    closes = [round(first, 4)]
    for ratio in ratios:
        closes.append(max(round(closes[-1] * ratio, 4), 0.0001))
    path = write_prices(tmp_path_factory.mktemp("p") / "Q.csv", closes)
    s = load_price_csv(path)
    assert cumulative_return(daily_returns(s)) == pytest.approx(s.closes[-1] / s.closes[0] - 1, rel=1e-12, abs=1e-14)
