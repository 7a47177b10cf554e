from __future__ import annotations

import csv
from datetime import date, timedelta
from pathlib import Path

import pytest

from stockcouncil.marketdata import ReturnSeries

REPO = Path(__file__).resolve().parents[1]
DEMO = REPO / "demo"


def write_prices(path: Path, closes, start: date = date(2024, 1, 2)) -> Path:
    """Minimal OHLCV file with open=low=high=close on consecutive business days."""
    path.parent.mkdir(parents=True, exist_ok=True)
    d = start
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "open", "high", "low", "close", "volume"])
        for c in closes:
            while d.weekday() >= 5:
                d += timedelta(days=1)
            w.writerow([d.isoformat(), c, c, c, c, 1000])
            d += timedelta(days=1)
    return path


def returns(values, start: date = date(2024, 1, 1), sid: str = "r") -> ReturnSeries:
    return ReturnSeries(sid, tuple(start + timedelta(days=i) for i in range(len(values))), tuple(values))


@pytest.fixture
def demo_dir() -> Path:
    return DEMO


def make_corpus(root: Path, ticker: str = "ACME", closes=None, news=None, filing: str | None = None) -> Path:
    """Corpus directory with whichever of prices/news/filing are given."""
    for sub in ("prices", "news", "filings"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    if closes is not None:
        write_prices(root / "prices" / f"{ticker}.csv", closes)
    if news:
        import json

        lines = [json.dumps({"id": f"n{i}", "ticker": ticker, "published_at": stamp, "headline": head, "body": body})
                 for i, (stamp, head, body) in enumerate(news)]
        (root / "news" / f"{ticker}.jsonl").write_text("\n".join(lines) + "\n")
    if filing is not None:
        (root / "filings" / f"{ticker}_10K_2023.txt").write_text(filing)
    return root


FILING = """ACME CORP ANNUAL REPORT
Item 1. Business
Acme sells industrial anvils and rockets to wholesale customers.
Item 1A. Risk Factors
Supply of steel is volatile. A few customers account for most bookings.
Item 7. Management's Discussion and Analysis
Revenue was $500.0 million. Gross margin was 40.0%. Operating loss was $72.5 million and the operating margin was -14.5%.
Net cash provided by operating activities was $90.0 million while net loss was $80.0 million.
We made progress toward our goals by opening two plants.
"""

NEWS = [
    ("2024-01-05T10:00:00Z", "Acme wins contract", "Acme signed a large contract."),
    ("2024-01-12T10:00:00Z", "Acme director sells shares", "A director sold stock."),
    ("2024-02-20T10:00:00Z", "Late item", "Published after the window."),
]


ACCEPTANCE: dict[int, str] = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[criterion] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[key])
