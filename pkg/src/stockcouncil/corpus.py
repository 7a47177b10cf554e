"""On-disk corpus layout.

    <root>/prices/<TICKER>.csv
    <root>/filings/<TICKER>_10K_<year>.txt   (and _10Q_)
    <root>/news/<TICKER>.jsonl
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from datetime import date, datetime
from pathlib import Path

from .errors import DataError, NotFoundError
from .marketdata import PriceSeries, load_price_csv


@dataclass(frozen=True)
class NewsItem:
    id: str
    ticker: str
    published_at: datetime
    headline: str
    body: str
    bloomberg_id: str | None = None

    @classmethod
    def from_json(cls, data: dict) -> NewsItem:
        try:
            stamp = str(data["published_at"]).replace("Z", "+00:00")
            return cls(
                id=str(data["id"]),
                ticker=str(data["ticker"]),
                published_at=datetime.fromisoformat(stamp),
                headline=str(data["headline"]),
                body=str(data["body"]),
                bloomberg_id=data.get("bloomberg_id"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed news item: {exc}") from None

    def to_json(self) -> dict:
        out = {
            "id": self.id,
            "ticker": self.ticker,
            "published_at": self.published_at.isoformat(),
            "headline": self.headline,
            "body": self.body,
        }
        if self.bloomberg_id is not None:
            out["bloomberg_id"] = self.bloomberg_id
        return out


def filing_tag(kind: str) -> str:
    tag = kind.upper().replace("-", "")
    if tag not in ("10K", "10Q"):
        raise DataError(f"unsupported filing kind {kind!r}")
    return tag


class Corpus:
    def __init__(self, root: str | Path):
        self.root = Path(root)

    @property
    def prices_dir(self) -> Path:
        return self.root / "prices"

    @property
    def filings_dir(self) -> Path:
        return self.root / "filings"

    @property
    def news_dir(self) -> Path:
        return self.root / "news"

    def has_prices(self, ticker: str) -> bool:
        return (self.prices_dir / f"{ticker}.csv").is_file()

    def prices(self, ticker: str) -> PriceSeries:
        path = self.prices_dir / f"{ticker}.csv"
        if not path.is_file():
            raise NotFoundError(f"no price file for {ticker} at {path}")
        return load_price_csv(path)

    def news(self, ticker: str, start: date | None = None, end: date | None = None) -> list[NewsItem]:
        """News items for ``ticker`` published within [start, end], oldest first."""
        path = self.news_dir / f"{ticker}.jsonl"
        if not path.is_file():
            return []
        items = []
        for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            try:
                item = NewsItem.from_json(json.loads(line))
            except json.JSONDecodeError as exc:
                raise DataError(f"{path.name} line {lineno}: {exc}") from None
            if item.ticker != ticker:
                continue
            day = item.published_at.date()
            if (start is None or day >= start) and (end is None or day <= end):
                items.append(item)
        items.sort(key=lambda it: (it.published_at, it.id))
        return items

    def filings(self, ticker: str, kind: str = "10-K") -> list[tuple[int, Path]]:
        """``(year, path)`` for every filing of ``kind`` under the exact file prefix, newest first."""
        tag = filing_tag(kind)
        pattern = re.compile(rf"^{re.escape(ticker)}_{tag}_(\d{{4}})\.txt$")
        found = []
        if self.filings_dir.is_dir():
            for path in self.filings_dir.iterdir():
                m = pattern.match(path.name)
                if m:
                    found.append((int(m.group(1)), path))
        return sorted(found, reverse=True)
