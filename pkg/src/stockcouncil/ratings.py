"""Rating vocabulary and the ``RATING: <token>`` output grammar."""

from __future__ import annotations

import re
from enum import Enum


class Rating(str, Enum):
    BUY = "BUY"
    SELL = "SELL"
    ABSTAIN = "ABSTAIN"

    def __str__(self) -> str:
        return self.value


_TOKEN = re.compile(r"RATING:\s*(BUY|SELL)\b", re.IGNORECASE)


def extract_rating(text: str) -> Rating:
    """Last ``RATING: BUY|SELL`` token wins; a bare BUY/SELL final line is the fallback."""
    found = _TOKEN.findall(text)
    if found:
        return Rating(found[-1].upper())
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if lines:
        last = re.sub(r"[^A-Za-z]", "", lines[-1]).upper()
        if last in ("BUY", "SELL"):
            return Rating(last)
    return Rating.ABSTAIN
