"""Multi-agent equity screening: specialist LLM agents, debate to consensus, and portfolio backtests."""

from __future__ import annotations

__version__ = "0.1.0"
