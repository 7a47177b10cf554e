"""Exception hierarchy shared by every module.

Each family maps onto one CLI exit status (see ``stockcouncil.cli``).
"""

from __future__ import annotations


class StockCouncilError(Exception):
    """Base class for all package errors."""


class ConfigError(StockCouncilError):
    """Invalid or missing configuration."""


class DataError(StockCouncilError, ValueError):
    """Input data violates a documented invariant."""


class ZeroVolatilityError(DataError):
    """A return window has no dispersion, so a Sharpe ratio is undefined."""


class CoverageError(DataError):
    """Price history does not cover a requested window."""


class NotFoundError(DataError):
    """A corpus item (filing, price file, news file) could not be resolved."""


class ProviderError(StockCouncilError):
    """Chat or embedding provider failure."""


class ScriptExhaustedError(ProviderError):
    """The scripted provider has no entry for a request."""


class ToolError(StockCouncilError):
    """Base class for tool dispatch failures."""


class UnknownToolError(ToolError):
    pass


class UnauthorizedToolError(ToolError):
    """An agent asked for a tool outside its data-access grant."""


class IterationLimitError(StockCouncilError):
    """An agent loop hit its iteration cap without a final rating."""


class JudgeParseError(StockCouncilError):
    """An evaluation judge replied with text that carries no verdict."""

    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


class ProtocolError(StockCouncilError):
    """A collaboration or debate session broke its turn protocol."""
