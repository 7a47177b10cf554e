"""Run configuration: a flat ``key = value`` file.

Recognised keys (relative paths resolve against the config file's directory)::

    corpus_root        directory holding prices/, filings/, news/      (required)
    output_dir         where out/<run-id>/ trees are written            (default: out)
    universe           ticker list, one per line, '#' comments          (optional)
    provider           scripted | http                                  (default: scripted)
    script             scripted replies: a JSON file or a directory of <TICKER>.json
    base_url, model, embedding_model, api_key_env                       (http provider)
    retry_limit        retries on transient provider errors, 0..10      (default: 2)
    risk_profile       risk-averse | risk-neutral                       (default: risk-neutral)
    trading_days       periods per year, 1..366                         (default: 252)
    rolling_window     rolling Sharpe window, >= 2                      (default: 21)
    rf_annual          annual risk-free rate, -0.5..1                   (default: 0)
    round_cap          debate round cap, 2..50                          (default: 6)
    collab_round_cap   collaboration round cap, 2..50                   (default: 4)
    parallelism        concurrent ticker sessions, 1..64                (default: 4)
    max_iterations     agent tool-loop cap, 1..50                       (default: 8)
    analysis_end       last date agents may see (YYYY-MM-DD)            (optional)
    price_lookback_days, news_lookback_days                             (optional, >= 1)
    inception          portfolio inception date                          (optional)
    backtest_start, backtest_end                                         (optional)
    top_k, chunk_budget, chunk_overlap                                   (retrieval)
    on_no_consensus    include | fail | override:BUY | override:SELL    (unset: debate asks a
                       terminal user and otherwise fails; screen includes)

The API key itself never appears in the file; ``api_key_env`` names the
environment variable that holds it.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass
from datetime import date
from pathlib import Path

from .agents import RISK_LABELS
from .errors import ConfigError
from .marketdata import TRADING_DAYS

PROVIDERS = ("scripted", "http")
NO_CONSENSUS_POLICIES = ("include", "fail", "override:BUY", "override:SELL")


@dataclass(frozen=True)
class RunConfig:
    corpus_root: Path
    output_dir: Path = Path("out")
    universe: Path | None = None
    provider: str = "scripted"
    script: Path | None = None
    base_url: str = "https://api.openai.com/v1"
    model: str = "gpt-4o"
    embedding_model: str | None = None
    api_key_env: str = "OPENAI_API_KEY"
    retry_limit: int = 2
    risk_profile: str = "risk-neutral"
    trading_days: int = TRADING_DAYS
    rolling_window: int = 21
    rf_annual: float = 0.0
    round_cap: int = 6
    collab_round_cap: int = 4
    parallelism: int = 4
    max_iterations: int = 8
    analysis_end: date | None = None
    price_lookback_days: int | None = None
    news_lookback_days: int | None = None
    inception: date | None = None
    backtest_start: date | None = None
    backtest_end: date | None = None
    top_k: int = 4
    chunk_budget: int = 4000
    chunk_overlap: int = 200
    on_no_consensus: str | None = None

    def validate(self) -> RunConfig:
        def in_range(name: str, lo: float, hi: float) -> None:
            value = getattr(self, name)
            if value is not None and not lo <= value <= hi:
                raise ConfigError(f"{name}={value} outside [{lo}, {hi}]")

        if not self.corpus_root.is_dir():
            raise ConfigError(f"corpus_root {self.corpus_root} is not a directory")
        if self.universe is not None and not self.universe.is_file():
            raise ConfigError(f"universe file {self.universe} not found")
        if self.provider not in PROVIDERS:
            raise ConfigError(f"provider must be one of {PROVIDERS}, got {self.provider!r}")
        if self.provider == "scripted":
            if self.script is None:
                raise ConfigError("the scripted provider needs a script path")
            if not self.script.exists():
                raise ConfigError(f"script path {self.script} not found")
        if self.risk_profile not in RISK_LABELS:
            raise ConfigError(f"risk_profile must be one of {RISK_LABELS}, got {self.risk_profile!r}")
        if self.on_no_consensus is not None and self.on_no_consensus not in NO_CONSENSUS_POLICIES:
            raise ConfigError(f"on_no_consensus must be one of {NO_CONSENSUS_POLICIES}")
        in_range("retry_limit", 0, 10)
        in_range("trading_days", 1, 366)
        in_range("rolling_window", 2, 10_000)
        in_range("rf_annual", -0.5, 1.0)
        in_range("round_cap", 2, 50)
        in_range("collab_round_cap", 2, 50)
        in_range("parallelism", 1, 64)
        in_range("max_iterations", 1, 50)
        in_range("price_lookback_days", 1, 100_000)
        in_range("news_lookback_days", 1, 100_000)
        in_range("top_k", 1, 1000)
        in_range("chunk_overlap", 0, 100_000)
        if self.chunk_budget <= self.chunk_overlap:
            raise ConfigError(f"chunk_budget {self.chunk_budget} must exceed chunk_overlap {self.chunk_overlap}")
        if self.backtest_start and self.backtest_end and self.backtest_start >= self.backtest_end:
            raise ConfigError("backtest_start must precede backtest_end")
        return self

    def override(self, **changes) -> RunConfig:
        """Copy with non-None ``changes`` applied, then revalidated (CLI flags use this)."""
        kept = {k: v for k, v in changes.items() if v is not None}
        return dataclasses.replace(self, **kept).validate() if kept else self


_PATHS = {"corpus_root", "output_dir", "universe", "script"}
_DATES = {"analysis_end", "inception", "backtest_start", "backtest_end"}


def _convert(name: str, raw: str, field_type: str, base: Path):
    if name in _PATHS:
        path = Path(raw).expanduser()
        return path if path.is_absolute() else (base / path).resolve()
    if name in _DATES:
        return date.fromisoformat(raw)
    if "int" in field_type:
        return int(raw)
    if "float" in field_type:
        return float(raw)
    return raw


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string("[run]\n" + path.read_text(encoding="utf-8"), source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    fields = {f.name: f for f in dataclasses.fields(RunConfig)}
    values = {}
    for key, raw in parser["run"].items():
        if key not in fields:
            raise ConfigError(f"{path}: unknown key {key!r}")
        raw = raw.strip()
        if not raw:
            continue
        try:
            values[key] = _convert(key, raw, str(fields[key].type), path.parent.resolve())
        except ValueError as exc:
            raise ConfigError(f"{path}: bad value for {key}: {exc}") from None
    if "corpus_root" not in values:
        raise ConfigError(f"{path}: corpus_root is required")
    return RunConfig(**values).validate()
