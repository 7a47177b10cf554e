"""Commands behind the CLI: analyze, debate, screen, backtest.

Every command writes under ``<output_dir>/<run-id>/`` and nothing it writes
depends on wall-clock time or thread scheduling, so scripted runs repeat
byte for byte.
"""

from __future__ import annotations

import json
import logging
import re
import sys
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from pathlib import Path
from typing import Any

from .agents import AgentReport, AnalysisSettings, build_team, risk_profile
from .analytics import (
    BacktestResult,
    Portfolio,
    SharpeSpec,
    backtest,
    compare,
    equal_weight,
)
from .config import RunConfig
from .corpus import Corpus
from .errors import ConfigError, CoverageError, DataError
from .llm import HttpProvider, Provider, ScriptedProvider
from .marketdata import PriceSeries, align, daily_returns
from .orchestrator import (
    NO_CONSENSUS,
    ConsensusDecision,
    ConsolidatedReport,
    Transcript,
    run_collaboration,
    run_debate,
)
from .ratings import Rating

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NO_CONSENSUS = 4
EXIT_PROVIDER = 5

BENCHMARK_ID = "benchmark"
MULTI_AGENT_ID = "multi_agent"


def write_json(path: Path, data: Any) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


def default_run_id() -> str:
    return datetime.now().strftime("%Y%m%dT%H%M%S")


@dataclass(frozen=True)
class RunDirs:
    root: Path

    @classmethod
    def create(cls, config: RunConfig, run_id: str | None) -> RunDirs:
        run_id = run_id or default_run_id()
        if not re.fullmatch(r"[A-Za-z0-9._-]+", run_id):
            raise ConfigError(f"run id {run_id!r} may only contain letters, digits, '.', '_' and '-'")
        dirs = cls(config.output_dir / run_id)
        for sub in (dirs.reports, dirs.transcripts, dirs.portfolios, dirs.backtests):
            sub.mkdir(parents=True, exist_ok=True)
        return dirs

    @property
    def reports(self) -> Path:
        return self.root / "reports"

    @property
    def transcripts(self) -> Path:
        return self.root / "transcripts"

    @property
    def portfolios(self) -> Path:
        return self.root / "portfolios"

    @property
    def backtests(self) -> Path:
        return self.root / "backtests"


def make_provider(config: RunConfig, ticker: str) -> Provider:
    """A fresh provider per ticker session; a script directory supplies ``<TICKER>.json``."""
    if config.provider == "http":
        return HttpProvider(
            base_url=config.base_url,
            model=config.model,
            api_key_env=config.api_key_env,
            embedding_model=config.embedding_model,
            retry_limit=config.retry_limit,
        )
    script = config.script
    if script is None:
        raise ConfigError("no script configured for the scripted provider")
    if script.is_dir():
        script = script / f"{ticker}.json"
    return ScriptedProvider.from_file(script)


def analysis_settings(config: RunConfig, provider: Provider | None = None) -> AnalysisSettings:
    """Agent settings; the HTTP provider embeds for retrieval only when an embedding model is named."""
    use_remote = config.provider == "http" and config.embedding_model is not None
    return AnalysisSettings(
        analysis_end=config.analysis_end,
        price_lookback_days=config.price_lookback_days,
        news_lookback_days=config.news_lookback_days,
        periods_per_year=config.trading_days,
        top_k=config.top_k,
        chunk_budget=config.chunk_budget,
        chunk_overlap=config.chunk_overlap,
        embedder=provider if use_remote else None,
    )


def team(config: RunConfig):
    return build_team(risk_profile(config.risk_profile), max_iterations=config.max_iterations)


def load_universe(path: str | Path) -> list[str]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"universe file {path} not found")
    tickers = []
    for line in path.read_text(encoding="utf-8").splitlines():
        ticker = line.split("#", 1)[0].strip()
        if ticker:
            tickers.append(ticker)
    if not tickers:
        raise DataError(f"universe file {path} lists no tickers")
    dupes = sorted({t for t in tickers if tickers.count(t) > 1})
    if dupes:
        raise DataError(f"universe file {path} repeats {dupes}")
    return tickers


def _save_report(dirs: RunDirs, report: ConsolidatedReport) -> None:
    write_json(dirs.reports / f"{report.ticker}.report.json", report.to_json())
    (dirs.reports / f"{report.ticker}.report.txt").write_text(report.render(), encoding="utf-8")


def _save_transcript(dirs: RunDirs, transcript: Transcript) -> None:
    transcript.save(dirs.transcripts / f"{transcript.session_id}.jsonl")


@dataclass(frozen=True)
class TickerSession:
    ticker: str
    report: ConsolidatedReport
    decision: ConsensusDecision | None = None

    @property
    def agent_reports(self) -> tuple[AgentReport, ...]:
        return self.report.sources


def analyze_ticker(ticker: str, config: RunConfig, dirs: RunDirs, debate: bool = False) -> TickerSession:
    corpus = Corpus(config.corpus_root)
    provider = make_provider(config, ticker)
    agents = team(config)
    report, transcript = run_collaboration(
        agents, ticker, corpus, provider, analysis_settings(config, provider), round_cap=config.collab_round_cap
    )
    _save_report(dirs, report)
    _save_transcript(dirs, transcript)
    decision = None
    if debate:
        decision, transcript = run_debate(agents, ticker, report.sources, provider, round_cap=config.round_cap)
        _save_transcript(dirs, transcript)
        write_json(dirs.reports / f"{ticker}.decision.json", decision.to_json())
    return TickerSession(ticker, report, decision)


def cmd_analyze(ticker: str, config: RunConfig, run_id: str | None = None) -> Path:
    dirs = RunDirs.create(config, run_id)
    analyze_ticker(ticker, config, dirs)
    return dirs.reports / f"{ticker}.report.json"


def apply_override(decision: ConsensusDecision, policy: str | None) -> ConsensusDecision:
    if decision.decision != NO_CONSENSUS or not policy or not policy.startswith("override:"):
        return decision
    return ConsensusDecision(decision.ticker, policy.split(":", 1)[1], decision.rounds,
                             decision.votes, override_by_user=True)


def ask_human(decision: ConsensusDecision, read: Callable[[str], str] = input) -> str:
    """Interactive override after NO_CONSENSUS: 'include', 'fail' or 'override:<BUY|SELL>'."""
    print(f"No consensus on {decision.ticker} after {decision.rounds} rounds.", file=sys.stderr)
    for i, rnd in enumerate(decision.votes, start=1):
        print(f"  round {i}: " + ", ".join(f"{a}={r.value}" for a, r in rnd.items()), file=sys.stderr)
    while True:
        answer = read("Override with BUY or SELL, or press Enter to leave it unresolved: ").strip().upper()
        if answer in ("BUY", "SELL"):
            return f"override:{answer}"
        if answer == "":
            return "fail"


@dataclass(frozen=True)
class DebateOutcome:
    decision: ConsensusDecision
    path: Path
    exit_code: int


def cmd_debate(ticker: str, config: RunConfig, run_id: str | None = None,
               interactive: bool | None = None, read: Callable[[str], str] = input) -> DebateOutcome:
    """Analyses, collaboration report and debate for one ticker.

    On NO_CONSENSUS the ``on_no_consensus`` policy decides; when it is unset a
    terminal user is asked, anything else gets the NO_CONSENSUS exit status.
    """
    dirs = RunDirs.create(config, run_id)
    session = analyze_ticker(ticker, config, dirs, debate=True)
    decision = session.decision
    path = dirs.reports / f"{ticker}.decision.json"
    policy = config.on_no_consensus
    if decision.decision == NO_CONSENSUS and policy is None:
        interactive = sys.stdin.isatty() if interactive is None else interactive
        policy = ask_human(decision, read) if interactive else "fail"
    decision = apply_override(decision, policy)
    write_json(path, decision.to_json())
    code = EXIT_NO_CONSENSUS if decision.decision == NO_CONSENSUS and policy == "fail" else EXIT_OK
    return DebateOutcome(decision, path, code)


@dataclass
class ScreenOutcome:
    universe: list[str]
    decisions: dict[str, ConsensusDecision]
    portfolios: dict[str, Portfolio]
    flags: list[str] = field(default_factory=list)
    exit_code: int = EXIT_OK

    def to_json(self) -> dict:
        return {
            "universe": self.universe,
            "decisions": {t: d.to_json() for t, d in self.decisions.items()},
            "portfolios": sorted(self.portfolios),
            "flags": self.flags,
        }


def single_agent_portfolios(universe: Sequence[str], sessions: Sequence[TickerSession], inception: date,
                            flags: list[str]) -> dict[str, Portfolio]:
    """Per agent: the universe minus the tickers that agent rated SELL on its own.

    An agent that abstained on half the universe or more gets no portfolio.
    """
    by_agent: dict[str, dict[str, Rating]] = {}
    for s in sessions:
        for report in s.agent_reports:
            by_agent.setdefault(report.agent_id, {})[s.ticker] = report.rating
    out = {}
    for agent_id, ratings in by_agent.items():
        abstained = sum(r is Rating.ABSTAIN for r in ratings.values())
        if 2 * abstained >= len(universe):
            flags.append(f"{agent_id}: abstained on {abstained} of {len(universe)} tickers; portfolio omitted")
            continue
        keep = [t for t in universe if ratings.get(t) is not Rating.SELL]
        if not keep:
            flags.append(f"{agent_id}: rated every ticker SELL; portfolio omitted")
            continue
        out[agent_id] = equal_weight(keep, inception, agent_id)
    return out


def screen_inception(config: RunConfig) -> date:
    if config.inception is not None:
        return config.inception
    if config.analysis_end is not None:
        return config.analysis_end + timedelta(days=1)
    raise ConfigError("screen needs inception or analysis_end in the config")


def cmd_screen(universe_path: str | Path, config: RunConfig, run_id: str | None = None) -> ScreenOutcome:
    universe = load_universe(universe_path)
    inception = screen_inception(config)
    dirs = RunDirs.create(config, run_id)
    with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
        sessions = list(pool.map(lambda t: analyze_ticker(t, config, dirs, debate=True), universe))

    policy = config.on_no_consensus or "include"
    decisions = {}
    for s in sessions:
        decision = apply_override(s.decision, policy)
        decisions[s.ticker] = decision
        if decision.override_by_user:
            write_json(dirs.reports / f"{s.ticker}.decision.json", decision.to_json())

    flags: list[str] = []
    unresolved = [t for t, d in decisions.items() if d.decision == NO_CONSENSUS]
    if unresolved:
        flags.append(f"no consensus on {unresolved}")
    if len(unresolved) == len(universe):
        flags.append("no ticker reached consensus")

    portfolios = {BENCHMARK_ID: equal_weight(universe, inception, BENCHMARK_ID)}
    keep = [t for t in universe if decisions[t].decision != "SELL"]
    if keep:
        portfolios[MULTI_AGENT_ID] = equal_weight(keep, inception, MULTI_AGENT_ID)
    else:
        flags.append("every ticker was voted SELL; multi-agent portfolio omitted")
    portfolios.update(single_agent_portfolios(universe, sessions, inception, flags))
    for pid, portfolio in portfolios.items():
        write_json(dirs.portfolios / f"{pid}.json", portfolio.to_json())

    code = EXIT_NO_CONSENSUS if unresolved and policy == "fail" else EXIT_OK
    outcome = ScreenOutcome(universe, decisions, portfolios, flags, code)
    write_json(dirs.root / "screen.json", outcome.to_json())
    for flag in flags:
        log.warning("screen: %s", flag)
    return outcome


def covered_window(series: PriceSeries, start: date, end: date, last_common: date) -> PriceSeries:
    first = series.dates[0]
    if first > start:
        raise CoverageError(f"{series.ticker}: prices start {first}, after backtest start {start}")
    if series.window(None, end).dates[-1] != last_common:
        raise CoverageError(f"{series.ticker}: prices end {series.window(None, end).dates[-1]}, "
                            f"before the last common date {last_common}")
    anchor = series.window(None, start).dates[-1]
    return series.window(anchor, end)


def load_panel(tickers: Sequence[str], corpus: Corpus, start: date, end: date):
    """Returns over (start, end] for ``tickers``; any hole in coverage names the ticker."""
    series = {}
    for ticker in tickers:
        if not corpus.has_prices(ticker):
            raise CoverageError(f"{ticker}: no price file in {corpus.prices_dir}")
        series[ticker] = corpus.prices(ticker)
    clipped = {}
    for ticker, s in series.items():
        try:
            clipped[ticker] = s.window(None, end)
        except DataError:
            raise CoverageError(f"{ticker}: no prices on or before {end}") from None
    last_common = min(s.dates[-1] for s in clipped.values())
    windows = [covered_window(series[t], start, end, last_common) for t in tickers]
    for w in windows:
        if len(w.bars) < 2:
            raise CoverageError(f"{w.ticker}: fewer than two prices in [{start}, {end}]")
    return align(daily_returns(w) for w in windows)


@dataclass(frozen=True)
class BacktestOutcome:
    results: tuple[BacktestResult, ...]
    csv_path: Path


def backtest_files(dirs: RunDirs, result: BacktestResult) -> None:
    stem = dirs.backtests / result.portfolio_id
    write_json(stem.with_suffix(".json"), {
        "portfolio": result.portfolio_id,
        "sharpe": result.sharpe,
        "final_cum_return": result.final_cum_return,
        "max_drawdown": result.max_drawdown,
        "rolling_gaps": result.rolling.gaps,
        "curve": [[d.isoformat(), v] for d, v in result.curve],
    })
    lines = ["date,rolling_sharpe"] + [f"{d.isoformat()},{v!r}" for d, v in result.rolling.points]
    (dirs.backtests / f"{result.portfolio_id}.rolling.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_backtest(portfolio_paths: Sequence[str | Path], benchmark_path: str | Path, config: RunConfig,
                 start: date | None = None, end: date | None = None, run_id: str | None = None,
                 prices_root: str | Path | None = None) -> BacktestOutcome:
    start = start or config.backtest_start
    end = end or config.backtest_end
    if start is None or end is None:
        raise ConfigError("backtest needs --start and --end (or backtest_start/backtest_end in the config)")
    if start >= end:
        raise ConfigError(f"backtest start {start} must precede end {end}")
    portfolios = [Portfolio.load(benchmark_path)] + [Portfolio.load(p) for p in portfolio_paths]
    ids = [p.id for p in portfolios]
    if len(set(ids)) != len(ids):
        raise DataError(f"duplicate portfolio ids: {ids}")
    corpus = Corpus(prices_root or config.corpus_root)
    tickers = sorted({t for p in portfolios for t in p.holdings})
    panel = load_panel(tickers, corpus, start, end)
    spec = SharpeSpec(config.rf_annual, config.trading_days, config.rolling_window)
    dirs = RunDirs.create(config, run_id)
    results = tuple(backtest(p, panel, spec, start) for p in portfolios)
    for result in results:
        backtest_files(dirs, result)
    csv_path = dirs.backtests / "comparison.csv"
    csv_path.write_text(compare(results).to_csv(), encoding="utf-8")
    return BacktestOutcome(results, csv_path)
