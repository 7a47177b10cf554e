"""Agent tools, their data-access grants, and the dispatch telemetry.

Access follows the data each tool reads::

    prices / volume  -> valuation agent
    10-K / 10-Q      -> fundamental agent
    news             -> sentiment agent

The ticker itself reaches every agent through its task header, not a tool.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import time
from collections.abc import Callable, Collection, Mapping, Sequence
from dataclasses import dataclass, field
from datetime import date, timedelta
from types import MappingProxyType
from typing import Any

from . import prompts
from .corpus import Corpus, NewsItem, filing_tag
from .errors import DataError, NotFoundError, ProviderError, StockCouncilError, UnauthorizedToolError, UnknownToolError
from .llm import ChatMessage, CompletionRequest, HashEmbedder, Provider, complete
from .marketdata import (
    TRADING_DAYS,
    PriceSeries,
    annualize_return,
    annualize_volatility,
    cumulative_return,
    daily_returns,
    daily_volatility,
)
from .rag import (
    DEFAULT_BUDGET,
    DEFAULT_OVERLAP,
    DEFAULT_TOP_K,
    Document,
    GroundedAnswer,
    VectorStore,
    answer_with_context,
    chunk_by_section,
    parse_filing,
    retrieve,
)
from .ratings import Rating, extract_rating

log = logging.getLogger(__name__)

ROLES = ("valuation", "sentiment", "fundamental")

TOOL_DATA = {
    "valuation_metrics": "prices",
    "fetch_news": "news",
    "summarize_with_reflection": "news",
    "pull_fundamental_report": "filings",
    "fundamental_qa": "filings",
}

ROLE_DATA = {
    "valuation": frozenset({"ticker", "prices"}),
    "sentiment": frozenset({"ticker", "news"}),
    "fundamental": frozenset({"ticker", "filings"}),
}

RESOLVE_ATTEMPTS = 3


def authorized(role: str, tool: str) -> bool:
    if role not in ROLE_DATA:
        raise ValueError(f"unknown role {role!r}")
    if tool not in TOOL_DATA:
        raise UnknownToolError(f"unknown tool {tool!r}; registered: {sorted(TOOL_DATA)}")
    return TOOL_DATA[tool] in ROLE_DATA[role]


def tools_for_role(role: str) -> frozenset[str]:
    return frozenset(t for t in TOOL_DATA if authorized(role, t))


@dataclass(frozen=True)
class ToolCall:
    tool: str
    args: dict[str, Any]
    caller: str
    seq: int

    @property
    def args_digest(self) -> str:
        blob = json.dumps(self.args, sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def to_json(self) -> dict:
        return {"seq": self.seq, "tool": self.tool, "caller": self.caller,
                "args": self.args, "args_digest": self.args_digest}


@dataclass(frozen=True)
class ToolResult:
    tool: str
    payload: dict[str, Any] | None
    elapsed: float
    error: str | None = None

    def __post_init__(self) -> None:
        if (self.payload is None) == (self.error is None):
            raise ValueError("a tool result carries exactly one of payload or error")

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_json(self) -> dict:
        # elapsed time is logged, not persisted, so stored runs stay byte-stable
        out: dict[str, Any] = {"tool": self.tool, "ok": self.ok}
        if self.ok:
            out["payload"] = self.payload
        else:
            out["error"] = self.error
        return out


@dataclass(frozen=True)
class ValuationMetrics:
    ticker: str
    start: date
    end: date
    trading_days: int
    cumulative_return: float
    annualized_return: float
    daily_volatility: float | None
    annualized_volatility: float | None

    def to_json(self) -> dict:
        return {
            "ticker": self.ticker,
            "start": self.start.isoformat(),
            "end": self.end.isoformat(),
            "trading_days": self.trading_days,
            "cumulative_return": self.cumulative_return,
            "annualized_return": self.annualized_return,
            "daily_volatility": self.daily_volatility,
            "annualized_volatility": self.annualized_volatility,
        }


@dataclass(frozen=True)
class ReflectiveSummary:
    draft: str
    critique: str
    refined: str
    recommendation: Rating

    @property
    def phases(self) -> list[tuple[str, str]]:
        return [("draft", self.draft), ("critique", self.critique), ("refine", self.refined)]


class ReflectionError(ProviderError):
    """Provider failed part-way through a reflective summary; ``phases`` keeps what finished."""

    def __init__(self, message: str, phases: list[tuple[str, str]]):
        super().__init__(message)
        self.phases = phases


def valuation_metrics(
    prices: PriceSeries,
    start: date | None = None,
    end: date | None = None,
    periods_per_year: int = TRADING_DAYS,
) -> ValuationMetrics:
    """Return and volatility over the bars in [start, end].

    With only two bars there is one return and the daily volatility is
    left undefined (``None``) rather than invented.
    """
    if start is not None and end is not None and start > end:
        raise DataError(f"window start {start} is after end {end}")
    window = prices.window(start, end)
    if len(window.bars) < 2:
        raise DataError(f"{prices.ticker}: need at least 2 bars between {start} and {end}")
    rets = daily_returns(window)
    r_cum = cumulative_return(rets)
    n = len(rets)
    sigma = daily_volatility(rets) if n >= 2 else None
    return ValuationMetrics(
        ticker=prices.ticker,
        start=window.bars[0].date,
        end=window.bars[-1].date,
        trading_days=n,
        cumulative_return=r_cum,
        annualized_return=annualize_return(r_cum, n, periods_per_year),
        daily_volatility=sigma,
        annualized_volatility=None if sigma is None else annualize_volatility(sigma, periods_per_year),
    )


def summarize_with_reflection(
    items: Sequence[str], provider: Provider, ticker: str = "", speaker: str = "sentiment_agent"
) -> ReflectiveSummary:
    """Draft, critique and refine a news summary in one running conversation."""
    items = [it for it in items if it.strip()]
    if not items:
        raise DataError("no news items to summarize")
    news = "\n\n".join(f"({i}) {body}" for i, body in enumerate(items, start=1))
    messages = [ChatMessage("system", "tool:summarize_with_reflection", prompts.REFLECTION_SYSTEM)]
    phases: list[tuple[str, str]] = []
    for phase, instruction in prompts.REFLECTION_STEPS.items():
        body = prompts.task_header(ticker, speaker, f"summarize ({phase})") + instruction
        if phase == "draft":
            body += f"\n\nNews items:\n{news}"
        messages.append(ChatMessage("user", "tool:summarize_with_reflection", body))
        try:
            reply = complete(provider, CompletionRequest(tuple(messages), speaker=speaker))
        except ProviderError as exc:
            raise ReflectionError(f"reflection failed during {phase}: {exc}", phases) from exc
        phases.append((phase, reply.content))
        messages.append(reply)
    draft, critique, refined = (text for _, text in phases)
    return ReflectiveSummary(draft, critique, refined, extract_rating(refined))


def _name_variants(ticker: str) -> list[str]:
    swapped = ticker.replace(".", "-") if "." in ticker else ticker.replace("-", ".")
    return [ticker, ticker.upper(), swapped.upper()]


def pull_fundamental_report(corpus: Corpus, ticker: str, kind: str = "10-K") -> Document:
    """Most recent filing of ``kind``; retries with corrected ticker spellings."""
    tag = filing_tag(kind)
    attempts = []
    for variant in _name_variants(ticker)[:RESOLVE_ATTEMPTS]:
        attempts.append(variant)
        found = corpus.filings(variant, kind)
        if found:
            year, path = found[0]
            break
        log.info("no %s filing under %r (attempt %d)", tag, variant, len(attempts))
    else:
        raise NotFoundError(f"no {kind} filing for {ticker} after {len(attempts)} attempts: {attempts}")
    doc = parse_filing(path.read_text(encoding="utf-8"), f"{ticker}_{tag}_{year}", ticker,
                       "10-K" if tag == "10K" else "10-Q")
    if not any(body for _, body in doc.sections):
        raise DataError(f"{path.name} parses to zero sections")
    return doc


def fundamental_qa(
    doc: Document,
    question: str,
    provider: Provider,
    store: VectorStore | None,
    k: int = DEFAULT_TOP_K,
    budget: int = DEFAULT_BUDGET,
    overlap: int = DEFAULT_OVERLAP,
) -> GroundedAnswer:
    if store is None:
        raise DataError("fundamental_qa needs a vector store")
    if not store.has_doc(doc.doc_id):
        store.add(chunk_by_section(doc, budget, overlap))
    hits = [(c, s) for c, s in retrieve(store, question, max(k, len(store)))
            if c.doc_id == doc.doc_id][:k]
    return answer_with_context(question, hits, provider, ticker=doc.ticker)


@dataclass
class ToolContext:
    """Per-analysis state the tools read: corpus, provider, window and caches."""

    corpus: Corpus
    provider: Provider
    ticker: str
    analysis_end: date | None = None
    price_lookback_days: int | None = None
    news_lookback_days: int | None = None
    periods_per_year: int = TRADING_DAYS
    top_k: int = DEFAULT_TOP_K
    chunk_budget: int = DEFAULT_BUDGET
    chunk_overlap: int = DEFAULT_OVERLAP
    embedder: Any = None
    documents: dict[str, Document] = field(default_factory=dict)
    store: VectorStore | None = None

    def window_start(self, lookback: int | None) -> date | None:
        if lookback is None or self.analysis_end is None:
            return None
        return self.analysis_end - timedelta(days=lookback)

    def news(self) -> list[NewsItem]:
        return self.corpus.news(self.ticker, self.window_start(self.news_lookback_days), self.analysis_end)

    def document(self, kind: str = "10-K") -> Document:
        if kind not in self.documents:
            self.documents[kind] = pull_fundamental_report(self.corpus, self.ticker, kind)
        return self.documents[kind]

    def vector_store(self) -> VectorStore:
        if self.store is None:
            self.store = VectorStore(self.embedder or HashEmbedder())
        return self.store


def _date_arg(args: Mapping[str, Any], key: str, default: date | None) -> date | None:
    raw = args.get(key)
    if raw in (None, ""):
        return default
    try:
        return date.fromisoformat(str(raw))
    except ValueError:
        raise DataError(f"argument {key}={raw!r} is not an ISO date") from None


def _tool_valuation(ctx: ToolContext, args: Mapping[str, Any]) -> dict:
    prices = ctx.corpus.prices(ctx.ticker)
    start = _date_arg(args, "start", ctx.window_start(ctx.price_lookback_days))
    end = _date_arg(args, "end", ctx.analysis_end)
    return valuation_metrics(prices, start, end, ctx.periods_per_year).to_json()


def _tool_fetch_news(ctx: ToolContext, args: Mapping[str, Any]) -> dict:
    items = ctx.news()
    return {"count": len(items), "items": [
        {"id": it.id, "published_at": it.published_at.isoformat(), "headline": it.headline,
         "bloomberg_id": it.bloomberg_id}
        for it in items
    ]}


def _tool_summarize(ctx: ToolContext, args: Mapping[str, Any]) -> dict:
    items = ctx.news()
    summary = summarize_with_reflection([f"{it.headline}\n{it.body}" for it in items], ctx.provider,
                                        ticker=ctx.ticker)
    return {
        "items": len(items),
        "draft": summary.draft,
        "critique": summary.critique,
        "refined": summary.refined,
        "recommendation": summary.recommendation.value,
    }


def _tool_pull(ctx: ToolContext, args: Mapping[str, Any]) -> dict:
    doc = ctx.document(str(args.get("kind", "10-K")))
    return {"doc_id": doc.doc_id, "kind": doc.kind, "sections": [h for h, _ in doc.sections]}


def _tool_qa(ctx: ToolContext, args: Mapping[str, Any]) -> dict:
    question = args.get("question")
    if not question:
        area = int(args.get("area", 1))
        if not 1 <= area <= len(prompts.FUNDAMENTAL_QUESTIONS):
            raise DataError(f"question area must be 1..{len(prompts.FUNDAMENTAL_QUESTIONS)}")
        question = prompts.FUNDAMENTAL_QUESTIONS[area - 1]
    doc = ctx.document(str(args.get("kind", "10-K")))
    answer = fundamental_qa(doc, str(question), ctx.provider, ctx.vector_store(), ctx.top_k,
                            ctx.chunk_budget, ctx.chunk_overlap)
    return {"question": answer.question, "answer": answer.answer, "cited": list(answer.cited),
            "scores": answer.scores}


@dataclass(frozen=True)
class Tool:
    name: str
    fn: Callable[[ToolContext, Mapping[str, Any]], dict]
    description: str

    @property
    def data_kind(self) -> str:
        return TOOL_DATA[self.name]


class ToolRegistry:
    """Immutable name -> tool table."""

    def __init__(self, tools: Sequence[Tool]):
        self._tools = MappingProxyType({t.name: t for t in tools})

    @property
    def names(self) -> list[str]:
        return sorted(self._tools)

    def describe(self, names: Collection[str]) -> str:
        return "; ".join(f"{n}: {self._tools[n].description}" for n in sorted(names) if n in self._tools)

    def invoke(self, call: ToolCall, role: str, allowed: Collection[str], ctx: ToolContext) -> ToolResult:
        tool = self._tools.get(call.tool)
        if tool is None:
            raise UnknownToolError(f"unknown tool {call.tool!r}; registered: {self.names}")
        if call.tool not in allowed or not authorized(role, call.tool):
            raise UnauthorizedToolError(
                f"{call.caller} ({role}) may not call {call.tool}: it reads {tool.data_kind} data"
            )
        started = time.perf_counter()
        try:
            payload = tool.fn(ctx, call.args)
        except ProviderError:
            raise
        except (StockCouncilError, ValueError, KeyError, TypeError) as exc:
            elapsed = time.perf_counter() - started
            log.info("tool %s #%d failed after %.3fs: %s", call.tool, call.seq, elapsed, exc)
            return ToolResult(call.tool, None, elapsed, f"{type(exc).__name__}: {exc}")
        elapsed = time.perf_counter() - started
        log.info("tool %s #%d by %s args=%s in %.3fs", call.tool, call.seq, call.caller, call.args_digest, elapsed)
        return ToolResult(call.tool, payload, elapsed)


def default_registry() -> ToolRegistry:
    return ToolRegistry([
        Tool("valuation_metrics", _tool_valuation,
             "cumulative/annualized return and daily/annualized volatility; args start, end (ISO dates)"),
        Tool("fetch_news", _tool_fetch_news, "list the news items in the analysis window"),
        Tool("summarize_with_reflection", _tool_summarize,
             "draft, critique and refine a summary of the news items with a recommendation"),
        Tool("pull_fundamental_report", _tool_pull, "load the latest filing; args kind (10-K or 10-Q)"),
        Tool("fundamental_qa", _tool_qa,
             "answer a question from the filing; args question (text) or area (1-4)"),
    ])


class ToolSession:
    """Numbers one agent's tool calls and keeps the (call, result) trace."""

    def __init__(self, registry: ToolRegistry, agent_id: str, role: str, allowed: Collection[str], ctx: ToolContext):
        self.registry = registry
        self.agent_id = agent_id
        self.role = role
        self.allowed = frozenset(allowed)
        self.ctx = ctx
        self.trace: list[tuple[ToolCall, ToolResult]] = []

    def call(self, tool: str, args: Mapping[str, Any] | None = None) -> ToolResult:
        call = ToolCall(tool, dict(args or {}), self.agent_id, len(self.trace))
        result = self.registry.invoke(call, self.role, self.allowed, self.ctx)
        self.trace.append((call, result))
        return result


def json_safe(value: Any) -> Any:
    """Replace non-finite floats so payloads serialize as strict JSON."""
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_safe(v) for v in value]
    return value
