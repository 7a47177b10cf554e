"""Specialist agents: role prompt + risk directive + tool grant, and the analysis loop."""

from __future__ import annotations

import json
import logging
import re
from collections.abc import Mapping
from dataclasses import dataclass, field
from datetime import date
from typing import Any

from . import prompts
from .corpus import Corpus
from .errors import DataError, IterationLimitError, NotFoundError, ToolError
from .llm import ChatMessage, CompletionRequest, HashEmbedder, Provider, complete
from .marketdata import TRADING_DAYS
from .rag import DEFAULT_BUDGET, DEFAULT_OVERLAP, DEFAULT_TOP_K
from .ratings import Rating, extract_rating
from .tools import (
    ROLES,
    ToolCall,
    ToolContext,
    ToolRegistry,
    ToolResult,
    ToolSession,
    default_registry,
    json_safe,
    tools_for_role,
)

log = logging.getLogger(__name__)

RISK_LABELS = ("risk-averse", "risk-neutral")
DEFAULT_MAX_ITERATIONS = 8
NO_NEWS = "insufficient news coverage"
NO_PRICES = "no price history in the analysis window"
NO_FILING = "no 10-K filing available"

_TOOL_LINE = re.compile(r"^\s*TOOL_CALL\b(.*)$", re.MULTILINE | re.DOTALL)


@dataclass(frozen=True)
class RiskProfile:
    label: str
    directive: str

    def __post_init__(self) -> None:
        if self.label not in RISK_LABELS:
            raise ValueError(f"unknown risk profile {self.label!r}; expected one of {RISK_LABELS}")


def risk_profile(label: str, directives: Mapping[str, str] | None = None) -> RiskProfile:
    directives = directives or prompts.RISK_DIRECTIVES
    if label not in RISK_LABELS:
        raise ValueError(f"unknown risk profile {label!r}; expected one of {RISK_LABELS}")
    return RiskProfile(label, directives[label])


@dataclass(frozen=True)
class AgentSpec:
    agent_id: str
    role: str
    role_prompt: str
    risk_profile: RiskProfile
    allowed_tools: frozenset[str]
    max_iterations: int = DEFAULT_MAX_ITERATIONS

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        extra = set(self.allowed_tools) - tools_for_role(self.role)
        if extra:
            raise ValueError(f"{self.agent_id}: tools {sorted(extra)} exceed the {self.role} data grant")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")

    @property
    def system_prompt(self) -> str:
        return f"{self.role_prompt}\n\n{self.risk_profile.directive}"


@dataclass(frozen=True)
class AgentReport:
    agent_id: str
    ticker: str
    rating: Rating
    rationale: str
    trace: tuple[tuple[ToolCall, ToolResult], ...] = ()
    data_window: str = ""
    reason: str | None = None

    def __post_init__(self) -> None:
        seqs = [call.seq for call, _ in self.trace]
        if seqs != list(range(len(seqs))):
            raise ValueError(f"{self.agent_id}: tool trace sequence numbers {seqs} are not contiguous")

    @property
    def abstained_for_data(self) -> bool:
        return self.reason is not None

    def to_json(self) -> dict:
        return {
            "agent_id": self.agent_id,
            "ticker": self.ticker,
            "rating": self.rating.value,
            "rationale": self.rationale,
            "reason": self.reason,
            "data_window": self.data_window,
            "trace": [trace_json(call, result) for call, result in self.trace],
        }


def trace_json(call: ToolCall, result: ToolResult) -> dict:
    return json_safe({**call.to_json(), "result": result.to_json()})


@dataclass(frozen=True)
class AnalysisSettings:
    analysis_end: date | None = None
    price_lookback_days: int | None = None
    news_lookback_days: int | None = None
    periods_per_year: int = TRADING_DAYS
    top_k: int = DEFAULT_TOP_K
    chunk_budget: int = DEFAULT_BUDGET
    chunk_overlap: int = DEFAULT_OVERLAP
    temperature: float = 0.0
    embedder: Any = field(default=None, compare=False)

    def context(self, corpus: Corpus, provider: Provider, ticker: str) -> ToolContext:
        return ToolContext(
            corpus=corpus,
            provider=provider,
            ticker=ticker,
            analysis_end=self.analysis_end,
            price_lookback_days=self.price_lookback_days,
            news_lookback_days=self.news_lookback_days,
            periods_per_year=self.periods_per_year,
            top_k=self.top_k,
            chunk_budget=self.chunk_budget,
            chunk_overlap=self.chunk_overlap,
            embedder=self.embedder or HashEmbedder(),
        )


def build_agent(
    role: str,
    profile: RiskProfile,
    role_prompts: Mapping[str, str] | None = None,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
) -> AgentSpec:
    if role not in ROLES:
        raise ValueError(f"unknown role {role!r}; expected one of {ROLES}")
    role_prompts = role_prompts or prompts.ROLE_PROMPTS
    return AgentSpec(
        agent_id=f"{role}_agent",
        role=role,
        role_prompt=role_prompts[role],
        risk_profile=profile,
        allowed_tools=tools_for_role(role),
        max_iterations=max_iterations,
    )


def build_team(profile: RiskProfile, role_prompts: Mapping[str, str] | None = None,
               max_iterations: int = DEFAULT_MAX_ITERATIONS) -> list[AgentSpec]:
    return [build_agent(role, profile, role_prompts, max_iterations) for role in ROLES]


def parse_tool_call(text: str) -> tuple[str, dict[str, Any]] | None:
    """``TOOL_CALL {"name": ..., "args": {...}}`` -> (name, args); None when the reply has no call."""
    m = _TOOL_LINE.search(text)
    if not m:
        return None
    try:
        data = json.loads(m.group(1).strip())
        name = data["name"]
        args = data.get("args") or {}
    except (json.JSONDecodeError, KeyError, TypeError, AttributeError):
        raise ValueError(f"malformed tool call: {m.group(0).strip()[:200]}") from None
    if not isinstance(name, str) or not isinstance(args, dict):
        raise ValueError(f"malformed tool call: {m.group(0).strip()[:200]}")
    return name, args


def missing_data_reason(spec: AgentSpec, ctx: ToolContext) -> str | None:
    """Why the agent cannot work on this ticker, or None when its data is present."""
    if spec.role == "sentiment":
        return None if ctx.news() else NO_NEWS
    if spec.role == "valuation":
        if not ctx.corpus.has_prices(ctx.ticker):
            return NO_PRICES
        try:
            window = ctx.corpus.prices(ctx.ticker).window(
                ctx.window_start(ctx.price_lookback_days), ctx.analysis_end)
        except DataError:
            return NO_PRICES
        return None if len(window.bars) >= 2 else NO_PRICES
    try:
        ctx.document("10-K")
    except NotFoundError:
        return NO_FILING
    return None


def _data_window(spec: AgentSpec, ctx: ToolContext, trace: list[tuple[ToolCall, ToolResult]]) -> str:
    if spec.role == "valuation":
        for call, result in trace:
            if call.tool == "valuation_metrics" and result.ok:
                return f"{result.payload['start']}..{result.payload['end']}"
    if spec.role == "sentiment":
        items = ctx.news()
        if items:
            return f"{items[0].published_at.date()}..{items[-1].published_at.date()}"
    if spec.role == "fundamental" and ctx.documents:
        return ",".join(doc.doc_id for doc in ctx.documents.values())
    return ""


def run_analysis(
    spec: AgentSpec,
    ticker: str,
    corpus: Corpus,
    provider: Provider,
    settings: AnalysisSettings | None = None,
    registry: ToolRegistry | None = None,
) -> AgentReport:
    """Completion -> optional tool call -> result, until the agent gives a rated answer.

    Missing role data yields an ABSTAIN report instead of an error.
    """
    settings = settings or AnalysisSettings()
    registry = registry or default_registry()
    ctx = settings.context(corpus, provider, ticker)
    reason = missing_data_reason(spec, ctx)
    if reason is not None:
        log.info("%s abstains on %s: %s", spec.agent_id, ticker, reason)
        return AgentReport(spec.agent_id, ticker, Rating.ABSTAIN, f"Abstaining: {reason}.", reason=reason)

    session = ToolSession(registry, spec.agent_id, spec.role, spec.allowed_tools, ctx)
    instructions = (
        f"Analyze {ticker} and give an investment recommendation.\n"
        f"{prompts.RATING_CONTRACT}\n"
        + prompts.TOOL_PROTOCOL.replace("{tools}", registry.describe(spec.allowed_tools))
    )
    messages = [
        ChatMessage("system", spec.agent_id, spec.system_prompt),
        ChatMessage("user", "coordinator", prompts.task_header(ticker, spec.agent_id, "analysis (step 1)") + instructions),
    ]
    for step in range(1, spec.max_iterations + 1):
        request = CompletionRequest(tuple(messages), temperature=settings.temperature, speaker=spec.agent_id)
        reply = complete(provider, request)
        messages.append(reply)
        header = prompts.task_header(ticker, spec.agent_id, f"analysis (step {step + 1})")
        try:
            parsed = parse_tool_call(reply.content)
        except ValueError as exc:
            messages.append(ChatMessage("user", "coordinator", f"{header}{exc}. Use the documented format."))
            continue
        if parsed is None:
            rating = extract_rating(reply.content)
            if rating is not Rating.ABSTAIN:
                return AgentReport(spec.agent_id, ticker, rating, reply.content, tuple(session.trace),
                                   _data_window(spec, ctx, session.trace))
            messages.append(ChatMessage("user", "coordinator",
                                        f"{header}No rating found in your answer. {prompts.RATING_CONTRACT}"))
            continue
        name, args = parsed
        try:
            result = session.call(name, args)
        except ToolError as exc:
            log.warning("%s tool request rejected: %s", spec.agent_id, exc)
            messages.append(ChatMessage("tool", f"tool:{name}", f"{header}Tool request rejected: {exc}"))
            continue
        body = json.dumps(json_safe(result.to_json()), sort_keys=True)
        messages.append(ChatMessage("tool", f"tool:{name}", f"{header}Tool result ({name}):\n{body}"))
    raise IterationLimitError(
        f"{spec.agent_id} on {ticker}: no rated answer after {spec.max_iterations} iterations"
    )
