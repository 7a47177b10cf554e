"""Collaboration and round-robin debate sessions.

Turn policy is enforced here rather than left to the coordinator model:
every agent speaks at least twice before a session may end, and a debate
stops at ``round_cap`` with NO_CONSENSUS instead of running forever.
"""

from __future__ import annotations

import json
import logging
import re
from collections import Counter
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from . import prompts
from .agents import AgentReport, AgentSpec, AnalysisSettings, run_analysis, trace_json
from .corpus import Corpus
from .errors import ProtocolError
from .llm import ChatMessage, CompletionRequest, Provider, ScriptEntry, complete
from .ratings import Rating, extract_rating
from .tools import ToolCall, ToolRegistry, ToolResult

log = logging.getLogger(__name__)

COORDINATOR = "coordinator"
NO_CONSENSUS = "NO_CONSENSUS"
DEFAULT_ROUND_CAP = 6
DEFAULT_COLLAB_ROUND_CAP = 4
MIN_TURNS = 2
SECTIONS = ("Positive Indicators", "Concerns", "Conclusion")

_TERMINATE = re.compile(r"(?<![A-Za-z0-9_])TERMINATE$")
_SECTION_LINE = re.compile(
    r"^[\s#*>\-]*(?:\d+[.)]\s*)?[*_]*\s*(Positive Indicators|Concerns|Conclusion)\s*[*_]*\s*:?[*_]*\s*(.*)$",
    re.IGNORECASE,
)


@dataclass(frozen=True)
class Turn:
    session_id: str
    index: int
    speaker: str
    message: ChatMessage
    tool_calls: tuple[tuple[ToolCall, ToolResult], ...] = ()

    def to_json(self) -> dict:
        return {
            "session_id": self.session_id,
            "turn_index": self.index,
            "speaker": self.speaker,
            "role": self.message.role,
            "content": self.message.content,
            "tool_calls": [trace_json(call, result) for call, result in self.tool_calls],
        }


@dataclass
class Transcript:
    session_id: str
    mode: str
    ticker: str
    turns: list[Turn] = field(default_factory=list)
    outcome: str | None = None

    def add(self, speaker: str, message: ChatMessage,
            tool_calls: Sequence[tuple[ToolCall, ToolResult]] = ()) -> Turn:
        turn = Turn(self.session_id, len(self.turns), speaker, message, tuple(tool_calls))
        self.turns.append(turn)
        return turn

    def agent_turns(self) -> list[Turn]:
        return [t for t in self.turns if t.speaker != COORDINATOR]

    def speak_counts(self) -> Counter:
        return Counter(t.speaker for t in self.agent_turns())

    @property
    def terminated(self) -> bool:
        return bool(self.turns) and self.turns[-1].speaker == COORDINATOR and detect_termination(self.turns[-1].message)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(t.to_json(), ensure_ascii=False, sort_keys=True) + "\n" for t in self.turns)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")


def load_transcript_rows(path: str | Path) -> list[dict[str, Any]]:
    return [json.loads(line) for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()]


@dataclass(frozen=True)
class ConsensusDecision:
    ticker: str
    decision: str
    rounds: int
    votes: tuple[dict[str, Rating], ...]
    override_by_user: bool = False

    def __post_init__(self) -> None:
        if self.decision not in ("BUY", "SELL", NO_CONSENSUS):
            raise ValueError(f"bad decision {self.decision!r}")
        if self.decision != NO_CONSENSUS and not self.override_by_user:
            if not self.votes or detect_consensus(self.votes[-1]) is not Rating(self.decision):
                raise ValueError(f"{self.ticker}: decision {self.decision} disagrees with final-round votes")

    def to_json(self) -> dict:
        return {
            "ticker": self.ticker,
            "decision": self.decision,
            "rounds": self.rounds,
            "votes": [{agent: r.value for agent, r in rnd.items()} for rnd in self.votes],
            "override_by_user": self.override_by_user,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> ConsensusDecision:
        return cls(
            ticker=data["ticker"],
            decision=data["decision"],
            rounds=int(data["rounds"]),
            votes=tuple({a: Rating(v) for a, v in rnd.items()} for rnd in data["votes"]),
            override_by_user=bool(data.get("override_by_user", False)),
        )


@dataclass(frozen=True)
class ConsolidatedReport:
    ticker: str
    positive_indicators: str
    concerns: str
    conclusion: str
    sources: tuple[AgentReport, ...] = ()

    def __post_init__(self) -> None:
        for name in ("positive_indicators", "concerns", "conclusion"):
            if not getattr(self, name).strip():
                raise ValueError(f"{self.ticker}: report section {name} is empty")

    def render(self) -> str:
        return (
            f"{self.ticker} stock analysis\n\n"
            f"Positive Indicators\n{self.positive_indicators}\n\n"
            f"Concerns\n{self.concerns}\n\n"
            f"Conclusion\n{self.conclusion}\n"
        )

    def to_json(self) -> dict:
        return {
            "ticker": self.ticker,
            "sections": {
                "Positive Indicators": self.positive_indicators,
                "Concerns": self.concerns,
                "Conclusion": self.conclusion,
            },
            "agents": [r.to_json() for r in self.sources],
        }


def detect_consensus(votes: Mapping[str, Rating]) -> Rating | None:
    """Unanimous value of the non-ABSTAIN votes, if there are any."""
    cast = {r for r in votes.values() if r is not Rating.ABSTAIN}
    return cast.pop() if len(cast) == 1 else None


def detect_termination(message: ChatMessage | str) -> bool:
    text = message.content if isinstance(message, ChatMessage) else message
    return bool(_TERMINATE.search(text.rstrip()))


def parse_report_sections(text: str) -> dict[str, str]:
    """Pull the three report sections out of coordinator text (markdown headings tolerated)."""
    found: dict[str, list[str]] = {}
    current = None
    for line in text.splitlines():
        m = _SECTION_LINE.match(line)
        if m:
            current = next(s for s in SECTIONS if s.lower() == m.group(1).lower())
            found[current] = [m.group(2)] if m.group(2).strip() else []
        elif current is not None:
            found[current].append(line)
    out = {}
    for name, lines in found.items():
        body = "\n".join(lines).strip()
        if _TERMINATE.search(body):
            body = body[: _TERMINATE.search(body).start()].rstrip()
        out[name] = body
    return out


def _agent_statement(report: AgentReport) -> str:
    if report.abstained_for_data:
        return f"I have no usable data for {report.ticker} ({report.reason}) and abstain."
    return report.rationale


def run_collaboration(
    agents: Sequence[AgentSpec],
    ticker: str,
    corpus: Corpus,
    provider: Provider,
    settings: AnalysisSettings | None = None,
    registry: ToolRegistry | None = None,
    round_cap: int = DEFAULT_COLLAB_ROUND_CAP,
) -> tuple[ConsolidatedReport, Transcript]:
    """Analyses, a round of peer comments, then a consolidated report from the coordinator.

    Further comment rounds run while the coordinator has not replied TERMINATE.
    """
    if len(agents) < 2:
        raise ProtocolError(f"collaboration needs at least 2 agents, got {len(agents)}")
    if round_cap < MIN_TURNS:
        raise ProtocolError(f"collaboration round cap must be >= {MIN_TURNS}")
    settings = settings or AnalysisSettings()
    transcript = Transcript(f"{ticker}-collaboration", "collaboration", ticker)
    transcript.add(COORDINATOR, ChatMessage("system", COORDINATOR, prompts.COLLABORATION_PROMPT))

    reports: dict[str, AgentReport] = {}
    for spec in agents:
        report = run_analysis(spec, ticker, corpus, provider, settings, registry)
        reports[spec.agent_id] = report
        transcript.add(spec.agent_id, ChatMessage("assistant", spec.agent_id, _agent_statement(report)), report.trace)

    for rnd in range(2, round_cap + 1):
        for spec in agents:
            report = reports[spec.agent_id]
            if report.abstained_for_data:
                transcript.add(spec.agent_id, ChatMessage("assistant", spec.agent_id, _agent_statement(report)))
                continue
            peers = [
                ChatMessage("user", t.speaker, f"{t.speaker}: {t.message.content}")
                for t in reversed(transcript.agent_turns()) if t.speaker != spec.agent_id
            ]
            ask = (prompts.task_header(ticker, spec.agent_id, f"collaboration (round {rnd})")
                   + "Comment on your colleagues' analyses above and restate your view. "
                   + prompts.RATING_CONTRACT)
            request = CompletionRequest(
                (ChatMessage("system", spec.agent_id, spec.system_prompt), *peers,
                 ChatMessage("user", COORDINATOR, ask)),
                temperature=settings.temperature, speaker=spec.agent_id,
            )
            transcript.add(spec.agent_id, complete(provider, request))

        history = [ChatMessage("user", t.speaker, f"{t.speaker}: {t.message.content}")
                   for t in transcript.agent_turns()]
        ask = (prompts.task_header(ticker, COORDINATOR, f"consolidate (round {rnd})")
               + prompts.CONSOLIDATION_FORMAT)
        request = CompletionRequest(
            (ChatMessage("system", COORDINATOR, prompts.COLLABORATION_PROMPT), *history,
             ChatMessage("user", COORDINATOR, ask)),
            temperature=settings.temperature, speaker=COORDINATOR,
        )
        reply = complete(provider, request)
        transcript.add(COORDINATOR, reply)
        if not detect_termination(reply):
            continue
        if min(transcript.speak_counts()[s.agent_id] for s in agents) < MIN_TURNS:
            raise ProtocolError(f"{ticker}: session ended before every agent spoke twice")
        sections = parse_report_sections(reply.content)
        missing = [s for s in SECTIONS if not sections.get(s)]
        if missing:
            raise ProtocolError(f"{ticker}: consolidated report lacks sections {missing}")
        transcript.outcome = "report"
        report = ConsolidatedReport(ticker, sections["Positive Indicators"], sections["Concerns"],
                                    sections["Conclusion"], tuple(reports[s.agent_id] for s in agents))
        return report, transcript
    raise ProtocolError(f"{ticker}: coordinator did not reply TERMINATE within {round_cap} rounds")


def _peer_messages(spec: AgentSpec, transcript: Transcript, prior: Mapping[str, AgentReport],
                   rounds: Mapping[int, int]) -> list[ChatMessage]:
    """Peers' debate turns newest first, then their initial analyses, then the agent's own."""
    out = []
    for turn in reversed(transcript.agent_turns()):
        if turn.speaker != spec.agent_id:
            out.append(ChatMessage("user", turn.speaker,
                                   f"{turn.speaker} (debate round {rounds[turn.index]}): {turn.message.content}"))
    for agent_id, report in prior.items():
        if agent_id != spec.agent_id:
            out.append(ChatMessage("user", agent_id,
                                   f"{agent_id} initial analysis (rating {report.rating.value}): {_agent_statement(report)}"))
    own = prior.get(spec.agent_id)
    if own is not None:
        out.append(ChatMessage("user", spec.agent_id,
                               f"Your initial analysis (rating {own.rating.value}): {_agent_statement(own)}"))
    return out


def run_debate(
    agents: Sequence[AgentSpec],
    ticker: str,
    prior_reports: Sequence[AgentReport],
    provider: Provider,
    round_cap: int = DEFAULT_ROUND_CAP,
    temperature: float = 0.0,
) -> tuple[ConsensusDecision, Transcript]:
    """Fixed-order rounds until the non-ABSTAIN votes agree, or NO_CONSENSUS at the cap."""
    if len(agents) < 2:
        raise ProtocolError(f"debate needs at least 2 agents, got {len(agents)}")
    if round_cap < MIN_TURNS:
        raise ProtocolError(f"round cap must be >= {MIN_TURNS} so every agent can speak twice")
    prior = {r.agent_id: r for r in prior_reports}
    order = ", ".join(s.agent_id for s in agents)
    transcript = Transcript(f"{ticker}-debate", "debate", ticker)
    transcript.add(COORDINATOR, ChatMessage("system", COORDINATOR, prompts.DEBATE_PROMPT))
    transcript.add(COORDINATOR, ChatMessage(
        "user", COORDINATOR,
        f"Debate on {ticker}: should it stay in the portfolio? Vote BUY or SELL. Speaking order: {order}."))

    votes: list[dict[str, Rating]] = []
    round_of: dict[int, int] = {}
    decision: Rating | None = None
    for rnd in range(1, round_cap + 1):
        current: dict[str, Rating] = {}
        for spec in agents:
            report = prior.get(spec.agent_id)
            if report is not None and report.abstained_for_data:
                message = ChatMessage("assistant", spec.agent_id, _agent_statement(report))
                rating = Rating.ABSTAIN
            else:
                ask = (prompts.task_header(ticker, spec.agent_id, f"debate (round {rnd})")
                       + f"Should {ticker} be held? Weigh your colleagues' analyses against yours; you "
                       + "may change your view but you cannot decide for the group. "
                       + prompts.RATING_CONTRACT)
                request = CompletionRequest(
                    (ChatMessage("system", spec.agent_id, spec.system_prompt),
                     *_peer_messages(spec, transcript, prior, round_of),
                     ChatMessage("user", COORDINATOR, ask)),
                    temperature=temperature, speaker=spec.agent_id,
                )
                message = complete(provider, request)
                rating = extract_rating(message.content)
            turn = transcript.add(spec.agent_id, message)
            round_of[turn.index] = rnd
            current[spec.agent_id] = rating
        votes.append(current)
        log.info("%s debate round %d: %s", ticker, rnd, {a: r.value for a, r in current.items()})
        if all(r is Rating.ABSTAIN for r in current.values()):
            raise ProtocolError(f"{ticker}: every agent abstained in round {rnd}")
        spoken = transcript.speak_counts()
        if min(spoken[s.agent_id] for s in agents) < MIN_TURNS:
            continue
        decision = detect_consensus(current)
        if decision is not None:
            break

    if decision is None:
        outcome = ConsensusDecision(ticker, NO_CONSENSUS, len(votes), tuple(votes))
        closing = f"No consensus on {ticker} after {len(votes)} rounds; escalating for human review. TERMINATE"
    else:
        outcome = ConsensusDecision(ticker, decision.value, len(votes), tuple(votes))
        closing = f"Consensus on {ticker}: {decision.value} after {len(votes)} rounds. TERMINATE"
    transcript.add(COORDINATOR, ChatMessage("assistant", COORDINATOR, closing))
    transcript.outcome = outcome.decision
    return outcome, transcript


def replay_script(rows: Sequence[Mapping[str, Any]]) -> list[ScriptEntry]:
    """Script that reproduces a stored debate: one matcher-keyed entry per agent turn.

    Fixed statements from data-less agents never reach the provider, so their
    entries are simply left unconsumed on replay.
    """
    entries = []
    spoken: Counter = Counter()
    for row in rows:
        if row["speaker"] == COORDINATOR or row["role"] != "assistant":
            continue
        spoken[row["speaker"]] += 1
        task = f"debate (round {spoken[row['speaker']]})"
        entries.append(ScriptEntry(row["content"], prompts.matcher(row["speaker"], task)))
    return entries
