"""Scripted debate fixtures shared by the orchestrator and acceptance tests."""

from __future__ import annotations

from stockcouncil.agents import AgentReport, build_team, risk_profile
from stockcouncil.llm import ScriptedProvider, ScriptEntry
from stockcouncil.orchestrator import run_debate
from stockcouncil.prompts import matcher
from stockcouncil.ratings import Rating

TEAM = build_team(risk_profile("risk-neutral"))
IDS = [a.agent_id for a in TEAM]

ALL_AGREE = [("BUY", "BUY", "BUY")] * 6
CONVERGE_3 = [("BUY", "SELL", "BUY")] * 2 + [("BUY", "BUY", "BUY")] * 4
NEVER = [("BUY", "SELL", "BUY")] * 6
FIXTURES = {"all_agree": ALL_AGREE, "converge_3": CONVERGE_3, "never": NEVER}


def debate_script(rounds, ids=IDS, ticker="ACME"):
    entries = []
    for r, votes in enumerate(rounds, start=1):
        for agent, vote in zip(ids, votes):
            if vote is not None:
                entries.append(ScriptEntry(f"{agent} on {ticker}, round {r}.\nRATING: {vote}",
                                           matcher(agent, f"debate (round {r})")))
    return entries


def prior_reports(first_round, ids=IDS, ticker="ACME", abstain_reason="insufficient news coverage"):
    out = []
    for agent, vote in zip(ids, first_round):
        if vote is None:
            out.append(AgentReport(agent, ticker, Rating.ABSTAIN, "Abstaining.", reason=abstain_reason))
        else:
            out.append(AgentReport(agent, ticker, Rating(vote), f"Initial view: {vote}.\nRATING: {vote}"))
    return out


def run_fixture(rounds, round_cap=6, agents=TEAM):
    ids = [a.agent_id for a in agents]
    provider = ScriptedProvider(debate_script(rounds, ids))
    decision, transcript = run_debate(agents, "ACME", prior_reports(rounds[0], ids), provider, round_cap=round_cap)
    return decision, transcript, provider
