from __future__ import annotations

from datetime import date

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import FILING, NEWS, make_corpus
from stockcouncil import prompts
from stockcouncil.agents import (
    NO_NEWS,
    NO_PRICES,
    AgentSpec,
    AnalysisSettings,
    build_agent,
    build_team,
    parse_tool_call,
    risk_profile,
    run_analysis,
)
from stockcouncil.corpus import Corpus
from stockcouncil.errors import IterationLimitError
from stockcouncil.llm import ScriptedProvider, ScriptEntry
from stockcouncil.prompts import matcher
from stockcouncil.ratings import Rating, extract_rating

SETTINGS = AnalysisSettings(analysis_end=date(2024, 1, 31))
VOLATILE = [100, 112, 95, 118, 90, 121, 88, 119, 93, 125, 97, 130]


@pytest.fixture
def corpus(tmp_path):
    return Corpus(make_corpus(tmp_path, closes=VOLATILE, news=NEWS, filing=FILING))


def test_build_agent_prompts_and_tools():
    neutral = build_agent("valuation", risk_profile("risk-neutral"))
    assert "analyze the valuation trends of a given asset" in neutral.system_prompt
    averse = build_agent("fundamental", risk_profile("risk-averse"))
    assert averse.allowed_tools == {"pull_fundamental_report", "fundamental_qa"}
    assert averse.agent_id == "fundamental_agent"
    with pytest.raises(ValueError):
        build_agent("macro", risk_profile("risk-neutral"))
    with pytest.raises(ValueError):
        risk_profile("reckless")


def test_risk_directive_only_changes_suffix():
    for role in ("valuation", "sentiment", "fundamental"):
        a = build_agent(role, risk_profile("risk-averse")).system_prompt
        b = build_agent(role, risk_profile("risk-neutral")).system_prompt
        assert a != b
        assert a.startswith(prompts.ROLE_PROMPTS[role]) and b.startswith(prompts.ROLE_PROMPTS[role])


def test_agent_spec_rejects_tools_beyond_grant():
    base = build_agent("sentiment", risk_profile("risk-neutral"))
    with pytest.raises(ValueError):
        AgentSpec(base.agent_id, base.role, base.role_prompt, base.risk_profile,
                  frozenset({"valuation_metrics"}))


def test_team_order():
    assert [a.agent_id for a in build_team(risk_profile("risk-neutral"))] == [
        "valuation_agent", "sentiment_agent", "fundamental_agent"]


@pytest.mark.parametrize("text, rating", [
    ("Solid quarter.\nRATING: BUY", Rating.BUY),
    ("Weak outlook. RATING: sell", Rating.SELL),
    ("No view yet.", Rating.ABSTAIN),
    ("RATING: BUY at first, but RATING: SELL now", Rating.SELL),
    ("Considering everything\nSell", Rating.SELL),
])
def test_extract_rating(text, rating):
    assert extract_rating(text) is rating


@given(st.text().filter(lambda s: "RATING" not in s.upper()))
def test_extract_rating_suffix(prefix):
    assert extract_rating(prefix + " RATING: BUY") is Rating.BUY
    assert extract_rating(prefix) is extract_rating(prefix)


def test_parse_tool_call():
    assert parse_tool_call('TOOL_CALL {"name": "fetch_news", "args": {}}') == ("fetch_news", {})
    assert parse_tool_call("no tool here\nRATING: BUY") is None
    with pytest.raises(ValueError):
        parse_tool_call("TOOL_CALL {not json}")


def valuation_script(final):
    return ScriptedProvider([
        ScriptEntry('TOOL_CALL {"name": "valuation_metrics", "args": {}}', matcher("valuation_agent", "analysis (step 1)")),
        ScriptEntry(final, matcher("valuation_agent", "analysis (step 2)")),
    ])


@pytest.mark.parametrize("profile, final, rating", [
    ("risk-averse", "Swings of 10% a day are too much downside.\nRATING: SELL", Rating.SELL),
    ("risk-neutral", "Upside outweighs the swings.\nRATING: BUY", Rating.BUY),
])
def test_valuation_run_by_profile(corpus, profile, final, rating):
    spec = build_agent("valuation", risk_profile(profile))
    provider = valuation_script(final)
    report = run_analysis(spec, "ACME", corpus, provider, SETTINGS)
    assert report.rating is rating
    assert [c.tool for c, _ in report.trace] == ["valuation_metrics"]
    assert report.data_window == "2024-01-02..2024-01-17"
    assert provider.calls[0].messages[0].content == spec.system_prompt
    assert prompts.RISK_DIRECTIVES[profile] in provider.calls[0].messages[0].content


def test_sentiment_abstains_without_news(tmp_path):
    corpus = Corpus(make_corpus(tmp_path, closes=VOLATILE, filing=FILING))
    provider = ScriptedProvider([])
    report = run_analysis(build_agent("sentiment", risk_profile("risk-neutral")), "ACME", corpus, provider, SETTINGS)
    assert report.rating is Rating.ABSTAIN and report.reason == NO_NEWS == "insufficient news coverage"
    assert provider.calls == []


def test_valuation_abstains_without_prices(tmp_path):
    corpus = Corpus(make_corpus(tmp_path, news=NEWS, filing=FILING))
    report = run_analysis(build_agent("valuation", risk_profile("risk-neutral")), "ACME", corpus,
                          ScriptedProvider([]), SETTINGS)
    assert report.rating is Rating.ABSTAIN and report.reason == NO_PRICES


def test_unauthorized_request_is_fed_back_not_traced(corpus):
    spec = build_agent("sentiment", risk_profile("risk-neutral"))
    provider = ScriptedProvider([
        ScriptEntry('TOOL_CALL {"name": "valuation_metrics", "args": {}}', matcher("sentiment_agent", "analysis (step 1)")),
        ScriptEntry("Fine, news only.\nRATING: BUY", matcher("sentiment_agent", "analysis (step 2)")),
    ])
    report = run_analysis(spec, "ACME", corpus, provider, SETTINGS)
    assert report.rating is Rating.BUY and report.trace == ()
    assert "rejected" in provider.calls[1].latest
    assert all(c.tool in spec.allowed_tools for c, _ in report.trace)


def test_missing_rating_gets_nudged(corpus):
    spec = build_agent("fundamental", risk_profile("risk-neutral"))
    provider = ScriptedProvider([
        ScriptEntry("I think it is fine.", matcher("fundamental_agent", "analysis (step 1)")),
        ScriptEntry("RATING: BUY", matcher("fundamental_agent", "analysis (step 2)")),
    ])
    assert run_analysis(spec, "ACME", corpus, provider, SETTINGS).rating is Rating.BUY
    assert "No rating found" in provider.calls[1].latest


def test_iteration_cap(corpus):
    spec = build_agent("valuation", risk_profile("risk-neutral"), max_iterations=3)
    provider = ScriptedProvider(['TOOL_CALL {"name": "valuation_metrics", "args": {}}'] * 10)
    with pytest.raises(IterationLimitError):
        run_analysis(spec, "ACME", corpus, provider, SETTINGS)
    assert len(provider.calls) == 3


def test_fundamental_run_uses_rag(corpus):
    spec = build_agent("fundamental", risk_profile("risk-averse"))
    provider = ScriptedProvider([
        ScriptEntry('TOOL_CALL {"name": "fundamental_qa", "args": {"area": 1}}', matcher("fundamental_agent", "analysis (step 1)")),
        ScriptEntry("Operating loss was $72.5 million and the operating margin was -14.5%.",
                    matcher("fundamental_agent", "grounded answer")),
        ScriptEntry("Margin of -14.5% is a loss.\nRATING: SELL", matcher("fundamental_agent", "analysis (step 2)")),
    ])
    report = run_analysis(spec, "ACME", corpus, provider, SETTINGS)
    assert report.rating is Rating.SELL
    payload = report.trace[0][1].payload
    assert payload["cited"] == ["ACME_10K_2023:003:000"]
    assert report.data_window == "ACME_10K_2023"
