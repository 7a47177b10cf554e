"""Deterministic synthetic demo: a 15-ticker corpus plus scripted model replies.

``write_demo(dest)`` produces::

    dest/prices/<T>.csv          business days 2024-01-02 .. 2024-05-31
    dest/filings/<T>_10K_2023.txt
    dest/news/<T>.jsonl          (KSTR has none, so its sentiment agent abstains)
    dest/scripts/<T>.json        every reply the agents and coordinator will need
    dest/universe.txt
    dest/config.txt

ZEDX is built so that its January closes run from 100.00 to 113.56 and its
10-K reports an operating margin of -14.5%. Debate votes are fixed per
ticker: CYPR, HLXO and MOSS end in consensus SELL, the rest in BUY. Six
tickers start split and only converge in round 3, so the standalone
(round-1) ratings behind the single-agent portfolios differ from the
consensus.
"""

from __future__ import annotations

import csv
import json
import math
import random
from dataclasses import dataclass
from datetime import date, datetime, timedelta, timezone
from pathlib import Path

from . import prompts
from .llm import HashEmbedder, ScriptEntry
from .marketdata import load_price_csv
from .rag import chunk_by_section, index, parse_filing, retrieve
from .tools import valuation_metrics

START = date(2024, 1, 2)
END = date(2024, 5, 31)
ANALYSIS_END = date(2024, 1, 31)
INCEPTION = date(2024, 2, 1)
FISCAL_YEAR = 2023
AGENTS = ("valuation_agent", "sentiment_agent", "fundamental_agent")
QA_AREA = 1

BUY, SELL = "BUY", "SELL"
ALL_BUY = [(BUY, BUY, BUY)] * 2
ALL_SELL = [(SELL, SELL, SELL)] * 2


def converge(split: tuple[str, str, str], final: str) -> list[tuple[str, str, str]]:
    """Two split rounds, then unanimity in round 3."""
    return [split] * 2 + [(final,) * 3]


@dataclass(frozen=True)
class TickerPlan:
    ticker: str
    votes: list[tuple[str | None, str | None, str | None]]  # per debate round: valuation, sentiment, fundamental
    drift: float  # daily log drift after January
    vol: float
    margin: float
    growth: float
    news: bool = True
    jan_target: float | None = None

    @property
    def standalone(self) -> tuple[str | None, ...]:
        return self.votes[0]

    @property
    def decision(self) -> str:
        final = {v for v in self.votes[-1] if v is not None}
        return final.pop()


PLANS = [
    TickerPlan("ZEDX", converge((BUY, BUY, SELL), BUY), 0.0012, 0.028, -0.145, 0.36, jan_target=113.56),
    TickerPlan("ALDR", ALL_BUY, 0.0009, 0.014, 0.221, 0.12),
    TickerPlan("BRYN", ALL_BUY, 0.0006, 0.012, 0.184, 0.08),
    TickerPlan("CYPR", converge((BUY, SELL, SELL), SELL), -0.0015, 0.024, -0.062, -0.07),
    TickerPlan("DUNE", ALL_BUY, 0.0008, 0.016, 0.153, 0.15),
    TickerPlan("ELMQ", converge((BUY, SELL, BUY), BUY), 0.0005, 0.019, 0.097, 0.10),
    TickerPlan("FNWK", ALL_BUY, 0.0007, 0.013, 0.265, 0.09),
    TickerPlan("GRVL", ALL_BUY, 0.0004, 0.011, 0.128, 0.05),
    TickerPlan("HLXO", converge((SELL, BUY, SELL), SELL), -0.0010, 0.022, -0.031, -0.02),
    TickerPlan("IVRY", ALL_BUY, 0.0010, 0.017, 0.192, 0.18),
    TickerPlan("JTTY", converge((BUY, SELL, BUY), BUY), 0.0003, 0.021, 0.061, 0.11),
    TickerPlan("KSTR", [(BUY, None, BUY)] * 2, 0.0006, 0.015, 0.143, 0.07, news=False),
    TickerPlan("LUMA", converge((SELL, BUY, BUY), BUY), 0.0009, 0.018, 0.176, 0.21),
    TickerPlan("MOSS", ALL_SELL, -0.0012, 0.026, -0.118, -0.11),
    TickerPlan("NIMB", ALL_BUY, 0.0005, 0.012, 0.139, 0.06),
]

CONFIG = f"""\
# Demo run configuration (paths are relative to this file)
corpus_root = .
script = scripts
universe = universe.txt
output_dir = out
provider = scripted
risk_profile = risk-neutral
analysis_end = {ANALYSIS_END.isoformat()}
inception = {INCEPTION.isoformat()}
backtest_start = {ANALYSIS_END.isoformat()}
backtest_end = {END.isoformat()}
trading_days = 252
rolling_window = 21
rf_annual = 0.05  # roughly the one-month bill rate in early 2024
round_cap = 6
parallelism = 4
top_k = 4
"""


def business_days(start: date, end: date) -> list[date]:
    days, d = [], start
    while d <= end:
        if d.weekday() < 5:
            days.append(d)
        d += timedelta(days=1)
    return days


def _closes(plan: TickerPlan, rng: random.Random, days: list[date]) -> list[float]:
    n_jan = sum(d <= ANALYSIS_END for d in days)
    first = 100.0 if plan.jan_target else round(rng.uniform(20, 300), 2)
    steps = [rng.gauss(0.0, plan.vol) for _ in days[1:]]
    if plan.jan_target:
        # shift January's steps so the month ends exactly on the target close
        jan = steps[: n_jan - 1]
        shift = (math.log(plan.jan_target / first) - math.fsum(jan)) / len(jan)
        steps[: n_jan - 1] = [s + shift for s in jan]
    else:
        steps = [s + (0.0004 if i < n_jan - 1 else plan.drift) for i, s in enumerate(steps)]
    closes, level = [first], math.log(first)
    for s in steps:
        level += s
        closes.append(round(math.exp(level), 2))
    if plan.jan_target:
        closes[n_jan - 1] = plan.jan_target
    return closes


def _write_prices(plan: TickerPlan, path: Path) -> None:
    rng = random.Random(f"prices:{plan.ticker}")
    days = business_days(START, END)
    closes = _closes(plan, rng, days)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["date", "open", "high", "low", "close", "volume"])
        prev = closes[0]
        for d, close in zip(days, closes):
            open_ = round(prev * (1 + rng.gauss(0, plan.vol / 3)), 2)
            high = round(max(open_, close) * (1 + abs(rng.gauss(0, plan.vol / 2))), 2)
            low = round(min(open_, close) * (1 - abs(rng.gauss(0, plan.vol / 2))), 2)
            volume = int(rng.uniform(2e5, 6e6))
            writer.writerow([d.isoformat(), f"{open_:.2f}", f"{high:.2f}", f"{low:.2f}", f"{close:.2f}", volume])
            prev = close


def _company(ticker: str) -> str:
    return f"{ticker.title()} Systems Inc."


def _filing(plan: TickerPlan) -> str:
    rng = random.Random(f"filing:{plan.ticker}")
    revenue = round(rng.uniform(400, 4000), 1)
    prior = round(revenue / (1 + plan.growth), 1)
    gross = round(rng.uniform(0.45, 0.8), 3)
    op_income = round(revenue * plan.margin, 1)
    net_income = round(op_income * 0.8 if op_income > 0 else op_income * 1.1, 1)
    cfo = round(abs(op_income) * 0.6 + revenue * 0.12, 1)
    customers = rng.randrange(800, 9000, 50)
    name = _company(plan.ticker)
    direction = "an increase" if plan.growth >= 0 else "a decrease"
    result = "income" if op_income >= 0 else "loss"
    return f"""{name.upper()}
ANNUAL REPORT ON FORM 10-K
For the fiscal year ended December 31, {FISCAL_YEAR}

Item 1. Business
{name} sells cloud software for securing enterprise workloads. The company serves about {customers} customers
through direct sales and channel partners. Subscription revenue makes up most of total revenue.

Item 1A. Risk Factors
Competition in enterprise security software is intense and pricing pressure could reduce margins.
A small number of large customers account for a meaningful share of bookings.
Execution of the restructuring plan announced in {FISCAL_YEAR} may take longer than expected.

Item 7. Management's Discussion and Analysis of Financial Condition and Results of Operations
Revenue for fiscal {FISCAL_YEAR} was ${revenue:,.1f} million compared with ${prior:,.1f} million in fiscal {FISCAL_YEAR - 1}, {direction} of {abs(plan.growth):.1%}.
Gross margin was {gross:.1%} for the year.
Operating {result} was ${abs(op_income):,.1f} million and the operating margin was {plan.margin:.1%}.
Net cash provided by operating activities was ${cfo:,.1f} million while net {'income' if net_income >= 0 else 'loss'} was ${abs(net_income):,.1f} million.
During the year we expanded our customer base, launched a leadership development program and streamlined operations.

Item 8. Financial Statements and Supplementary Data
Revenue {revenue:.1f}; operating income (loss) {op_income:.1f}; net income (loss) {net_income:.1f};
net cash from operating activities {cfo:.1f}. All amounts in millions of US dollars.
"""


NEWS_GOOD = [
    "{name} named a leader in an industry analyst report on cloud security",
    "{name} wins multi-year contract with a large financial institution",
    "{name} shareholders approve board slate and auditor at annual meeting",
]
NEWS_BAD = [
    "{name} director files to sell shares under a trading plan",
    "{name} faces pricing pressure as rivals cut subscription fees",
    "{name} delays product launch after customer testing",
]


def _news(plan: TickerPlan) -> list[dict]:
    rng = random.Random(f"news:{plan.ticker}")
    name = _company(plan.ticker)
    upbeat = plan.standalone[1] == BUY
    pool = NEWS_GOOD + NEWS_BAD[:1] if upbeat else NEWS_BAD + NEWS_GOOD[:1]
    items = []
    for i, template in enumerate(pool):
        day = date(2024, 1, 4 + 6 * i)
        stamp = datetime(day.year, day.month, day.day, 13, rng.randrange(60), tzinfo=timezone.utc)
        headline = template.format(name=name)
        items.append({
            "id": f"{plan.ticker}-{i + 1:03d}",
            "ticker": plan.ticker,
            "published_at": stamp.isoformat().replace("+00:00", "Z"),
            "headline": headline,
            "body": f"{headline}. Coverage notes the move could affect {plan.ticker} over the coming quarter.",
        })
    # one item after the analysis window; agents must not see it
    items.append({
        "id": f"{plan.ticker}-900",
        "ticker": plan.ticker,
        "published_at": "2024-02-20T14:00:00Z",
        "headline": f"{name} reports fourth-quarter results",
        "body": "Results released after the analysis window.",
    })
    return items


def _entry(speaker: str, task: str, response: str) -> dict:
    return ScriptEntry(response, prompts.matcher(speaker, task)).to_json()


def _pct(x: float) -> str:
    return f"{x:+.2%}"


def _script(plan: TickerPlan, root: Path) -> list[dict]:
    t = plan.ticker
    prices = load_price_csv(root / "prices" / f"{t}.csv")
    m = valuation_metrics(prices, START, ANALYSIS_END)
    doc = parse_filing((root / "filings" / f"{t}_10K_{FISCAL_YEAR}.txt").read_text(encoding="utf-8"),
                       f"{t}_10K_{FISCAL_YEAR}", t)
    store = index(chunk_by_section(doc), HashEmbedder())
    hits = retrieve(store, prompts.FUNDAMENTAL_QUESTIONS[QA_AREA - 1], 4)
    cited = next(c for c, _ in hits if "operating margin" in c.text)
    margin_line = next(line for line in cited.body.splitlines() if "operating margin" in line)
    v0, s0, f0 = plan.standalone
    entries = []

    # round 1: standalone analyses
    entries.append(_entry("valuation_agent", "analysis (step 1)", 'TOOL_CALL {"name": "valuation_metrics", "args": '
                          f'{{"start": "{START.isoformat()}", "end": "{ANALYSIS_END.isoformat()}"}}}}'))
    stance = "supports holding the stock" if v0 == BUY else "does not compensate for the risk"
    entries.append(_entry("valuation_agent", "analysis (step 2)",
                          f"{t} moved {_pct(m.cumulative_return)} from {m.start} to {m.end}, "
                          f"{_pct(m.annualized_return)} annualized, with annualized volatility of "
                          f"{m.annualized_volatility:.2%}. The trend {stance}.\nRATING: {v0}"))
    if plan.news:
        entries.append(_entry("sentiment_agent", "analysis (step 1)",
                              'TOOL_CALL {"name": "summarize_with_reflection", "args": {}}'))
        tone = "mostly favourable" if s0 == BUY else "mostly negative"
        entries += [
            _entry("sentiment_agent", "summarize (draft)", f"January coverage of {t} is {tone}. Recommendation: {s0}."),
            _entry("sentiment_agent", "summarize (critique)",
                   "The draft leans on headlines and does not weigh the single contrary item."),
            _entry("sentiment_agent", "summarize (refine)",
                   f"Four January items; coverage is {tone} once the contrary item is weighed.\nRATING: {s0}"),
            _entry("sentiment_agent", "analysis (step 2)",
                   f"News flow for {t} in January was {tone}.\nRATING: {s0}"),
        ]
    entries += [
        _entry("fundamental_agent", "analysis (step 1)",
               f'TOOL_CALL {{"name": "fundamental_qa", "args": {{"area": {QA_AREA}}}}}'),
        _entry("fundamental_agent", "grounded answer", f"{margin_line.strip()} [{cited.chunk_id}]"),
        _entry("fundamental_agent", "analysis (step 2)",
               f"From the {FISCAL_YEAR} 10-K: {margin_line.strip()} "
               f"{'Profitability supports the case.' if f0 == BUY else 'Losses weigh on the case.'}\nRATING: {f0}"),
    ]

    # collaboration round 2 and the consolidated report
    for agent, vote in zip(AGENTS, plan.standalone):
        if vote is not None:
            entries.append(_entry(agent, "collaboration (round 2)",
                                  f"I have read my colleagues' analyses and keep my view on {t}.\nRATING: {vote}"))
    buys = sum(v == BUY for v in plan.standalone)
    voters = sum(v is not None for v in plan.standalone)
    filing = f"Filing: {margin_line.strip()}\n"
    report = (
        "Positive Indicators\n"
        f"Performance: {t} moved {_pct(m.cumulative_return)} between {m.start} and {m.end}.\n"
        + (filing if plan.margin >= 0 else "")
        + "\nConcerns\n"
        + (filing if plan.margin < 0 else "")
        + f"Volatility: annualized volatility was {m.annualized_volatility:.2%}.\n"
        + ("News coverage was unavailable for the window.\n" if not plan.news
           else f"Sentiment analyst rating: {s0}.\n")
        + "\nConclusion\n"
        f"{buys} of {voters} analysts rate {t} BUY; position sizing should reflect the volatility.\n"
        "TERMINATE"
    )
    entries.append(_entry("coordinator", "consolidate (round 2)", report))

    # debate rounds
    for rnd, votes in enumerate(plan.votes, start=1):
        for agent, vote in zip(AGENTS, votes):
            if vote is None:
                continue
            prev = plan.votes[rnd - 2][AGENTS.index(agent)] if rnd > 1 else vote
            lead = "After weighing the other analyses I change my view." if vote != prev else \
                f"Round {rnd}: my view on {t} is unchanged."
            entries.append(_entry(agent, f"debate (round {rnd})", f"{lead}\nRATING: {vote}"))
    return entries


def _dump(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def write_demo(dest: str | Path) -> Path:
    root = Path(dest)
    for sub in ("prices", "filings", "news", "scripts"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    for plan in PLANS:
        _write_prices(plan, root / "prices" / f"{plan.ticker}.csv")
        (root / "filings" / f"{plan.ticker}_10K_{FISCAL_YEAR}.txt").write_text(_filing(plan), encoding="utf-8")
        if plan.news:
            lines = [json.dumps(item, sort_keys=True) for item in _news(plan)]
            (root / "news" / f"{plan.ticker}.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")
        _dump(root / "scripts" / f"{plan.ticker}.json", _script(plan, root))
    (root / "universe.txt").write_text(
        "# synthetic 15-ticker universe\n" + "".join(f"{p.ticker}\n" for p in PLANS), encoding="utf-8")
    (root / "config.txt").write_text(CONFIG, encoding="utf-8")
    (root / ".gitignore").write_text("out/\n", encoding="utf-8")
    return root


def expected_decisions() -> dict[str, str]:
    """Consensus outcome each demo script is built to reach."""
    return {p.ticker: p.decision for p in PLANS}


def expected_standalone() -> dict[str, dict[str, str]]:
    """Each agent's standalone rating per ticker (ABSTAIN where the agent has no data)."""
    return {
        p.ticker: {agent: vote or "ABSTAIN" for agent, vote in zip(AGENTS, p.standalone)}
        for p in PLANS
    }
