"""Prompt texts and the request header convention.

Every request's last message starts with a three-line header (ticker,
speaker, task). Scripted fixtures match on it, so the header format is part
of the script-file contract.
"""

from __future__ import annotations

ROLE_PROMPTS = {
    "valuation": (
        "As a valuation equity analyst, your primary responsibility is to analyze the valuation "
        "trends of a given asset or portfolio over an extended time horizon. To complete the task, "
        "you must analyze the historical valuation data of the asset or portfolio provided, identify "
        "trends and patterns in valuation metrics over time, and interpret the implications of these "
        "trends for investors or stakeholders."
    ),
    "sentiment": (
        "As a sentiment equity analyst your primary responsibility is to analyze the financial news, "
        "analyst ratings and disclosures related to the underlying security; and analyze its "
        "implication and sentiment for investors or stakeholders."
    ),
    "fundamental": (
        "As a fundamental financial equity analyst your primary responsibility is to analyze the most "
        "recent 10K report provided for a company. You have access to a powerful tool that can help "
        "you extract relevant information from the 10K. Your analysis should be based solely on the "
        "information that you retrieve using this tool. You can interact with this tool using natural "
        "language queries. The tool will understand your requests and return relevant text snippets "
        "and data points from the 10K document. Keep checking if you have answered the users' "
        "question to avoid looping."
    ),
}

RISK_DIRECTIVES = {
    "risk-averse": (
        "You are advising a risk-averse investor. Weigh volatility, drawdowns and downside risk "
        "heavily, prefer capital preservation over upside, and recommend SELL when the risks are "
        "material even if recent performance has been strong."
    ),
    "risk-neutral": (
        "You are advising a risk-neutral investor. Weigh expected upside and downside evenly and "
        "judge the stock on its overall balance of return and risk."
    ),
}

COLLABORATION_PROMPT = (
    "You are a helpful assistant skilled at coordinating a group of other agents to solve a task. "
    "You make sure that every agent in the group chat has a chance to speak at least twice. When all "
    "agents provide their analysis, consolidate inputs of all agent into a report. \n"
    'Reply "TERMINATE" at the end when everything is done. '
)

DEBATE_PROMPT = (
    "You are a helpful assistant skilled at coordinating a group of other agents to solve a task. "
    "You make sure that every agent in the group chat has a chance to speak at least twice. Each "
    "agent can not decide for the whole group. They are tasked with coming to a consensus. You must "
    "invoke all agents before deciding to Terminate. \n"
    'Reply "TERMINATE" at the end when everything is done.'
)

RATING_CONTRACT = (
    "Finish your answer with a final line of the form `RATING: BUY` or `RATING: SELL`."
)

TOOL_PROTOCOL = (
    "To use a tool, reply with one line `TOOL_CALL {\"name\": <tool>, \"args\": {...}}` and nothing "
    "else; the result comes back in the next message. Available tools: {tools}."
)

CONSOLIDATION_FORMAT = (
    "Write the consolidated report with exactly three headed sections: Positive Indicators, "
    "Concerns, Conclusion. End with TERMINATE."
)

FUNDAMENTAL_QUESTIONS = (
    "What do the cash flow and income statements show about cash generation and profitability?",
    "How are operations and gross margin developing?",
    "What are the main areas of concern?",
    "What progress has the company made towards its stated objectives?",
)

GROUNDED_ANSWER_SYSTEM = (
    "You answer questions about a company's financial filing. Use only the excerpts provided; if "
    "they do not contain the answer, say so. Cite excerpts by their bracketed id."
)

REFLECTION_SYSTEM = (
    "You are a financial news analyst. Work in three passes: summarize, critique your summary, "
    "then refine it."
)

REFLECTION_STEPS = {
    "draft": (
        "Read the news items below and provide a concise summary along with an informed "
        "recommendation on whether to invest in this stock."
    ),
    "critique": (
        "Critique the draft: point out unsupported claims, missing items and overstated sentiment."
    ),
    "refine": (
        "Rewrite the summary so it addresses the critique. " + RATING_CONTRACT
    ),
}

FAITHFULNESS_SYSTEM = (
    "You check whether an answer is supported by source excerpts. Reply with `SCORE: 1` if every "
    "claim is supported by the excerpts and `SCORE: 0` otherwise."
)

RELEVANCE_SYSTEM = (
    "You check whether a retrieved excerpt is relevant to a question. Reply with `SCORE: 1` if it is "
    "relevant and `SCORE: 0` if it is not."
)


def task_header(ticker: str, speaker: str, task: str) -> str:
    return f"Ticker: {ticker}\nSpeaker: {speaker}\nTask: {task}\n"


def matcher(speaker: str, task: str) -> str:
    """Substring that selects requests for ``speaker`` doing ``task`` (prefix match on the task)."""
    return f"Speaker: {speaker}\nTask: {task}"
