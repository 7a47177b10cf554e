from __future__ import annotations

import random
import string

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stockcouncil.errors import DataError, JudgeParseError
from stockcouncil.llm import HashEmbedder, ScriptedProvider, ScriptEntry
from stockcouncil.rag import (
    PREAMBLE,
    Chunk,
    Document,
    answer_with_context,
    chunk_by_section,
    index,
    judge_faithfulness,
    judge_relevance,
    parse_filing,
    parse_verdict,
    retrieve,
)

FILING = """ACME CORP FORM 10-K
Item 1. Business
Acme builds anvils for cartoon coyotes.
Item 1A. Risk Factors
Roadrunners are fast and difficult to catch.
Item 7. Management's Discussion
Revenue rose 12% and the operating margin was -3.0%.
"""


def doc(sections, doc_id="D"):
    return Document(doc_id, "ACME", "10-K", tuple(sections))


def test_parse_filing_sections():
    d = parse_filing(FILING, "ACME_10K_2023", "ACME")
    assert [h for h, _ in d.sections] == [PREAMBLE, "Item 1. Business", "Item 1A. Risk Factors",
                                          "Item 7. Management's Discussion"]
    assert d.sections[3][1] == "Revenue rose 12% and the operating margin was -3.0%."


def test_parse_filing_without_items_is_one_preamble():
    d = parse_filing("Just some text.\nMore text.", "X", "X")
    assert d.sections == ((PREAMBLE, "Just some text.\nMore text."),)


def test_parse_filing_repeated_heading_gets_suffix():
    d = parse_filing("Item 1. Business\ncontents\nItem 1. Business\nreal body", "X", "X")
    assert [h for h, _ in d.sections] == ["Item 1. Business", "Item 1. Business (2)"]


def test_parse_filing_empty_is_error():
    with pytest.raises(DataError):
        parse_filing("   \n", "X", "X")


def test_three_small_sections_three_chunks():
    chunks = chunk_by_section(doc([("A", "alpha"), ("B", "beta"), ("C", "gamma")]))
    assert [c.text for c in chunks] == ["A\nalpha", "B\nbeta", "C\ngamma"]


def test_long_section_splits_with_exact_overlap():
    rng = random.Random(1)
    body = "".join(rng.choice(string.ascii_letters) for _ in range(10_000))
    chunks = chunk_by_section(doc([("Item 7.", body)]), budget=4000, overlap=200)
    assert len(chunks) == 3
    for a, b in zip(chunks, chunks[1:]):
        assert a.span[1] - b.span[0] == 200
        assert a.body[-200:] == b.body[:200]
    assert all(len(c.text) <= 4000 for c in chunks)


def test_chunk_errors():
    with pytest.raises(DataError):
        chunk_by_section(doc([("A", "")]))
    with pytest.raises(DataError):
        chunk_by_section(doc([("A", "x")]), budget=100, overlap=100)


def reconstruct(chunks):
    text = chunks[0].body
    for prev, cur in zip(chunks, chunks[1:]):
        text += cur.body[prev.span[1] - cur.span[0]:]
    return text


words = st.lists(st.sampled_from(["alpha", "beta", "gamma", "delta", "x" * 30, "\n", "margin"]), max_size=400)


@settings(max_examples=60)
@given(st.lists(words, min_size=1, max_size=4), st.integers(60, 400), st.integers(0, 50))
def test_chunks_reconstruct_sections(bodies, budget, overlap):
    sections = [(f"Item {i}.", " ".join(b).strip()) for i, b in enumerate(bodies)]
    if not any(body for _, body in sections):
        return
    chunks = chunk_by_section(doc(sections), budget, overlap)
    for idx, (heading, body) in enumerate(sections):
        mine = [c for c in chunks if c.heading == heading]
        if not body:
            assert not mine
            continue
        assert reconstruct(mine) == body
        assert all(len(c.text) <= budget for c in mine)
        assert all(c.body == body[c.span[0]:c.span[1]] for c in mine)
    assert len({c.chunk_id for c in chunks}) == len(chunks)


def random_chunks(n, seed=0):
    rng = random.Random(seed)
    vocab = [f"w{i}" for i in range(300)]
    return [Chunk(f"c{i:03d}", "D", "H", "H\n" + " ".join(rng.choices(vocab, k=20)), (0, 1)) for i in range(n)]


def brute_rank(chunks, query, k, embedder):
    q = embedder.vector(query).values
    scored = [(float(np.dot(embedder.vector(c.text).values, q)), c.chunk_id) for c in chunks]
    return [cid for _, cid in sorted(scored, key=lambda p: (-p[0], p[1]))[:k]]


def test_index_examples():
    chunks = random_chunks(100)
    store = index(chunks, HashEmbedder())
    assert len(store) == 100
    again = index(chunks, HashEmbedder())
    assert all(np.array_equal(store.entries[i][0].values, again.entries[i][0].values) for i in store.entries)
    with pytest.raises(DataError):
        index(chunks + chunks[:1], HashEmbedder())
    with pytest.raises(DataError):
        index([], HashEmbedder())


def test_retrieve_examples():
    chunks = random_chunks(100)
    e = HashEmbedder()
    store = index(chunks, e)
    top, score = retrieve(store, chunks[17].text, 3)[0]
    assert top.chunk_id == "c017" and score == pytest.approx(1.0, abs=1e-9)
    assert len(retrieve(store, "anything", 500)) == 100
    query = "w1 w2 w3 w50 w77"
    hits = retrieve(store, query, 5)
    assert [c.chunk_id for c, _ in hits] == brute_rank(chunks, query, 5, e)
    scores = [s for _, s in hits]
    assert scores == sorted(scores, reverse=True)
    assert retrieve(store, query, 5) == hits
    with pytest.raises(DataError):
        retrieve(store, query, 0)


def scripted(*responses):
    return ScriptedProvider([ScriptEntry(r) for r in responses])


def test_answer_cites_echoed_chunk():
    d = parse_filing(FILING, "ACME_10K_2023", "ACME")
    chunks = chunk_by_section(d)
    hits = retrieve(index(chunks, HashEmbedder()), "operating margin", 3)
    mdna = next(c for c in chunks if c.heading.startswith("Item 7"))
    if mdna not in [c for c, _ in hits]:
        hits = hits[:2] + [(mdna, 0.0)]
    answer = answer_with_context("What was the margin?", hits, scripted(
        "Per the filing, Revenue rose 12% and the operating margin was -3.0%."))
    assert answer.cited == (mdna.chunk_id,)
    assert set(answer.cited) <= {c.chunk_id for c, _ in hits}


def test_answer_explicit_citations_and_fallback():
    chunks = random_chunks(3)
    hits = [(c, 0.5) for c in chunks]
    ans = answer_with_context("q", hits, scripted(f"See [{chunks[1].chunk_id}] and [bogus]."))
    assert ans.cited == (chunks[1].chunk_id,)
    ans = answer_with_context("q", hits, scripted("No quote here."))
    assert set(ans.cited) == {c.chunk_id for c in chunks}
    with pytest.raises(DataError):
        answer_with_context("q", [], scripted("x"))


def test_judge_faithfulness():
    chunks = random_chunks(2)
    hits = [(c, 0.5) for c in chunks]
    copied = answer_with_context("q", hits, scripted(chunks[0].body))
    assert judge_faithfulness(copied, scripted("SCORE: 1")).score == 1.0
    off_topic = answer_with_context("q", hits, scripted("The moon is made of cheese."))
    verdict = judge_faithfulness(off_topic, scripted("SCORE: 0"))
    assert verdict.score == 0.0 and not verdict.passed
    with pytest.raises(JudgeParseError) as info:
        judge_faithfulness(copied, scripted("maybe"))
    assert info.value.raw == "maybe"


@pytest.mark.parametrize("replies, expected", [
    (["SCORE: 1"] * 4, 1.0),
    (["SCORE: 0"] * 4, 0.0),
    (["yes", "no", "Relevant.", "irrelevant"], 0.5),
])
def test_judge_relevance(replies, expected):
    hits = [(c, 0.1) for c in random_chunks(4)]
    assert judge_relevance("q", hits, scripted(*replies)).score == expected


@pytest.mark.parametrize("raw, value", [("SCORE: 0.75", 0.75), ("score=1", 1.0), ("Yes, supported.", 1.0),
                                        ("No.", 0.0), ("0.5", 0.5)])
def test_parse_verdict(raw, value):
    assert parse_verdict(raw) == value


@pytest.mark.parametrize("raw", ["maybe", "SCORE: 3", "unclear answer"])
def test_parse_verdict_rejects(raw):
    with pytest.raises(JudgeParseError):
        parse_verdict(raw)
