"""Section-aware chunking, cosine retrieval, grounded answers and judges."""

from __future__ import annotations

import re
import threading
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from . import prompts
from .errors import DataError, JudgeParseError
from .llm import ChatMessage, CompletionRequest, EmbeddingVector, HashEmbedder, Provider, complete, embed

DEFAULT_BUDGET = 4000
DEFAULT_OVERLAP = 200
DEFAULT_TOP_K = 4
TIE_DIGITS = 12
PREAMBLE = "Preamble"
DOC_KINDS = ("10-K", "10-Q", "news")

_ITEM_LINE = re.compile(r"^\s*item\s+\d+[a-z]?\.", re.IGNORECASE)


@dataclass(frozen=True)
class Document:
    doc_id: str
    ticker: str
    kind: str
    sections: tuple[tuple[str, str], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "sections", tuple((h, b) for h, b in self.sections))
        if self.kind not in DOC_KINDS:
            raise DataError(f"{self.doc_id}: unknown document kind {self.kind!r}")
        if not self.sections:
            raise DataError(f"{self.doc_id}: document has no sections")
        headings = [h for h, _ in self.sections]
        if len(set(headings)) != len(headings):
            raise DataError(f"{self.doc_id}: duplicate section headings")


@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    doc_id: str
    heading: str
    text: str
    span: tuple[int, int]

    @property
    def body(self) -> str:
        """Chunk text without the heading prefix."""
        return self.text[len(self.heading) + 1:]


@dataclass(frozen=True)
class GroundedAnswer:
    question: str
    answer: str
    cited: tuple[str, ...]
    scores: dict[str, float]
    contexts: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class Judgement:
    score: float
    passed: bool
    raw: tuple[str, ...]


def parse_filing(text: str, doc_id: str, ticker: str, kind: str = "10-K") -> Document:
    """Split filing text on ``Item <n><letter?>.`` lines.

    Text ahead of the first item becomes a preamble section. A heading that
    repeats (tables of contents do this) gets a ``(2)``, ``(3)`` suffix.
    """
    sections: list[tuple[str, list[str]]] = [(PREAMBLE, [])]
    for line in text.splitlines():
        if _ITEM_LINE.match(line):
            sections.append((line.strip(), []))
        else:
            sections[-1][1].append(line)
    out: list[tuple[str, str]] = []
    seen: dict[str, int] = {}
    for heading, lines in sections:
        body = "\n".join(lines).strip()
        if heading == PREAMBLE and not body:
            continue
        seen[heading] = seen.get(heading, 0) + 1
        if seen[heading] > 1:
            heading = f"{heading} ({seen[heading]})"
        out.append((heading, body))
    if not out:
        raise DataError(f"{doc_id}: filing is empty")
    return Document(doc_id, ticker, kind, tuple(out))


def _split_end(body: str, start: int, limit: int) -> int:
    """End offset for a piece starting at ``start``: last whitespace in the back half of the budget."""
    hard = start + limit
    if hard >= len(body):
        return len(body)
    floor = start + limit // 2
    for j in range(hard, floor, -1):
        if body[j - 1].isspace():
            return j
    return hard


def chunk_by_section(doc: Document, budget: int = DEFAULT_BUDGET, overlap: int = DEFAULT_OVERLAP) -> list[Chunk]:
    """One chunk per section when it fits, otherwise overlapping pieces.

    ``budget`` bounds the full chunk text, heading prefix included; consecutive
    pieces of a section share exactly ``overlap`` characters.
    """
    if budget <= overlap or overlap < 0:
        raise DataError(f"chunk budget {budget} must exceed overlap {overlap} >= 0")
    chunks = []
    for s_idx, (heading, body) in enumerate(doc.sections):
        if not body:
            continue
        limit = budget - len(heading) - 1
        if limit <= overlap:
            raise DataError(f"{doc.doc_id}: heading {heading!r} leaves no room in a {budget}-char chunk")
        start, part = 0, 0
        while True:
            end = _split_end(body, start, limit)
            if end < len(body) and end - overlap <= start:
                end = start + limit
            chunks.append(Chunk(
                f"{doc.doc_id}:{s_idx:03d}:{part:03d}",
                doc.doc_id,
                heading,
                f"{heading}\n{body[start:end]}",
                (start, end),
            ))
            if end >= len(body):
                break
            start, part = end - overlap, part + 1
    if not chunks:
        raise DataError(f"{doc.doc_id}: document has no text")
    return chunks


class VectorStore:
    """In-memory exact cosine index. Reads may run concurrently; ``add`` takes a lock."""

    def __init__(self, embedder: Provider | HashEmbedder | None = None):
        self.embedder = embedder or HashEmbedder()
        self.dimension: int | None = None
        self.entries: dict[str, tuple[EmbeddingVector, Chunk]] = {}
        self._matrix: np.ndarray | None = None
        self._ids: list[str] = []
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self.entries)

    def add(self, chunks: Sequence[Chunk]) -> None:
        ids = [c.chunk_id for c in chunks]
        dupes = sorted({i for i in ids if ids.count(i) > 1} | (set(ids) & set(self.entries)))
        if dupes:
            raise DataError(f"duplicate chunk ids: {dupes[:5]}")
        vectors = embed(self.embedder, [c.text for c in chunks])
        with self._lock:
            for chunk, vec in zip(chunks, vectors):
                if self.dimension is None:
                    self.dimension = vec.dimension
                elif vec.dimension != self.dimension:
                    raise DataError(f"embedding dimension {vec.dimension} != store dimension {self.dimension}")
                self.entries[chunk.chunk_id] = (vec, chunk)
            self._ids = list(self.entries)
            rows = np.stack([self.entries[i][0].values for i in self._ids])
            self._matrix = rows / np.linalg.norm(rows, axis=1, keepdims=True)

    def has_doc(self, doc_id: str) -> bool:
        return any(chunk.doc_id == doc_id for _, chunk in self.entries.values())


def index(chunks: Sequence[Chunk], embedder: Provider | HashEmbedder | None = None) -> VectorStore:
    if not chunks:
        raise DataError("nothing to index")
    store = VectorStore(embedder)
    store.add(chunks)
    return store


def retrieve(store: VectorStore, query: str, k: int = DEFAULT_TOP_K) -> list[tuple[Chunk, float]]:
    """Top-k chunks by cosine similarity; ties go to the smaller chunk id."""
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    if not store.entries or store._matrix is None:
        raise DataError("vector store is empty")
    q = embed(store.embedder, [query])[0].values
    qn = np.linalg.norm(q)
    scores = (store._matrix @ (q / qn)).tolist() if qn else [0.0] * len(store._ids)
    # rounding lets exact ties stay ties despite float noise, so the id decides
    ranked = sorted(zip(store._ids, scores), key=lambda pair: (-round(pair[1], TIE_DIGITS), pair[0]))[:k]
    return [(store.entries[cid][1], max(-1.0, min(1.0, s))) for cid, s in ranked]


_CITE = re.compile(r"\[([^\[\]\s]+)\]")


def _cited_ids(answer: str, chunks: Sequence[Chunk]) -> tuple[str, ...]:
    given = [c.chunk_id for c in chunks]
    explicit = [cid for cid in dict.fromkeys(_CITE.findall(answer)) if cid in given]
    if explicit:
        return tuple(explicit)
    # no bracketed ids: cite chunks whose sentences the answer repeats
    echoed = []
    for c in chunks:
        sentences = [s.strip() for s in re.split(r"(?<=[.!?])\s+", c.body) if len(s.strip()) > 20]
        if any(s in answer for s in sentences):
            echoed.append(c.chunk_id)
    return tuple(echoed) or tuple(given)


def answer_with_context(
    question: str,
    retrieved: Sequence[tuple[Chunk, float]],
    provider: Provider,
    ticker: str = "",
    speaker: str = "fundamental_agent",
) -> GroundedAnswer:
    if not retrieved:
        raise DataError("no retrieved context to answer from")
    excerpts = "\n\n".join(f"[{c.chunk_id}]\n{c.text}" for c, _ in retrieved)
    user = (
        prompts.task_header(ticker, speaker, "grounded answer")
        + f"Question: {question}\n\nExcerpts:\n{excerpts}\n\nAnswer only from the excerpts above."
    )
    request = CompletionRequest(
        (ChatMessage("system", "tool:fundamental_qa", prompts.GROUNDED_ANSWER_SYSTEM),
         ChatMessage("user", "tool:fundamental_qa", user)),
        speaker=speaker,
    )
    reply = complete(provider, request)
    chunks = [c for c, _ in retrieved]
    cited = _cited_ids(reply.content, chunks)
    by_id = {c.chunk_id: c for c in chunks}
    return GroundedAnswer(
        question,
        reply.content,
        cited,
        {c.chunk_id: s for c, s in retrieved},
        {cid: by_id[cid].text for cid in cited},
    )


_SCORE = re.compile(r"score\s*[:=]\s*([0-9]*\.?[0-9]+)", re.IGNORECASE)
_YES = {"yes", "supported", "faithful", "relevant", "pass", "true"}
_NO = {"no", "not", "unsupported", "unfaithful", "irrelevant", "fail", "false"}


def parse_verdict(raw: str) -> float:
    """Judge reply to a score in [0, 1]: ``SCORE: x``, a leading yes/no word, or a bare number."""
    m = _SCORE.search(raw)
    if m:
        value = float(m.group(1))
    else:
        words = re.findall(r"[a-z]+", raw.lower())
        stripped = raw.strip()
        if words and words[0] in _YES:
            value = 1.0
        elif words and words[0] in _NO:
            value = 0.0
        elif re.fullmatch(r"[0-9]*\.?[0-9]+", stripped):
            value = float(stripped)
        else:
            raise JudgeParseError(f"unparseable judge reply: {raw!r}", raw)
    if not 0.0 <= value <= 1.0:
        raise JudgeParseError(f"judge score {value} outside [0, 1]", raw)
    return value


def _ask_judge(provider: Provider, system: str, body: str, ticker: str, task: str) -> str:
    request = CompletionRequest(
        (ChatMessage("system", "judge", system),
         ChatMessage("user", "judge", prompts.task_header(ticker, "judge", task) + body)),
        speaker="judge",
    )
    return complete(provider, request).content


def judge_faithfulness(answer: GroundedAnswer, provider: Provider, ticker: str = "") -> Judgement:
    if not answer.cited:
        raise DataError("answer cites no chunks")
    sources = "\n\n".join(f"[{cid}]\n{answer.contexts.get(cid, '')}" for cid in answer.cited)
    body = f"Excerpts:\n{sources}\n\nAnswer:\n{answer.answer}\n\nIs the answer supported by the excerpts?"
    raw = _ask_judge(provider, prompts.FAITHFULNESS_SYSTEM, body, ticker, "judge faithfulness")
    score = parse_verdict(raw)
    return Judgement(score, score >= 0.5, (raw,))


def judge_relevance(
    question: str, retrieved: Sequence[tuple[Chunk, float]], provider: Provider, ticker: str = ""
) -> Judgement:
    """Fraction of retrieved chunks the judge calls relevant."""
    if not retrieved:
        raise DataError("no chunks to judge")
    replies = []
    relevant = 0
    for chunk, _ in retrieved:
        body = f"Question: {question}\n\nExcerpt [{chunk.chunk_id}]:\n{chunk.text}\n\nIs the excerpt relevant?"
        raw = _ask_judge(provider, prompts.RELEVANCE_SYSTEM, body, ticker, "judge relevance")
        replies.append(raw)
        relevant += parse_verdict(raw) >= 0.5
    score = relevant / len(retrieved)
    return Judgement(score, score >= 0.5, tuple(replies))
