"""Chat-completion and embedding providers.

Two providers share one contract:

* ``ScriptedProvider`` replays canned responses, so every multi-agent
  workflow can be exercised offline and deterministically.
* ``HttpProvider`` talks to an OpenAI-style ``/chat/completions`` endpoint.

Embeddings default to ``HashEmbedder``, a pure function of the text.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import re
import threading
import time
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import httpx
import numpy as np

from .errors import ConfigError, ProviderError, ScriptExhaustedError

log = logging.getLogger(__name__)

ROLES = ("system", "user", "assistant", "tool")
HASH_DIM = 256
HASH_NGRAM = 3


@dataclass(frozen=True)
class ChatMessage:
    role: str
    author: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"unknown message role {self.role!r}")
        if self.role != "tool" and not self.content.strip():
            raise ValueError(f"empty {self.role} message from {self.author}")

    def to_json(self) -> dict:
        return {"role": self.role, "author": self.author, "content": self.content}


@dataclass(frozen=True)
class CompletionRequest:
    messages: tuple[ChatMessage, ...]
    temperature: float = 0.0
    max_output: int = 1024
    speaker: str = "assistant"

    def __post_init__(self) -> None:
        object.__setattr__(self, "messages", tuple(self.messages))
        if not self.messages:
            raise ValueError("completion request has no messages")
        if self.messages[0].role != "system":
            raise ValueError("first message of a completion request must be the system prompt")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_output < 1:
            raise ValueError("max_output must be >= 1")

    @property
    def latest(self) -> str:
        return self.messages[-1].content


@dataclass(frozen=True)
class ScriptEntry:
    response: str
    match: str | None = None

    def __post_init__(self) -> None:
        if not self.response:
            raise ValueError("script entry needs a non-empty response")

    def to_json(self) -> dict:
        return {"response": self.response} if self.match is None else {"match": self.match, "response": self.response}


@dataclass(frozen=True)
class EmbeddingVector:
    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.values, dtype=np.float64)
        if arr.ndim != 1 or not np.all(np.isfinite(arr)):
            raise ValueError("embedding must be a finite 1-d vector")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def dimension(self) -> int:
        return int(self.values.shape[0])

    def cosine(self, other: EmbeddingVector) -> float:
        denom = float(np.linalg.norm(self.values) * np.linalg.norm(other.values))
        if denom == 0.0:
            return 0.0
        return max(-1.0, min(1.0, float(self.values @ other.values) / denom))


class Provider(Protocol):
    def complete(self, request: CompletionRequest) -> ChatMessage: ...

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]: ...


class HashEmbedder:
    """Signed feature hashing of word 1..n-grams, L2-normalized."""

    def __init__(self, dimension: int = HASH_DIM, ngram: int = HASH_NGRAM):
        self.dimension = dimension
        self.ngram = ngram

    def _features(self, text: str) -> list[str]:
        tokens = re.findall(r"[a-z0-9]+", text.lower())
        if not tokens:
            raw = text.strip()
            return [raw[i:i + 3] for i in range(max(1, len(raw) - 2))]
        feats = []
        for n in range(1, self.ngram + 1):
            feats.extend(" ".join(tokens[i:i + n]) for i in range(len(tokens) - n + 1))
        return feats

    def counts(self, text: str) -> np.ndarray:
        """Unnormalized signed feature counts (integer valued)."""
        if not text.strip():
            raise ValueError("cannot embed empty text")
        vec = np.zeros(self.dimension)
        for feat in self._features(text):
            digest = int.from_bytes(hashlib.blake2b(feat.encode(), digest_size=8).digest(), "big")
            sign = 1.0 if digest >> 63 else -1.0
            vec[digest % self.dimension] += sign
        return vec

    def vector(self, text: str) -> EmbeddingVector:
        vec = self.counts(text)
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            # every feature cancelled out; keep the vector well-defined
            vec[0] = 1.0
            norm = 1.0
        return EmbeddingVector(vec / norm)

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        return [self.vector(t) for t in texts]


def load_script(path: str | Path) -> list[ScriptEntry]:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read script {path}: {exc}") from None
    if not isinstance(data, list):
        raise ConfigError(f"script {path} must be a JSON array")
    try:
        return [ScriptEntry(str(item["response"]), item.get("match")) for item in data]
    except (KeyError, TypeError, AttributeError, ValueError) as exc:
        raise ConfigError(f"bad script entry in {path}: {exc}") from None


class ScriptedProvider:
    """Replays a script of canned responses.

    For each request the first remaining entry whose ``match`` occurs in the
    latest message wins; otherwise the first remaining entry without a
    matcher is used. Entries are consumed once.
    """

    def __init__(self, entries: Sequence[ScriptEntry | str], embedder: HashEmbedder | None = None):
        self._entries = [ScriptEntry(e) if isinstance(e, str) else e for e in entries]
        self._used = [False] * len(self._entries)
        self._lock = threading.Lock()
        self.embedder = embedder or HashEmbedder()
        self.calls: list[CompletionRequest] = []

    @classmethod
    def from_file(cls, path: str | Path) -> ScriptedProvider:
        return cls(load_script(path))

    @property
    def remaining(self) -> int:
        return self._used.count(False)

    def _pick(self, latest: str) -> int | None:
        fallback = None
        for i, entry in enumerate(self._entries):
            if self._used[i]:
                continue
            if entry.match is None:
                if fallback is None:
                    fallback = i
            elif entry.match in latest:
                return i
        return fallback

    def complete(self, request: CompletionRequest) -> ChatMessage:
        with self._lock:
            self.calls.append(request)
            i = self._pick(request.latest)
            if i is None:
                snippet = request.latest[:200].replace("\n", " | ")
                raise ScriptExhaustedError(f"no script entry for request from {request.speaker}: {snippet!r}")
            self._used[i] = True
            text = self._entries[i].response
        return ChatMessage("assistant", request.speaker, text)

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        return self.embedder.embed(texts)


@dataclass
class HttpProvider:
    """OpenAI-compatible chat endpoint with bounded retries.

    Retries happen only on transport errors and 5xx replies; a 4xx reply
    fails immediately.
    """

    base_url: str
    model: str
    api_key_env: str = "OPENAI_API_KEY"
    embedding_model: str | None = None
    retry_limit: int = 2
    backoff: float = 0.5
    timeout: float = 60.0
    client: httpx.Client | None = None
    sleep: Callable[[float], None] = time.sleep
    requests_sent: int = field(default=0, init=False)

    def _headers(self) -> dict[str, str]:
        key = os.environ.get(self.api_key_env)
        if not key:
            raise ProviderError(f"environment variable {self.api_key_env} is not set")
        return {"Authorization": f"Bearer {key}", "Content-Type": "application/json"}

    def _post(self, path: str, payload: dict) -> dict:
        client = self.client or httpx.Client(timeout=self.timeout)
        url = self.base_url.rstrip("/") + path
        headers = self._headers()
        last: Exception | None = None
        try:
            for attempt in range(1 + self.retry_limit):
                if attempt:
                    self.sleep(self.backoff * 2 ** (attempt - 1))
                self.requests_sent += 1
                try:
                    resp = client.post(url, json=payload, headers=headers)
                except httpx.TransportError as exc:
                    last = exc
                    log.warning("POST %s failed (attempt %d): %s", path, attempt + 1, exc)
                    continue
                if resp.status_code >= 500:
                    last = ProviderError(f"HTTP {resp.status_code} from {url}")
                    log.warning("POST %s returned %d (attempt %d)", path, resp.status_code, attempt + 1)
                    continue
                if resp.status_code >= 400:
                    raise ProviderError(f"HTTP {resp.status_code} from {url}: {resp.text[:200]}")
                try:
                    return resp.json()
                except json.JSONDecodeError:
                    raise ProviderError(f"non-JSON reply from {url}") from None
        finally:
            if self.client is None:
                client.close()
        raise ProviderError(f"{url} failed after {1 + self.retry_limit} attempts: {last}")

    def complete(self, request: CompletionRequest) -> ChatMessage:
        messages = []
        for m in request.messages:
            # tool output goes back as user text; no function-calling wire format
            role = "user" if m.role == "tool" else m.role
            messages.append({"role": role, "content": m.content})
        data = self._post("/chat/completions", {
            "model": self.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_output,
        })
        try:
            text = data["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError):
            raise ProviderError(f"unexpected completion payload: {str(data)[:200]}") from None
        if not text.strip():
            raise ProviderError("model returned empty output")
        return ChatMessage("assistant", request.speaker, text)

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        data = self._post("/embeddings", {"model": self.embedding_model or self.model, "input": list(texts)})
        try:
            rows = sorted(data["data"], key=lambda row: row["index"])
            return [EmbeddingVector(row["embedding"]) for row in rows]
        except (KeyError, TypeError, ValueError):
            raise ProviderError(f"unexpected embedding payload: {str(data)[:200]}") from None


def complete(provider: Provider, request: CompletionRequest) -> ChatMessage:
    reply = provider.complete(request)
    if not reply.content.strip():
        raise ProviderError(f"empty output for {request.speaker}")
    return reply


def embed(provider: Provider | HashEmbedder, texts: Sequence[str]) -> list[EmbeddingVector]:
    texts = list(texts)
    if not texts:
        raise ValueError("nothing to embed")
    if any(not t.strip() for t in texts):
        raise ValueError("cannot embed empty text")
    vectors = provider.embed(texts)
    if len(vectors) != len(texts):
        raise ProviderError(f"embedder returned {len(vectors)} vectors for {len(texts)} texts")
    dims = {v.dimension for v in vectors}
    if len(dims) != 1:
        raise ProviderError(f"embedder returned mixed dimensions {sorted(dims)}")
    return vectors


def cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    return a.cosine(b)


def norm(v: EmbeddingVector) -> float:
    return math.sqrt(float(v.values @ v.values))
