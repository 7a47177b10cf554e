from __future__ import annotations

import json
import math

import httpx
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stockcouncil.errors import ConfigError, ProviderError, ScriptExhaustedError
from stockcouncil.llm import (
    ChatMessage,
    CompletionRequest,
    HashEmbedder,
    HttpProvider,
    ScriptedProvider,
    ScriptEntry,
    complete,
    cosine,
    embed,
    load_script,
    norm,
)


def request(text: str, speaker: str = "a") -> CompletionRequest:
    return CompletionRequest((ChatMessage("system", "sys", "be brief"), ChatMessage("user", "u", text)), speaker=speaker)


def test_single_entry_script():
    reply = complete(ScriptedProvider(["TERMINATE"]), request("go"))
    assert reply == ChatMessage("assistant", "a", "TERMINATE")


def test_fresh_scripts_are_deterministic():
    script = [ScriptEntry("one"), ScriptEntry("two")]
    a = [complete(ScriptedProvider(script), request("x")).content for _ in range(2)]
    assert a == ["one", "one"]


def test_exhausted_script_names_request():
    provider = ScriptedProvider(["only"])
    complete(provider, request("first"))
    with pytest.raises(ScriptExhaustedError, match="second"):
        complete(provider, request("second"))


def test_matchers_take_priority_and_consume_once():
    provider = ScriptedProvider([
        ScriptEntry("fallback"),
        ScriptEntry("for-b", match="Speaker: b"),
    ])
    assert complete(provider, request("Speaker: b\nhi")).content == "for-b"
    assert complete(provider, request("Speaker: b\nhi")).content == "fallback"
    assert provider.remaining == 0
    assert len(provider.calls) == 2


def test_unmatched_entries_are_skipped():
    provider = ScriptedProvider([ScriptEntry("for-c", match="Speaker: c")])
    with pytest.raises(ScriptExhaustedError):
        complete(provider, request("Speaker: b"))


def test_replay_reproduces_assistant_messages():
    original = ScriptedProvider([ScriptEntry("x1", "Task: one"), ScriptEntry("x2", "Task: two")])
    asks = ["Task: two", "Task: one"]
    first = [complete(original, request(a)).content for a in asks]
    replay = ScriptedProvider([ScriptEntry(c) for c in first])
    assert [complete(replay, request(a)).content for a in asks] == first


def test_load_script(tmp_path):
    path = tmp_path / "s.json"
    path.write_text(json.dumps([{"response": "r1"}, {"match": "m", "response": "r2"}]))
    assert load_script(path) == [ScriptEntry("r1"), ScriptEntry("r2", "m")]
    path.write_text('{"response": "x"}')
    with pytest.raises(ConfigError):
        load_script(path)
    with pytest.raises(ConfigError):
        load_script(tmp_path / "missing.json")


def test_request_validation():
    with pytest.raises(ValueError):
        CompletionRequest((ChatMessage("user", "u", "no system"),))
    with pytest.raises(ValueError):
        ChatMessage("user", "u", "   ")
    with pytest.raises(ValueError):
        ChatMessage("robot", "u", "x")


def test_hash_embedder_examples():
    e = HashEmbedder()
    a, b = embed(e, ["revenue grew strongly", "revenue grew strongly"])
    assert np.array_equal(a.values, b.values)
    assert norm(a) == pytest.approx(1.0, abs=1e-9)
    other = e.vector("zebra xylophone quartz")
    assert cosine(a, a) == pytest.approx(1.0, abs=1e-9)
    assert cosine(a, other) < cosine(a, a)
    assert a.dimension == 256


def test_embed_validates_input():
    with pytest.raises(ValueError):
        embed(HashEmbedder(), [])
    with pytest.raises(ValueError):
        embed(HashEmbedder(), ["ok", " "])


@given(st.text(min_size=1).filter(lambda t: t.strip()))
def test_hash_embedder_pure_and_unit(text):
    e = HashEmbedder()
    v1, v2 = e.vector(text), HashEmbedder().vector(text)
    assert np.array_equal(v1.values, v2.values)
    assert math.isclose(norm(v1), 1.0, abs_tol=1e-9)
    assert math.isclose(cosine(v1, v1), 1.0, abs_tol=1e-9)


def http_provider(handler, retry_limit=2, monkeypatch=None):
    monkeypatch.setenv("TEST_KEY", "secret")
    sleeps = []
    provider = HttpProvider("https://llm.example/v1", "m", api_key_env="TEST_KEY", retry_limit=retry_limit,
                            client=httpx.Client(transport=httpx.MockTransport(handler)), sleep=sleeps.append)
    return provider, sleeps


def ok_reply(text="hello"):
    return httpx.Response(200, json={"choices": [{"message": {"content": text}}]})


def test_http_retries_5xx_then_succeeds(monkeypatch):
    seen = []

    def handler(req):
        seen.append(json.loads(req.content))
        return httpx.Response(503) if len(seen) < 3 else ok_reply()

    provider, sleeps = http_provider(handler, monkeypatch=monkeypatch)
    assert provider.complete(request("hi", speaker="val")).content == "hello"
    assert provider.requests_sent == 3
    assert sleeps == [0.5, 1.0]
    assert seen[0]["messages"][1] == {"role": "user", "content": "hi"}


def test_http_gives_up_after_retry_limit(monkeypatch):
    def handler(req):
        raise httpx.ConnectError("down", request=req)

    provider, _ = http_provider(handler, retry_limit=2, monkeypatch=monkeypatch)
    with pytest.raises(ProviderError, match="3 attempts"):
        provider.complete(request("hi"))
    assert provider.requests_sent == 3


def test_http_never_retries_4xx(monkeypatch):
    provider, sleeps = http_provider(lambda req: httpx.Response(401, text="bad key"), monkeypatch=monkeypatch)
    with pytest.raises(ProviderError, match="401"):
        provider.complete(request("hi"))
    assert provider.requests_sent == 1 and sleeps == []


def test_http_rejects_empty_output(monkeypatch):
    provider, _ = http_provider(lambda req: ok_reply(""), monkeypatch=monkeypatch)
    with pytest.raises(ProviderError):
        provider.complete(request("hi"))


def test_http_requires_key_variable(monkeypatch):
    monkeypatch.delenv("MISSING_KEY_VAR", raising=False)
    provider = HttpProvider("https://llm.example/v1", "m", api_key_env="MISSING_KEY_VAR",
                            client=httpx.Client(transport=httpx.MockTransport(lambda r: ok_reply())))
    with pytest.raises(ProviderError, match="MISSING_KEY_VAR"):
        provider.complete(request("hi"))


def test_http_embeddings(monkeypatch):
    def handler(req):
        body = json.loads(req.content)
        rows = [{"index": i, "embedding": [float(i), 1.0]} for i in range(len(body["input"]))]
        return httpx.Response(200, json={"data": rows[::-1]})

    provider, _ = http_provider(handler, monkeypatch=monkeypatch)
    vecs = embed(provider, ["a", "b"])
    assert [list(v.values) for v in vecs] == [[0.0, 1.0], [1.0, 1.0]]
