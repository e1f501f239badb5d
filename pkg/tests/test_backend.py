import json
import os
import subprocess
import sys
import threading
import time

import httpx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from metareason.backend import (
    CacheRecord,
    CachedBackend,
    Completion,
    CompletionRequest,
    HttpBackend,
    HttpSettings,
    Message,
    ScriptedBackend,
    cache_key,
)
from metareason.errors import ApiError, ReplayMiss, ScriptExhausted, TransportError

from conftest import scripted


def req(text="hello", **kw):
    kw.setdefault("model", "m")
    return CompletionRequest.user(text, **kw)


class CountingBackend:
    def __init__(self, reply="ok"):
        self.calls = 0
        self.reply = reply

    def complete(self, r):
        self.calls += 1
        return Completion(text=f"{self.reply}:{r.messages[-1].content}")


# -- request validation -------------------------------------------------------

def test_request_invariants():
    with pytest.raises(ValueError):
        CompletionRequest("m", ())
    with pytest.raises(ValueError):
        req(temperature=2.5)
    with pytest.raises(ValueError):
        req(purpose_tag="other")
    with pytest.raises(ValueError):
        CompletionRequest("m", (Message("robot", "x"),))


# -- scripted -----------------------------------------------------------------

def test_scripted_pops_by_purpose():
    b = scripted(scores=["SCORE: 9"], executions=["E"])
    assert b.complete(req(purpose_tag="execution")).text == "E"
    assert b.complete(req(purpose_tag="scoring")).text == "SCORE: 9"
    with pytest.raises(ScriptExhausted):
        b.complete(req(purpose_tag="scoring"))


def test_scripted_from_file(tmp_path):
    path = tmp_path / "script.json"
    path.write_text(json.dumps([{"purpose": "scoring", "text": "SCORE: 1"},
                                {"purpose": "judge", "text": "VERDICT: PASS"}]))
    b = ScriptedBackend.from_file(path)
    assert b.complete(req(purpose_tag="judge")).text == "VERDICT: PASS"
    assert b.remaining("scoring") == 1


# -- cache keys ---------------------------------------------------------------

def test_cache_key_ignores_purpose():
    assert cache_key(req(purpose_tag="scoring")) == cache_key(req(purpose_tag="judge"))


def test_cache_key_sensitive_fields():
    base = cache_key(req())
    assert cache_key(req("hellO")) != base
    assert cache_key(req(model="m2")) != base
    assert cache_key(req(temperature=0.7)) != base
    assert cache_key(req(max_tokens=7)) != base


def test_cache_key_normalizes():
    assert cache_key(req("a\r\nb")) == cache_key(req("a\nb"))
    assert cache_key(req(temperature=0.5)) == cache_key(req(temperature=0.50))
    assert cache_key(req(temperature=1)) == cache_key(req(temperature=1.0))


def test_cache_key_stable_across_processes():
    code = ("from metareason.backend import CompletionRequest, cache_key;"
            "print(cache_key(CompletionRequest.user('hello', model='m')))")
    env = dict(os.environ, PYTHONHASHSEED="123")
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True,
                         env=env, check=True).stdout.strip()
    assert out == cache_key(req())


def test_cache_key_injective_on_corpus():
    corpus = {
        (model, text, temp, mt)
        for model in ("a", "b", "gpt-4")
        for text in ("", "x", "x ", " x", "x\n", "SCORE", "score", "é", "{input}")
        for temp in (0.0, 0.1, 0.7, 1.0, 2.0)
        for mt in (1, 256, 1024)
    }
    keys = {cache_key(CompletionRequest.user(t, model=m, temperature=tp, max_tokens=mt))
            for m, t, tp, mt in corpus}
    assert len(keys) == len(corpus)


# -- record / replay ----------------------------------------------------------

def test_record_memoizes(tmp_path):
    inner = CountingBackend()
    cache = CachedBackend(tmp_path, inner, "record")
    first = cache.complete(req())
    second = cache.complete(req())
    assert inner.calls == 1
    assert (first.from_cache, second.from_cache) == (False, True)
    assert first.text == second.text
    key = cache_key(req())
    assert (tmp_path / key[:2] / f"{key}.json").is_file()


def test_replay_serves_recorded(tmp_path):
    CachedBackend(tmp_path, CountingBackend(), "record").complete(req())
    replay = CachedBackend(tmp_path, None, "replay")
    assert replay.complete(req()).text == "ok:hello"
    with pytest.raises(ReplayMiss):
        replay.complete(req("novel"))


def test_record_replay_law(tmp_path):
    texts = [f"prompt {i % 5}" for i in range(12)]
    rec = CachedBackend(tmp_path, CountingBackend(), "record")
    recorded = [rec.complete(req(t)).text for t in texts]
    rep = CachedBackend(tmp_path, None, "replay")
    assert [rep.complete(req(t)).text for t in texts] == recorded


def test_cache_record_roundtrip(tmp_path):
    CachedBackend(tmp_path, CountingBackend(), "record").complete(req("x", purpose_tag="judge"))
    (path,) = tmp_path.glob("*/*.json")
    record = CacheRecord.from_dict(json.loads(path.read_text()))
    assert record.key == cache_key(record.request)
    assert CacheRecord.from_dict(record.to_dict()) == record


def test_no_partial_records_visible(tmp_path, monkeypatch):
    cache = CachedBackend(tmp_path, CountingBackend(), "record")

    def boom(*a, **k):
        raise KeyboardInterrupt

    monkeypatch.setattr("metareason.backend.json.dump", boom)
    with pytest.raises(KeyboardInterrupt):
        cache.complete(req())
    assert list(tmp_path.rglob("*.json")) == []
    assert list(tmp_path.rglob(".tmp-*")) == []


@given(st.lists(st.text(min_size=1, max_size=8), min_size=1, max_size=10))
def test_memoization_law_property(tmp_path_factory, texts):
    d = tmp_path_factory.mktemp("cache")
    rec = CachedBackend(d, CountingBackend(), "record")
    recorded = [rec.complete(req(t)).text for t in texts]
    rep = CachedBackend(d, None, "replay")
    assert [rep.complete(req(t)).text for t in texts] == recorded


# -- HTTP ---------------------------------------------------------------------

def ok_body(text="hi"):
    return {"choices": [{"message": {"role": "assistant", "content": text},
                         "finish_reason": "stop"}],
            "usage": {"prompt_tokens": 3, "completion_tokens": 1}}


def http_backend(handler, **kw):
    client = httpx.Client(transport=httpx.MockTransport(handler))
    sleeps = []
    settings = HttpSettings(endpoint="https://example.test/v1/chat/completions", **kw)
    return HttpBackend(settings, client=client, sleep=sleeps.append), sleeps


def test_http_success(monkeypatch):
    monkeypatch.setenv("MRP_API_KEY", "secret")
    seen = {}

    def handler(request):
        seen["auth"] = request.headers["authorization"]
        seen["body"] = json.loads(request.content)
        return httpx.Response(200, json=ok_body("hello"))

    backend, _ = http_backend(handler)
    c = backend.complete(req("x", temperature=0.3, max_tokens=9))
    assert c.text == "hello" and c.prompt_tokens == 3
    assert seen["auth"] == "Bearer secret"
    assert seen["body"] == {"model": "m", "messages": [{"role": "user", "content": "x"}],
                            "temperature": 0.3, "max_tokens": 9}


def test_http_azure_style_header(monkeypatch):
    monkeypatch.setenv("AZ_KEY", "k")
    seen = {}

    def handler(request):
        seen.update(request.headers)
        return httpx.Response(200, json=ok_body())

    backend, _ = http_backend(handler, api_key_env="AZ_KEY", auth_header="api-key")
    backend.complete(req())
    assert seen["api-key"] == "k"
    assert "authorization" not in seen


def test_http_401_not_retried():
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(401, text="bad key")

    backend, sleeps = http_backend(handler)
    with pytest.raises(ApiError) as info:
        backend.complete(req())
    assert info.value.status == 401 and "bad key" in info.value.body
    assert len(calls) == 1 and sleeps == []


def test_http_retries_transient_then_succeeds():
    statuses = iter([429, 503])

    def handler(request):
        status = next(statuses, 200)
        return httpx.Response(status, json=ok_body() if status == 200 else {})

    backend, sleeps = http_backend(handler)
    assert backend.complete(req()).text == "hi"
    assert len(sleeps) == 2
    assert 0.8 <= sleeps[0] <= 1.2 and 1.6 <= sleeps[1] <= 2.4


def test_http_gives_up_after_backoff():
    def handler(request):
        raise httpx.ConnectTimeout("slow")

    backend, sleeps = http_backend(handler)
    with pytest.raises(TransportError):
        backend.complete(req())
    assert len(sleeps) == 3
    assert 3.2 <= sleeps[2] <= 4.8


def test_http_in_flight_limit():
    lock = threading.Lock()
    state = {"now": 0, "peak": 0}

    def handler(request):
        with lock:
            state["now"] += 1
            state["peak"] = max(state["peak"], state["now"])
        time.sleep(0.01)
        with lock:
            state["now"] -= 1
        return httpx.Response(200, json=ok_body())

    backend, _ = http_backend(handler, max_in_flight=3)
    threads = [threading.Thread(target=backend.complete, args=(req(str(i)),)) for i in range(20)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert 1 <= state["peak"] <= 3
