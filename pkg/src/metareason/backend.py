"""Completion backends.

Every backend exposes ``complete(request) -> Completion``. Three are provided:

* :class:`HttpBackend` posts chat-completions JSON to a configurable endpoint.
* :class:`ScriptedBackend` replays a fixed queue of replies per purpose tag.
* :class:`CachedBackend` wraps another backend with a content-addressed
  record/replay cache on disk.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import tempfile
import threading
import time
from collections import deque
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from decimal import Decimal
from pathlib import Path
from typing import Callable, Iterable, Protocol

import httpx

from .errors import (
    ApiError,
    CacheIoError,
    ReplayMiss,
    ScriptExhausted,
    TransportError,
)

logger = logging.getLogger(__name__)

ROLES = ("system", "user", "assistant")
PURPOSES = ("scoring", "execution", "judge")


@dataclass(frozen=True)
class Message:
    role: str
    content: str


@dataclass(frozen=True)
class CompletionRequest:
    model: str
    messages: tuple[Message, ...]
    temperature: float = 0.0
    max_tokens: int = 1024
    purpose_tag: str = "execution"

    def __post_init__(self) -> None:
        msgs = tuple(m if isinstance(m, Message) else Message(*m) for m in self.messages)
        object.__setattr__(self, "messages", msgs)
        if not msgs:
            raise ValueError("request needs at least one message")
        for m in msgs:
            if m.role not in ROLES:
                raise ValueError(f"unknown role {m.role!r}")
        if not 0 <= self.temperature <= 2:
            raise ValueError(f"temperature {self.temperature} outside [0, 2]")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")
        if self.purpose_tag not in PURPOSES:
            raise ValueError(f"unknown purpose tag {self.purpose_tag!r}")

    @classmethod
    def user(cls, text: str, **kwargs) -> CompletionRequest:
        return cls(messages=(Message("user", text),), **kwargs)

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "messages": [asdict(m) for m in self.messages],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "purpose_tag": self.purpose_tag,
        }

    @classmethod
    def from_dict(cls, data: dict) -> CompletionRequest:
        return cls(
            model=data["model"],
            messages=tuple(Message(m["role"], m["content"]) for m in data["messages"]),
            temperature=data["temperature"],
            max_tokens=data["max_tokens"],
            purpose_tag=data["purpose_tag"],
        )


@dataclass(frozen=True)
class Completion:
    text: str
    finish_reason: str = "stop"
    prompt_tokens: int = 0
    completion_tokens: int = 0
    from_cache: bool = False

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "finish_reason": self.finish_reason,
            "usage": {
                "prompt_tokens": self.prompt_tokens,
                "completion_tokens": self.completion_tokens,
            },
            "from_cache": self.from_cache,
        }

    @classmethod
    def from_dict(cls, data: dict) -> Completion:
        usage = data.get("usage") or {}
        return cls(
            text=data["text"],
            finish_reason=data.get("finish_reason", "stop"),
            prompt_tokens=usage.get("prompt_tokens", 0),
            completion_tokens=usage.get("completion_tokens", 0),
            from_cache=data.get("from_cache", False),
        )


class Backend(Protocol):
    def complete(self, req: CompletionRequest) -> Completion: ...


def complete(backend: Backend, req: CompletionRequest) -> Completion:
    return backend.complete(req)


# -- cache keys -------------------------------------------------------------

def _normalize_newlines(text: str) -> str:
    return text.replace("\r\n", "\n").replace("\r", "\n")


def _decimal_str(x: float) -> str:
    d = Decimal(str(x)).normalize()
    return format(d, "f")


def canonical_request(req: CompletionRequest) -> str:
    """Serialization that every reply-affecting field feeds; purpose excluded."""
    payload = [
        ["model", req.model],
        ["messages", [[m.role, _normalize_newlines(m.content)] for m in req.messages]],
        ["temperature", _decimal_str(req.temperature)],
        ["max_tokens", req.max_tokens],
    ]
    return json.dumps(payload, ensure_ascii=False, separators=(",", ":"))


def cache_key(req: CompletionRequest) -> str:
    return hashlib.sha256(canonical_request(req).encode("utf-8")).hexdigest()


# -- scripted mock ----------------------------------------------------------

class ScriptedBackend:
    """Pops replies from one FIFO queue per purpose tag.

    ``calls`` records every request served, in order.
    """

    def __init__(self, script: Iterable[tuple[str, str] | dict] = ()):
        self._queues: dict[str, deque[str]] = {p: deque() for p in PURPOSES}
        self._lock = threading.Lock()
        self.calls: list[CompletionRequest] = []
        for item in script:
            if isinstance(item, dict):
                self.add(item["purpose"], item["text"])
            else:
                self.add(*item)

    @classmethod
    def from_file(cls, path: str | Path) -> ScriptedBackend:
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    def add(self, purpose: str, text: str) -> None:
        if purpose not in self._queues:
            raise ValueError(f"unknown purpose {purpose!r}")
        with self._lock:
            self._queues[purpose].append(text)

    def extend(self, purpose: str, texts: Iterable[str]) -> None:
        for t in texts:
            self.add(purpose, t)

    def remaining(self, purpose: str) -> int:
        return len(self._queues[purpose])

    def complete(self, req: CompletionRequest) -> Completion:
        with self._lock:
            queue = self._queues[req.purpose_tag]
            if not queue:
                raise ScriptExhausted(f"no scripted reply left for purpose {req.purpose_tag!r}")
            text = queue.popleft()
            self.calls.append(req)
        return Completion(text=text)


# -- live HTTP --------------------------------------------------------------

RETRYABLE_STATUS = frozenset({408, 429}) | frozenset(range(500, 600))


@dataclass
class HttpSettings:
    endpoint: str
    api_key_env: str = "MRP_API_KEY"
    # header carrying the key; "Authorization" gets a Bearer prefix
    auth_header: str = "Authorization"
    headers: dict[str, str] = field(default_factory=dict)
    timeout: float = 120.0
    max_in_flight: int = 4
    backoff: tuple[float, ...] = (1.0, 2.0, 4.0)
    jitter: float = 0.2


class HttpBackend:
    """Chat-completions client with bounded retries and an in-flight cap."""

    def __init__(
        self,
        settings: HttpSettings,
        client: httpx.Client | None = None,
        sleep: Callable[[float], None] = time.sleep,
        rng: random.Random | None = None,
    ):
        self.settings = settings
        self._client = client or httpx.Client(timeout=settings.timeout)
        self._sleep = sleep
        self._rng = rng or random.Random()
        self._slots = threading.BoundedSemaphore(settings.max_in_flight)

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json", **self.settings.headers}
        key = os.environ.get(self.settings.api_key_env, "")
        if key:
            if self.settings.auth_header.lower() == "authorization":
                headers["Authorization"] = f"Bearer {key}"
            else:
                headers[self.settings.auth_header] = key
        return headers

    def _post(self, body: dict) -> httpx.Response:
        with self._slots:
            return self._client.post(self.settings.endpoint, json=body, headers=self._headers())

    def complete(self, req: CompletionRequest) -> Completion:
        body = {
            "model": req.model,
            "messages": [asdict(m) for m in req.messages],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }
        delays = list(self.settings.backoff)
        while True:
            try:
                resp = self._post(body)
            except httpx.TransportError as exc:
                failure = f"{type(exc).__name__}: {exc}"
            else:
                if resp.status_code < 400:
                    return parse_chat_response(resp.json())
                if resp.status_code not in RETRYABLE_STATUS:
                    raise ApiError(resp.status_code, resp.text)
                failure = f"HTTP {resp.status_code}"
            if not delays:
                raise TransportError(f"giving up after retries: {failure}")
            delay = delays.pop(0)
            delay *= 1 + self._rng.uniform(-self.settings.jitter, self.settings.jitter)
            logger.warning("transient failure (%s); retrying in %.2fs", failure, delay)
            self._sleep(delay)

    def close(self) -> None:
        self._client.close()


def parse_chat_response(data: dict) -> Completion:
    try:
        choice = data["choices"][0]
        text = choice["message"].get("content") or ""
        finish = choice.get("finish_reason") or "stop"
    except (KeyError, IndexError, TypeError) as exc:
        raise ApiError(200, f"unexpected response shape: {json.dumps(data)[:500]}") from exc
    usage = data.get("usage") or {}
    return Completion(
        text=text,
        finish_reason=finish,
        prompt_tokens=usage.get("prompt_tokens", 0),
        completion_tokens=usage.get("completion_tokens", 0),
    )


# -- record / replay cache --------------------------------------------------

@dataclass(frozen=True)
class CacheRecord:
    key: str
    request: CompletionRequest
    response: Completion
    created_at: str

    def to_dict(self) -> dict:
        return {
            "key": self.key,
            "request": self.request.to_dict(),
            "response": self.response.to_dict(),
            "created_at": self.created_at,
        }

    @classmethod
    def from_dict(cls, data: dict) -> CacheRecord:
        return cls(
            key=data["key"],
            request=CompletionRequest.from_dict(data["request"]),
            response=Completion.from_dict(data["response"]),
            created_at=data["created_at"],
        )


CACHE_MODES = ("record", "replay", "off")


class CachedBackend:
    """Record/replay wrapper.

    ``record``: misses go to ``inner`` and are persisted; hits are served
    from disk. ``replay``: misses raise :class:`ReplayMiss` and ``inner`` is
    never touched (it may be ``None``).
    """

    def __init__(self, cache_dir: str | Path, inner: Backend | None, mode: str = "record"):
        if mode not in ("record", "replay"):
            raise ValueError(f"cache mode must be record or replay, got {mode!r}")
        if mode == "record" and inner is None:
            raise ValueError("record mode needs an inner backend")
        self.cache_dir = Path(cache_dir)
        self.inner = inner
        self.mode = mode
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()
        self.hits = 0
        self.misses = 0

    def path_for(self, key: str) -> Path:
        return self.cache_dir / key[:2] / f"{key}.json"

    def _lock_for(self, key: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(key, threading.Lock())

    def _load(self, path: Path) -> CacheRecord:
        try:
            return CacheRecord.from_dict(json.loads(path.read_text(encoding="utf-8")))
        except (OSError, ValueError, KeyError) as exc:
            raise CacheIoError(f"unreadable cache record {path}: {exc}") from exc

    def _store(self, record: CacheRecord) -> None:
        path = self.path_for(record.key)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=".json")
            try:
                with os.fdopen(fd, "w", encoding="utf-8") as fh:
                    json.dump(record.to_dict(), fh, ensure_ascii=False, indent=1, sort_keys=True)
                os.replace(tmp, path)
            except BaseException:
                Path(tmp).unlink(missing_ok=True)
                raise
        except OSError as exc:
            raise CacheIoError(f"cannot write cache record {path}: {exc}") from exc

    def complete(self, req: CompletionRequest) -> Completion:
        key = cache_key(req)
        path = self.path_for(key)
        with self._lock_for(key):
            if path.is_file():
                self.hits += 1
                return replace(self._load(path).response, from_cache=True)
            if self.mode == "replay":
                raise ReplayMiss(f"no cached completion for key {key}")
            self.misses += 1
            response = replace(self.inner.complete(req), from_cache=False)
            created = datetime.now(timezone.utc).isoformat(timespec="seconds")
            self._store(CacheRecord(key, req, response, created))
            return response


def cached_complete(cache_dir: str | Path, inner_backend: Backend | None, req: CompletionRequest,
                    mode: str = "record") -> Completion:
    return CachedBackend(cache_dir, inner_backend, mode).complete(req)
