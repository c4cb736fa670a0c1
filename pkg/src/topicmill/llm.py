"""Provider-agnostic LLM completion with retries, caching, and call counting.

The disk cache is content-addressed by a hash of the full request, so repeated
experiments over the same corpus are nearly free. The CallLedger tracks, per
call-site label, how many completions were requested, how many hit the cache,
and how many provider attempts were made; every efficiency claim in this
package is asserted against it.

The MockProvider replays canned responses from a script file (regex over the
rendered prompt), which makes full pipeline runs bit-for-bit reproducible
offline.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import requests


class LlmError(Exception):
    pass


class TransportError(LlmError):
    """Provider unreachable or returned an error status, after all retries."""


class EmptyCompletionError(LlmError):
    """Provider succeeded but returned empty content."""


@dataclass(frozen=True)
class LlmRequest:
    model: str
    user: str
    system: Optional[str] = None
    temperature: float = 0.0
    max_tokens: int = 1024

    def __post_init__(self) -> None:
        if not self.user:
            raise ValueError("request user prompt must be nonempty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass
class LlmResponse:
    text: str
    cached: bool
    latency_ms: int


def cache_key(req: LlmRequest) -> str:
    """Stable sha256 over every request field; any field change changes the key."""
    payload = json.dumps(
        {
            "model": req.model,
            "system": req.system,
            "user": req.user,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        },
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class CallLedger:
    """Thread-safe per-site counters. provider_calls + cache_hits == total."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._sites: dict[str, dict[str, int]] = {}

    def _site(self, site: str) -> dict[str, int]:
        return self._sites.setdefault(
            site, {"total": 0, "provider_calls": 0, "provider_attempts": 0, "cache_hits": 0}
        )

    def record_cache_hit(self, site: str) -> None:
        with self._lock:
            s = self._site(site)
            s["total"] += 1
            s["cache_hits"] += 1

    def record_provider_call(self, site: str, attempts: int) -> None:
        with self._lock:
            s = self._site(site)
            s["total"] += 1
            s["provider_calls"] += 1
            s["provider_attempts"] += attempts

    def count(self, site: str, counter: str = "total") -> int:
        with self._lock:
            return self._sites.get(site, {}).get(counter, 0)

    def total(self, counter: str = "total") -> int:
        with self._lock:
            return sum(s.get(counter, 0) for s in self._sites.values())

    def snapshot(self) -> dict[str, dict[str, int]]:
        with self._lock:
            return {site: dict(counters) for site, counters in sorted(self._sites.items())}


class MockProvider:
    """Scripted stand-in: ordered regex-over-prompt rules -> canned responses.

    Script format (JSON list): each entry has an optional "match" (Python
    regex, searched over the user prompt; omit for a fallthrough), a
    "response" string, and an optional "fail_times" count making the entry
    raise a transport error the first N times it is selected. "expand": true
    applies regex backreference expansion to the response.
    """

    name = "mock"

    def __init__(self, entries: list[dict]):
        self._lock = threading.Lock()
        self._entries = []
        for e in entries:
            self._entries.append(
                {
                    "pattern": re.compile(e["match"]) if e.get("match") else None,
                    "response": e.get("response", ""),
                    "fail_times": int(e.get("fail_times", 0)),
                    "expand": bool(e.get("expand", False)),
                }
            )

    @classmethod
    def from_script(cls, path: str | Path) -> "MockProvider":
        entries = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(entries, list):
            raise ValueError(f"mock script {path} must be a JSON list of entries")
        return cls(entries)

    def send(self, req: LlmRequest) -> str:
        for entry in self._entries:
            if entry["pattern"] is None:
                match = None
            else:
                match = entry["pattern"].search(req.user)
                if match is None:
                    continue
            with self._lock:
                if entry["fail_times"] > 0:
                    entry["fail_times"] -= 1
                    raise TransportError("mock provider scripted failure")
            if match is not None and entry["expand"]:
                return match.expand(entry["response"])
            return entry["response"]
        raise TransportError("mock script has no entry matching the prompt")


class HttpChatProvider:
    """Remote chat endpoint: POST messages, read choices[0].message.content."""

    name = "http"

    def __init__(self, url: str, auth_env: str = "LLM_API_TOKEN", timeout_s: float = 120.0,
                 session: requests.Session | None = None):
        if not url:
            raise ValueError("llm url must be configured for the http provider")
        self.url = url
        self.auth_env = auth_env
        self.timeout_s = timeout_s
        self._session = session or requests.Session()

    def send(self, req: LlmRequest) -> str:
        messages = []
        if req.system:
            messages.append({"role": "system", "content": req.system})
        messages.append({"role": "user", "content": req.user})
        headers = {}
        token = os.environ.get(self.auth_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        try:
            resp = self._session.post(
                self.url,
                json={
                    "model": req.model,
                    "messages": messages,
                    "temperature": req.temperature,
                    "max_tokens": req.max_tokens,
                },
                headers=headers,
                timeout=self.timeout_s,
            )
        except requests.RequestException as exc:
            raise TransportError(f"llm endpoint unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise TransportError(f"llm endpoint returned {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, ValueError) as exc:
            raise TransportError(f"malformed llm response: {exc}") from exc


@dataclass
class _TokenBucket:
    """Simple rate limiter: at most `rate` provider calls per second."""

    rate: float
    allowance: float = field(init=False)
    last: float = field(init=False)

    def __post_init__(self) -> None:
        self.allowance = self.rate
        self.last = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = time.monotonic()
                self.allowance = min(self.rate, self.allowance + (now - self.last) * self.rate)
                self.last = now
                if self.allowance >= 1.0:
                    self.allowance -= 1.0
                    return
                wait = (1.0 - self.allowance) / self.rate
            time.sleep(wait)


class LlmClient:
    """complete() with disk cache, bounded concurrency, retries, and ledger."""

    def __init__(
        self,
        provider,
        cache_dir: str | Path | None = None,
        retries: int = 3,
        backoff_s: float = 0.5,
        max_concurrency: int = 4,
        rate_per_s: float | None = None,
        ledger: CallLedger | None = None,
    ):
        self.provider = provider
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self.retries = retries
        self.backoff_s = backoff_s
        self.max_concurrency = max(1, max_concurrency)
        self.ledger = ledger if ledger is not None else CallLedger()
        self._sem = threading.Semaphore(self.max_concurrency)
        self._bucket = _TokenBucket(rate_per_s) if rate_per_s else None

    def _cache_path(self, key: str) -> Optional[Path]:
        if self.cache_dir is None:
            return None
        return self.cache_dir / key[:2] / f"{key}.json"

    def _cache_read(self, key: str) -> Optional[str]:
        path = self._cache_path(key)
        if path is None or not path.exists():
            return None
        try:
            return json.loads(path.read_text(encoding="utf-8"))["text"]
        except (ValueError, KeyError):
            return None  # corrupt entry behaves like a miss

    def _cache_write(self, key: str, req: LlmRequest, text: str) -> None:
        path = self._cache_path(key)
        if path is None:
            return
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(f".{path.name}.{os.getpid()}.{threading.get_ident()}.tmp")
        tmp.write_text(
            json.dumps({"key": key, "model": req.model, "text": text}, ensure_ascii=False),
            encoding="utf-8",
        )
        tmp.replace(path)  # atomic; concurrent writers of the same key are benign

    def complete(self, req: LlmRequest, site: str, bypass_cache: bool = False) -> LlmResponse:
        """Return the completion for `req`, from cache when possible.

        On a miss the provider is called with up to `retries` retries
        (exponential backoff); the response is cached and the ledger updated.
        Raises TransportError after retry exhaustion and EmptyCompletionError
        on empty provider content (never cached).
        """
        key = cache_key(req)
        if not bypass_cache:
            cached = self._cache_read(key)
            if cached is not None:
                self.ledger.record_cache_hit(site)
                return LlmResponse(text=cached, cached=True, latency_ms=0)

        start = time.monotonic()
        attempts = 0
        last_exc: Exception | None = None
        with self._sem:
            for attempt in range(self.retries + 1):
                if self._bucket is not None:
                    self._bucket.acquire()
                attempts += 1
                try:
                    text = self.provider.send(req)
                    break
                except TransportError as exc:
                    last_exc = exc
                    if attempt < self.retries:
                        time.sleep(self.backoff_s * (2**attempt))
            else:
                self.ledger.record_provider_call(site, attempts)
                raise TransportError(
                    f"provider failed after {attempts} attempts: {last_exc}"
                ) from last_exc

        self.ledger.record_provider_call(site, attempts)
        if not text:
            raise EmptyCompletionError("provider returned an empty completion")
        self._cache_write(key, req, text)
        latency = int((time.monotonic() - start) * 1000)
        return LlmResponse(text=text, cached=False, latency_ms=latency)
