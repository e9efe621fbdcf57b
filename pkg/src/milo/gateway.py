"""Uniform completion interface over interchangeable model backends.

Two backends ship with the package: a remote chat-completion HTTP endpoint and
a scripted fixture backend keyed by prompt digest, so every pipeline test can
run hermetically. The gateway owns the retry policy (exponential backoff on
timeouts and rate limits) and bounds in-flight parallelism with a semaphore.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import httpx

from milo.errors import MiloError

ENV_ENDPOINT = "MILO_LLM_ENDPOINT"
ENV_API_KEY = "MILO_LLM_API_KEY"
ENV_TIMEOUT_S = "MILO_LLM_TIMEOUT_S"


class GatewayError(MiloError):
    pass


class Timeout(GatewayError):
    pass


class BackendUnavailable(GatewayError):
    pass


class RateLimited(GatewayError):
    def __init__(self, message: str = "rate limited", retry_after: float | None = None):
        super().__init__(message)
        self.retry_after = retry_after


def prompt_digest(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


def default_timeout_s() -> float:
    return float(os.environ.get(ENV_TIMEOUT_S, "30"))


@dataclass(frozen=True)
class CompletionRequest:
    prompt: str
    max_output_tokens: int = 512
    temperature: float = 0.0
    backend_id: str = "default"
    timeout: float | None = None  # None: MILO_LLM_TIMEOUT_S, else 30s
    idempotency_key: str = ""

    def __post_init__(self):
        if self.timeout is None:
            object.__setattr__(self, "timeout", default_timeout_s())
        if self.max_output_tokens < 1:
            raise GatewayError("max_output_tokens must be >= 1")
        if self.timeout <= 0:
            raise GatewayError("timeout must be > 0")
        if self.temperature < 0:
            raise GatewayError("temperature must be >= 0")
        if not self.idempotency_key:
            digest = hashlib.sha256(
                "\x00".join(
                    [self.backend_id, self.prompt, str(self.max_output_tokens), repr(self.temperature)]
                ).encode("utf-8")
            ).hexdigest()
            object.__setattr__(self, "idempotency_key", digest)


@dataclass(frozen=True)
class CompletionResult:
    text: str
    latency: float
    backend_id: str
    truncated: bool = False

    def __post_init__(self):
        if self.latency < 0:
            raise GatewayError("latency must be >= 0")


def whitespace_truncate(text: str, max_tokens: int) -> tuple[str, bool]:
    """Token-free truncation: tokens are whitespace-separated words."""
    tokens = text.split()
    if len(tokens) <= max_tokens:
        return text, False
    return " ".join(tokens[:max_tokens]), True


@dataclass
class FixtureEntry:
    reply: str
    delay_ms: int = 0
    fail: str | None = None  # "timeout" | "rate_limit"


class FixtureBackend:
    """Deterministic scripted backend.

    Replies resolve in order: exact prompt-digest entry, then programmatic
    rules (callables returning a reply or None), then the fallback reply.
    Tracks in-flight concurrency and total calls for test assertions.
    """

    def __init__(self, entries: dict | None = None, rules=None, fallback: str | None = None):
        self.entries: dict[str, FixtureEntry] = dict(entries or {})
        self.rules = list(rules or [])
        self.fallback = fallback
        self.call_count = 0
        self.in_flight = 0
        self.max_in_flight = 0
        self._lock = threading.Lock()

    def add(self, prompt: str, reply: str, delay_ms: int = 0, fail: str | None = None):
        self.entries[prompt_digest(prompt)] = FixtureEntry(reply, delay_ms, fail)

    def _resolve(self, prompt: str) -> FixtureEntry:
        entry = self.entries.get(prompt_digest(prompt))
        if entry is not None:
            return entry
        for rule in self.rules:
            reply = rule(prompt)
            if reply is not None:
                return FixtureEntry(reply)
        if self.fallback is not None:
            return FixtureEntry(self.fallback)
        raise BackendUnavailable("no fixture reply for prompt")

    def complete(self, request: CompletionRequest) -> tuple[str, bool]:
        with self._lock:
            self.call_count += 1
            self.in_flight += 1
            self.max_in_flight = max(self.max_in_flight, self.in_flight)
        try:
            entry = self._resolve(request.prompt)
            if entry.delay_ms:
                delay = entry.delay_ms / 1000.0
                if delay > request.timeout:
                    time.sleep(request.timeout)
                    raise Timeout(f"fixture delay {delay}s exceeded timeout {request.timeout}s")
                time.sleep(delay)
            if entry.fail == "timeout":
                raise Timeout("injected timeout")
            if entry.fail == "rate_limit":
                raise RateLimited("injected rate limit", retry_after=0.0)
            return whitespace_truncate(entry.reply, request.max_output_tokens)
        finally:
            with self._lock:
                self.in_flight -= 1


def load_fixture_backend(path, **kwargs) -> FixtureBackend:
    """Build a FixtureBackend from a fixtures.jsonl file."""
    backend = FixtureBackend(**kwargs)
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            raw = json.loads(line)
            backend.entries[raw["digest"]] = FixtureEntry(
                reply=raw.get("reply", ""),
                delay_ms=raw.get("delay_ms", 0),
                fail=raw.get("fail"),
            )
    return backend


class HttpBackend:
    """Chat-completion-style HTTP JSON backend (endpoint URL + bearer auth)."""

    def __init__(self, endpoint: str, api_key: str = "", model: str | None = None, transport=None):
        self.endpoint = endpoint
        self.api_key = api_key
        self.model = model
        self._client = httpx.Client(transport=transport)

    @classmethod
    def from_env(cls) -> HttpBackend:
        endpoint = os.environ.get(ENV_ENDPOINT)
        if not endpoint:
            raise BackendUnavailable(f"{ENV_ENDPOINT} is not set")
        return cls(endpoint, api_key=os.environ.get(ENV_API_KEY, ""))

    def complete(self, request: CompletionRequest) -> tuple[str, bool]:
        payload = {
            "messages": [{"role": "user", "content": request.prompt}],
            "max_tokens": request.max_output_tokens,
            "temperature": request.temperature,
        }
        if self.model:
            payload["model"] = self.model
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = self._client.post(
                self.endpoint, json=payload, headers=headers, timeout=request.timeout
            )
        except httpx.TimeoutException as exc:
            raise Timeout(str(exc)) from exc
        except httpx.HTTPError as exc:
            raise BackendUnavailable(str(exc)) from exc
        if resp.status_code == 429:
            retry_after = resp.headers.get("Retry-After")
            raise RateLimited(retry_after=float(retry_after) if retry_after else None)
        if resp.status_code >= 500:
            raise BackendUnavailable(f"backend returned {resp.status_code}")
        if resp.status_code >= 400:
            raise GatewayError(f"backend rejected request: {resp.status_code} {resp.text[:200]}")
        body = resp.json()
        choice = body["choices"][0]
        text = choice["message"]["content"]
        truncated = choice.get("finish_reason") == "length"
        return text, truncated


@dataclass
class RetryPolicy:
    max_retries: int = 2
    backoff_base: float = 0.5
    backoff_multiplier: float = 2.0


class Gateway:
    """Shared completion front-end: backend registry, retries, parallelism bound."""

    def __init__(self, max_parallel: int = 8, retry: RetryPolicy | None = None):
        if max_parallel < 1:
            raise GatewayError("max_parallel must be >= 1")
        self.max_parallel = max_parallel
        self.retry = retry or RetryPolicy()
        self._backends: dict[str, object] = {}
        self._slots = threading.Semaphore(max_parallel)

    def register(self, backend_id: str, backend) -> None:
        self._backends[backend_id] = backend

    def backend(self, backend_id: str):
        try:
            return self._backends[backend_id]
        except KeyError:
            raise BackendUnavailable(f"no backend registered as {backend_id!r}") from None

    def complete(self, request: CompletionRequest) -> CompletionResult:
        backend = self.backend(request.backend_id)
        attempts = self.retry.max_retries + 1
        delay = self.retry.backoff_base
        for attempt in range(attempts):
            started = time.perf_counter()
            try:
                with self._slots:
                    text, truncated = backend.complete(request)
                return CompletionResult(
                    text=text,
                    latency=time.perf_counter() - started,
                    backend_id=request.backend_id,
                    truncated=truncated,
                )
            except (Timeout, RateLimited) as exc:
                if attempt == attempts - 1:
                    raise
                wait = delay
                if isinstance(exc, RateLimited) and exc.retry_after is not None:
                    wait = max(wait, exc.retry_after)
                time.sleep(wait)
                delay *= self.retry.backoff_multiplier
        raise AssertionError("unreachable")

    def complete_batch(self, requests, max_parallel: int = 4) -> list:
        """Positionally aligned results; per-request GatewayErrors in place."""
        if max_parallel < 1:
            raise GatewayError("max_parallel must be >= 1")
        requests = list(requests)
        if not requests:
            return []

        def run(req: CompletionRequest):
            try:
                return self.complete(req)
            except GatewayError as exc:
                return exc

        with ThreadPoolExecutor(max_workers=min(max_parallel, len(requests))) as pool:
            return list(pool.map(run, requests))


def gateway_from_env(fixtures_path=None, max_parallel: int = 8) -> Gateway:
    """Default-backend gateway: fixture file if given, else the env endpoint."""
    gw = Gateway(max_parallel=max_parallel)
    if fixtures_path is not None:
        gw.register("default", load_fixture_backend(fixtures_path))
    else:
        gw.register("default", HttpBackend.from_env())
    return gw
