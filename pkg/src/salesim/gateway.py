"""Chat-completion gateway: a single contract for every model call.

All provider traffic in the package flows through :class:`Gateway`. Scripted
providers (keyed lookup or ordinal playback) make every downstream module
testable without network access; an OpenAI-compatible HTTP provider covers
live runs. The gateway keeps an append-only call log, retries transient
failures with exponential backoff, and surfaces a truncation flag that the
seller's regeneration stage depends on.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import os
import threading
import time
from dataclasses import dataclass
from typing import Callable, Iterable, Protocol, Sequence

from .errors import (
    DuplicateKey,
    EmptyCompletion,
    ProviderRefusal,
    ProviderUnreachable,
)

ROLES = ("system", "user", "assistant")


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {self.role!r}")
        if not self.content:
            raise ValueError("message content must be non-empty")


@dataclass(frozen=True)
class CompletionRequest:
    messages: tuple[ChatMessage, ...]
    max_tokens: int = 512
    temperature: float = 0.0
    stop_sequences: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("request must contain at least one message")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")


def user_request(text: str, **kwargs) -> CompletionRequest:
    """Single user-message request; the common shape for template prompts."""
    return CompletionRequest(messages=(ChatMessage("user", text),), **kwargs)


@dataclass(frozen=True)
class ProviderBinding:
    """Opaque handle resolving to a registered provider.

    ``endpoint`` is "scripted" for test providers, otherwise a URI. Model
    identity stays an opaque string; the gateway never interprets it.
    """

    provider_id: str
    endpoint: str = "scripted"
    timeout: float = 30.0
    max_retries: int = 2
    model: str = ""

    def __post_init__(self) -> None:
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


@dataclass(frozen=True)
class CallRecord:
    """One gateway attempt. Retried attempts get their own records."""

    timestamp: float
    provider_id: str
    request_digest: str
    response_digest: str
    status: str  # "success" | "failure" | "truncated"
    response: str = ""
    truncated: bool = False
    tag: str | None = None
    attempt: int = 0
    error: str | None = None


def script_key(messages: Sequence[ChatMessage]) -> str:
    """Stable digest of a message sequence; the keyed-script match key."""
    payload = json.dumps([[m.role, m.content] for m in messages], sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


class _Transient(Exception):
    """Internal: provider failure worth retrying."""


@dataclass(frozen=True)
class ProviderReply:
    text: str
    truncated: bool = False


class Provider(Protocol):
    def complete(self, request: CompletionRequest) -> ProviderReply: ...


def _truncate_whitespace(text: str, max_tokens: int) -> ProviderReply:
    # Whitespace tokenization is the testable truncation signal for scripted
    # providers; real providers report their own flag.
    tokens = text.split()
    if len(tokens) > max_tokens:
        return ProviderReply(" ".join(tokens[:max_tokens]), truncated=True)
    return ProviderReply(text, truncated=False)


class KeyedScriptProvider:
    """Answers by exact hash of the request's messages."""

    def __init__(self, scenario: Iterable[tuple[str, str]]):
        self._responses: dict[str, str] = {}
        for key, response in scenario:
            if key in self._responses:
                raise DuplicateKey(f"duplicate script key {key!r}")
            self._responses[key] = response

    def complete(self, request: CompletionRequest) -> ProviderReply:
        key = script_key(request.messages)
        if key not in self._responses:
            raise _Transient(f"no script entry for request key {key[:12]}")
        return _truncate_whitespace(self._responses[key], request.max_tokens)


class OrdinalScriptProvider:
    """Plays canned responses back in registration order.

    Multi-step pipelines issue several calls per turn, so playback order is
    the natural way to script an end-to-end conversation. Exhaustion raises
    as unreachable. Playback position is serialized.
    """

    def __init__(self, responses: Sequence[str]):
        self._responses = list(responses)
        self._pos = 0
        self._lock = threading.Lock()

    def complete(self, request: CompletionRequest) -> ProviderReply:
        with self._lock:
            if self._pos >= len(self._responses):
                raise _Transient("ordinal script exhausted")
            text = self._responses[self._pos]
            self._pos += 1
        return _truncate_whitespace(text, request.max_tokens)


class HttpChatProvider:
    """OpenAI-compatible chat-completions endpoint."""

    def __init__(self, endpoint: str, model: str, api_key: str | None = None,
                 timeout: float = 30.0):
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.timeout = timeout

    def complete(self, request: CompletionRequest) -> ProviderReply:
        import httpx

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {
            "model": self.model,
            "messages": [{"role": m.role, "content": m.content}
                         for m in request.messages],
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
        }
        if request.stop_sequences:
            body["stop"] = list(request.stop_sequences)
        try:
            resp = httpx.post(f"{self.endpoint}/chat/completions",
                              json=body, headers=headers, timeout=self.timeout)
        except httpx.HTTPError as exc:
            raise _Transient(str(exc)) from exc
        if resp.status_code >= 500:
            raise _Transient(f"server error {resp.status_code}")
        if resp.status_code >= 400:
            raise ProviderRefusal(f"{resp.status_code}: {resp.text[:200]}")
        try:
            choice = resp.json()["choices"][0]
            text = choice["message"]["content"]
            truncated = choice.get("finish_reason") == "length"
        except (KeyError, IndexError, ValueError) as exc:
            raise ProviderRefusal(f"malformed provider response: {exc}") from exc
        return ProviderReply(text or "", truncated=truncated)


class Gateway:
    """Registry of providers plus the shared, append-only call log.

    Shareable across conversations; concurrent complete() calls are fine.
    The log gets one entry per attempt (including retries), each tagged
    success / failure / truncated.
    """

    def __init__(self, *, backoff_base: float = 0.5,
                 sleep: Callable[[float], None] = time.sleep):
        self._providers: dict[str, Provider] = {}
        self._log: list[CallRecord] = []
        self._lock = threading.Lock()
        self._counter = itertools.count(1)
        self._backoff_base = backoff_base
        self._sleep = sleep

    # -- provider registration ------------------------------------------

    def register_provider(self, provider_id: str, provider: Provider,
                          **binding_kwargs) -> ProviderBinding:
        with self._lock:
            self._providers[provider_id] = provider
        endpoint = binding_kwargs.pop("endpoint", "scripted")
        return ProviderBinding(provider_id=provider_id, endpoint=endpoint,
                               **binding_kwargs)

    def register_script(self, scenario: Sequence[tuple[str, str]],
                        *, max_retries: int = 0) -> ProviderBinding:
        """Keyed scripted provider: (match-key, canned-response) pairs."""
        provider = KeyedScriptProvider(scenario)
        pid = f"script-{next(self._counter)}"
        return self.register_provider(pid, provider, max_retries=max_retries)

    def register_ordinal_script(self, responses: Sequence[str],
                                *, max_retries: int = 0) -> ProviderBinding:
        """Ordinal playback provider answering calls in sequence."""
        provider = OrdinalScriptProvider(responses)
        pid = f"ordinal-{next(self._counter)}"
        return self.register_provider(pid, provider, max_retries=max_retries)

    @classmethod
    def from_env(cls, env: dict | None = None) -> tuple["Gateway", ProviderBinding]:
        """Gateway plus binding configured from SALESIM_LLM_* variables."""
        env = dict(os.environ if env is None else env)
        endpoint = env.get("SALESIM_LLM_ENDPOINT", "")
        if not endpoint:
            raise ProviderUnreachable("SALESIM_LLM_ENDPOINT is not configured")
        model = env.get("SALESIM_LLM_MODEL", "default")
        timeout = float(env.get("SALESIM_LLM_TIMEOUT", "30"))
        retries = int(env.get("SALESIM_LLM_MAX_RETRIES", "2"))
        gateway = cls()
        provider = HttpChatProvider(endpoint, model,
                                    api_key=env.get("SALESIM_LLM_API_KEY"),
                                    timeout=timeout)
        binding = gateway.register_provider(
            "live", provider, endpoint=endpoint,
            timeout=timeout, max_retries=retries, model=model)
        return gateway, binding

    # -- calling ----------------------------------------------------------

    def call(self, binding: ProviderBinding, request: CompletionRequest,
             *, tag: str | None = None) -> CallRecord:
        """Complete a request and return the full call record."""
        provider = self._providers.get(binding.provider_id)
        if provider is None:
            raise ProviderUnreachable(
                f"no provider registered for {binding.provider_id!r}")
        req_digest = script_key(request.messages)[:16]
        attempts = binding.max_retries + 1
        for attempt in range(attempts):
            try:
                reply = provider.complete(request)
            except _Transient as exc:
                self._append(CallRecord(
                    timestamp=time.time(), provider_id=binding.provider_id,
                    request_digest=req_digest, response_digest="",
                    status="failure", tag=tag, attempt=attempt, error=str(exc)))
                if attempt + 1 >= attempts:
                    raise ProviderUnreachable(str(exc)) from exc
                self._sleep(self._backoff_base * (2 ** attempt))
                continue
            except ProviderRefusal as exc:
                self._append(CallRecord(
                    timestamp=time.time(), provider_id=binding.provider_id,
                    request_digest=req_digest, response_digest="",
                    status="failure", tag=tag, attempt=attempt, error=str(exc)))
                raise
            if not reply.text.strip():
                self._append(CallRecord(
                    timestamp=time.time(), provider_id=binding.provider_id,
                    request_digest=req_digest, response_digest="",
                    status="failure", tag=tag, attempt=attempt,
                    error="empty completion"))
                raise EmptyCompletion("provider returned a blank response")
            record = CallRecord(
                timestamp=time.time(), provider_id=binding.provider_id,
                request_digest=req_digest,
                response_digest=_digest(reply.text),
                status="truncated" if reply.truncated else "success",
                response=reply.text, truncated=reply.truncated,
                tag=tag, attempt=attempt)
            self._append(record)
            return record
        raise ProviderUnreachable("unreachable")  # pragma: no cover

    def complete(self, binding: ProviderBinding, request: CompletionRequest,
                 *, tag: str | None = None) -> str:
        return self.call(binding, request, tag=tag).response

    # -- log --------------------------------------------------------------

    def _append(self, record: CallRecord) -> None:
        with self._lock:
            self._log.append(record)

    @property
    def calls(self) -> tuple[CallRecord, ...]:
        with self._lock:
            return tuple(self._log)

    def export_log_jsonl(self) -> str:
        """One JSON object per call: timestamp, digests, status."""
        lines = []
        for rec in self.calls:
            lines.append(json.dumps({
                "timestamp": rec.timestamp,
                "request_digest": rec.request_digest,
                "response_digest": rec.response_digest,
                "status": rec.status,
            }, sort_keys=True))
        return "\n".join(lines)


@dataclass(frozen=True)
class BoundClient:
    """A gateway pinned to one binding; what actor modules pass around."""

    gateway: Gateway
    binding: ProviderBinding

    def call(self, request: CompletionRequest, *, tag: str | None = None) -> CallRecord:
        return self.gateway.call(self.binding, request, tag=tag)

    def complete(self, request: CompletionRequest, *, tag: str | None = None) -> str:
        return self.gateway.complete(self.binding, request, tag=tag)
