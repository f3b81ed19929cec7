"""Chat-completion providers for query condensation and answer generation.

The ``scripted`` provider is a pure lookup table keyed on substrings of the
last user message; it makes the whole pipeline deterministic and offline.
The ``remote`` provider speaks the common chat-completions JSON shape with
the same retry policy as the embeddings client.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field

import httpx

from .errors import EmptyResponse, InvalidParams, ProviderError

DEFAULT_API_KEY_ENV = "TELECOMRAG_LLM_API_KEY"
SCRIPT_MISS = "SCRIPT-MISS"

_BACKOFF_BASE_S = 0.5
_BACKOFF_FACTOR = 2.0
_RETRYABLE_STATUS = {429, 500, 502, 503, 504}


@dataclass(frozen=True)
class ChatMessage:
    role: str  # "system" | "user" | "assistant"
    content: str

    def __post_init__(self) -> None:
        if self.role not in ("system", "user", "assistant"):
            raise InvalidParams(f"unknown chat role: {self.role!r}")
        if not self.content:
            raise InvalidParams("chat message content must be non-empty")


@dataclass
class LlmConfig:
    kind: str = "scripted"  # "scripted" | "remote"
    base_url: str = ""
    model_name: str = "gpt-4-1106-preview"
    api_key_env: str = DEFAULT_API_KEY_ENV
    temperature: float = 0.0
    script: list[tuple[str, str]] = field(default_factory=list)
    timeout_s: float = 60.0
    max_retries: int = 3

    def __post_init__(self) -> None:
        if self.kind not in ("scripted", "remote"):
            raise InvalidParams(f"unknown llm kind: {self.kind!r}")
        if self.kind == "remote" and not self.base_url:
            raise InvalidParams("remote llm requires base_url")
        if not 0.0 <= self.temperature <= 2.0:
            raise InvalidParams("temperature must be in [0, 2]")


def _last_user_content(messages: list[ChatMessage]) -> str:
    for msg in reversed(messages):
        if msg.role == "user":
            return msg.content
    return ""


class ScriptedLlm:
    """Replays canned replies; counts calls so tests can observe the pipeline."""

    def __init__(self, cfg: LlmConfig):
        self.cfg = cfg
        self.kind = "scripted"
        self.call_count = 0

    def complete(self, messages: list[ChatMessage]) -> str:
        if not messages:
            raise InvalidParams("messages must be non-empty")
        self.call_count += 1
        last_user = _last_user_content(messages)
        for matcher, reply in self.cfg.script:
            if matcher in last_user:
                return reply
        return SCRIPT_MISS


class RemoteLlm:
    """Non-streaming chat-completions client with exponential-backoff retries."""

    def __init__(self, cfg: LlmConfig, transport: httpx.BaseTransport | None = None):
        self.cfg = cfg
        self.kind = "remote"
        self.call_count = 0
        headers = {}
        api_key = os.environ.get(cfg.api_key_env, "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self._client = httpx.Client(
            base_url=cfg.base_url,
            headers=headers,
            timeout=cfg.timeout_s,
            transport=transport,
        )

    def close(self) -> None:
        self._client.close()

    def complete(self, messages: list[ChatMessage]) -> str:
        if not messages:
            raise InvalidParams("messages must be non-empty")
        self.call_count += 1
        payload = {
            "model": self.cfg.model_name,
            "temperature": self.cfg.temperature,
            "messages": [{"role": m.role, "content": m.content} for m in messages],
        }
        body = self._post_with_retries(payload)
        try:
            content = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise EmptyResponse(f"malformed chat response: {exc}") from exc
        if not content:
            raise EmptyResponse("provider returned empty content")
        return content

    def _post_with_retries(self, payload: dict) -> dict:
        last_error: Exception | None = None
        for attempt in range(self.cfg.max_retries + 1):
            if attempt > 0:
                time.sleep(_BACKOFF_BASE_S * _BACKOFF_FACTOR ** (attempt - 1))
            try:
                resp = self._client.post("/chat/completions", json=payload)
            except httpx.TimeoutException as exc:
                last_error = exc
                continue
            except httpx.HTTPError as exc:
                raise ProviderError(f"chat request failed: {exc}") from exc
            if resp.status_code == 200:
                return resp.json()
            if resp.status_code in _RETRYABLE_STATUS:
                last_error = ProviderError(
                    f"chat endpoint returned {resp.status_code}",
                    status=resp.status_code,
                    body_excerpt=resp.text[:200],
                )
                continue
            raise ProviderError(
                f"chat endpoint returned {resp.status_code}",
                status=resp.status_code,
                body_excerpt=resp.text[:200],
            )
        if isinstance(last_error, ProviderError):
            raise last_error
        raise ProviderError(f"chat request failed after retries: {last_error}")


LlmClient = ScriptedLlm | RemoteLlm


def build_llm(cfg: LlmConfig, transport: httpx.BaseTransport | None = None) -> LlmClient:
    if cfg.kind == "scripted":
        return ScriptedLlm(cfg)
    return RemoteLlm(cfg, transport=transport)


def chat_complete(messages: list[ChatMessage], cfg: LlmConfig) -> str:
    """One completion using a transient client built from `cfg`."""
    return build_llm(cfg).complete(messages)
