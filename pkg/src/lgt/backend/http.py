"""Backend configuration, requests and the chat-completions HTTP client."""
from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import httpx

log = logging.getLogger(__name__)

FAILURE_SENTINEL = "<<LGT-BACKEND-FAILURE>>"
DEFAULT_KEY_ENV = "LGT_API_KEY"
DEFAULT_TEMPERATURE = 0.2
DEFAULT_MAX_TOKENS = 1024


class BackendConfigError(ValueError):
    """Misconfigured backend; raised before a run starts."""


@dataclass(frozen=True)
class GenerationRequest:
    system_text: str
    user_text: str
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS
    model_name: str = "deepseek-chat"
    # structured agent state; read by the scripted backend, never sent on the wire
    agent: str = ""
    context: Mapping[str, Any] | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")

    def body(self) -> dict:
        return {
            "model": self.model_name,
            "messages": [
                {"role": "system", "content": self.system_text},
                {"role": "user", "content": self.user_text},
            ],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "scripted"  # http | scripted
    endpoint_url: str = ""
    api_key_env_name: str = DEFAULT_KEY_ENV
    model_name: str = "deepseek-chat"
    timeout_ms: int = 60_000
    max_retries: int = 2
    retry_backoff_ms: int = 500
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS
    rule_set: str = "default"

    def __post_init__(self):
        if self.kind not in ("http", "scripted"):
            raise BackendConfigError(f"unknown backend kind {self.kind!r}")
        if self.kind == "http" and not self.endpoint_url:
            raise BackendConfigError("http backend needs a non-empty endpoint_url")
        if self.timeout_ms < 1 or self.max_retries < 0 or self.retry_backoff_ms < 0:
            raise BackendConfigError("timeout_ms must be >= 1, retries and backoff >= 0")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "endpoint_url": self.endpoint_url,
            "api_key_env_name": self.api_key_env_name,
            "model_name": self.model_name,
            "timeout_ms": self.timeout_ms,
            "max_retries": self.max_retries,
            "retry_backoff_ms": self.retry_backoff_ms,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "rule_set": self.rule_set,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "BackendConfig":
        unknown = sorted(set(d) - set(cls.__dataclass_fields__))
        if unknown:
            raise BackendConfigError(f"unknown backend keys: {unknown}")
        return cls(**d)


class HttpBackend:
    """POST {endpoint}/chat/completions, read choices[0].message.content.

    Transport errors, 429 and 5xx are retried with exponential backoff; after
    ``max_retries`` retries the failure sentinel is returned instead of raising.
    """

    def __init__(self, config: BackendConfig, *, transport: httpx.BaseTransport | None = None,
                 sleep: Callable[[float], None] = time.sleep, env: Mapping[str, str] | None = None):
        if config.kind != "http":
            raise BackendConfigError("HttpBackend needs an http backend config")
        env = os.environ if env is None else env
        key = env.get(config.api_key_env_name, "")
        if not key:
            raise BackendConfigError(
                f"API key missing: set the {config.api_key_env_name} environment variable"
            )
        self.config = config
        self._sleep = sleep
        self._client = httpx.Client(
            base_url=config.endpoint_url.rstrip("/"),
            headers={"Authorization": f"Bearer {key}", "Content-Type": "application/json"},
            timeout=httpx.Timeout(config.timeout_ms / 1000.0),
            transport=transport,
        )
        self.attempts = 0

    def close(self) -> None:
        self._client.close()

    def generate(self, request: GenerationRequest) -> str:
        cfg = self.config
        for attempt in range(cfg.max_retries + 1):
            if attempt:
                self._sleep(cfg.retry_backoff_ms / 1000.0 * 2 ** (attempt - 1))
            self.attempts += 1
            try:
                resp = self._client.post("/chat/completions", json=request.body())
            except httpx.HTTPError as exc:
                log.warning("chat request failed (attempt %d): %s", attempt + 1, exc)
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                log.warning("chat request got HTTP %d (attempt %d)", resp.status_code, attempt + 1)
                continue
            if resp.status_code >= 400:
                log.error("chat request rejected with HTTP %d: %s", resp.status_code, resp.text[:200])
                return FAILURE_SENTINEL
            try:
                content = resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError):
                log.warning("malformed chat response (attempt %d)", attempt + 1)
                continue
            return content if isinstance(content, str) else FAILURE_SENTINEL
        return FAILURE_SENTINEL
