"""Generation backends: a chat-completions HTTP client and a scripted rule agent."""
from __future__ import annotations

from .http import (
    DEFAULT_KEY_ENV,
    FAILURE_SENTINEL,
    BackendConfig,
    BackendConfigError,
    GenerationRequest,
    HttpBackend,
)
from .scripted import (
    ScriptedBackend,
    ScriptedRule,
    ScriptedRuleSet,
    adversarial_rules,
    default_rules,
    get_rule_set,
    scripted_generate,
)


def make_backend(config: BackendConfig, **kwargs):
    """Build a backend; configuration errors surface here, before any run starts."""
    if config.kind == "http":
        return HttpBackend(config, **kwargs)
    return ScriptedBackend(get_rule_set(config.rule_set))


def generate(backend, request: GenerationRequest) -> str:
    return backend.generate(request)


__all__ = [
    "DEFAULT_KEY_ENV", "FAILURE_SENTINEL", "BackendConfig", "BackendConfigError", "GenerationRequest",
    "HttpBackend", "ScriptedBackend", "ScriptedRule", "ScriptedRuleSet", "adversarial_rules",
    "default_rules", "get_rule_set", "scripted_generate", "make_backend", "generate",
]
