from __future__ import annotations

import json

import httpx
import pytest

from lgt.agents import build_advisor_state, build_evaluator_state, parse_advisor_response
from lgt.backend import (
    FAILURE_SENTINEL,
    BackendConfig,
    BackendConfigError,
    GenerationRequest,
    HttpBackend,
    ScriptedBackend,
    ScriptedRule,
    ScriptedRuleSet,
    default_rules,
    get_rule_set,
    make_backend,
    scripted_generate,
)
from lgt.config_space import default_config
from lgt.trainer import EpochMetrics
from lgt.trainer.metrics import MetricSet

HTTP = BackendConfig(kind="http", endpoint_url="https://llm.example/v1", max_retries=2, retry_backoff_ms=10)
ENV = {"LGT_API_KEY": "secret"}


def _backend(handler, config=HTTP):
    sleeps: list[float] = []
    b = HttpBackend(config, transport=httpx.MockTransport(handler), sleep=sleeps.append, env=ENV)
    return b, sleeps


def _ok(content):
    return httpx.Response(200, json={"choices": [{"message": {"content": content}}]})


def test_http_success_sends_chat_body():
    seen = []

    def handler(request):
        seen.append(request)
        return _ok('{"success": true}')

    b, _ = _backend(handler)
    out = b.generate(GenerationRequest("sys", "user", agent="evaluator", context={"x": 1}))
    assert out == '{"success": true}'
    body = json.loads(seen[0].content)
    assert body["temperature"] == 0.2 and body["messages"][0] == {"role": "system", "content": "sys"}
    assert "context" not in body and "agent" not in body
    assert seen[0].url.path == "/v1/chat/completions"
    assert seen[0].headers["authorization"] == "Bearer secret"


def test_http_retries_server_errors_then_returns_sentinel():
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(500)

    b, sleeps = _backend(handler)
    assert b.generate(GenerationRequest("s", "u")) == FAILURE_SENTINEL
    assert len(calls) == 3
    assert sleeps == [pytest.approx(0.01), pytest.approx(0.02)]


def test_http_recovers_after_transient_failure():
    responses = iter([httpx.Response(429), _ok("fine")])
    b, sleeps = _backend(lambda r: next(responses))
    assert b.generate(GenerationRequest("s", "u")) == "fine" and len(sleeps) == 1


def test_http_client_error_is_not_retried():
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(401, text="bad key")

    b, _ = _backend(handler)
    assert b.generate(GenerationRequest("s", "u")) == FAILURE_SENTINEL and len(calls) == 1


def test_http_transport_error_and_malformed_body():
    def boom(request):
        raise httpx.ConnectError("refused")

    b, _ = _backend(boom)
    assert b.generate(GenerationRequest("s", "u")) == FAILURE_SENTINEL
    b, _ = _backend(lambda r: httpx.Response(200, json={"nope": 1}))
    assert b.generate(GenerationRequest("s", "u")) == FAILURE_SENTINEL


def test_missing_api_key_fails_before_any_request():
    with pytest.raises(BackendConfigError, match="LGT_API_KEY"):
        HttpBackend(HTTP, env={})


def test_backend_config_validation():
    with pytest.raises(BackendConfigError):
        BackendConfig(kind="http")
    with pytest.raises(BackendConfigError):
        BackendConfig(kind="carrier-pigeon")
    with pytest.raises(BackendConfigError):
        BackendConfig.from_dict({"kind": "scripted", "colour": "red"})
    assert BackendConfig.from_dict(HTTP.to_dict()) == HTTP


def test_make_backend_scripted_and_unknown_rule_set():
    assert isinstance(make_backend(BackendConfig()), ScriptedBackend)
    with pytest.raises(ValueError):
        get_rule_set("nope")


# ----------------------------------------------------------------------------
# scripted rules


def em(epoch, val_loss, train_loss=0.5, acc=0.8, train_acc=0.8, wn=1.0):
    return EpochMetrics(epoch, train_loss, val_loss, MetricSet(accuracy=acc, recall_per_class=(0.8, 0.8, 0.8)),
                        MetricSet(accuracy=train_acc), weight_norm=wn)


def _advise(history, space):
    state = build_advisor_state(history, default_config(space), space).to_dict()
    text = scripted_generate(default_rules(), "advisor", state)
    return parse_advisor_response(text, space)


def test_rule_set_requires_catch_all():
    with pytest.raises(ValueError):
        ScriptedRuleSet({"advisor": (ScriptedRule("x", lambda s: False, lambda s: {}),)})


def test_rising_val_loss_halves_learning_rate(cls_space):
    r = _advise([em(4, 0.5), em(5, 0.6), em(6, 0.7)], cls_space)
    (ch,) = r.delta.changes
    assert (ch.op, ch.field, ch.value) == ("scale_numeric", "learning_rate", 0.5)


def test_accuracy_gap_adds_noise_and_weight_decay(cls_space):
    r = _advise([em(5, 0.5, train_acc=0.99, acc=0.7)], cls_space)
    ops = {(c.op, c.field) for c in r.delta.changes}
    assert ("add_method", "noise") in ops and ("set_numeric", "weight_decay") in ops


def test_healthy_run_holds_configuration(cls_space):
    r = _advise([em(5, 0.5), em(6, 0.4), em(7, 0.3)], cls_space)
    assert r.parsed and r.delta.changes == ()


def test_evaluator_rule_compares_to_baseline(cls_space):
    c = default_config(cls_space)
    better = build_evaluator_state(em(3, 0.4), c, em(1, 0.9), c).to_dict()
    worse = build_evaluator_state(em(3, 1.0), c, em(1, 0.9), c).to_dict()
    assert '"success": true' in scripted_generate(default_rules(), "evaluator", better)
    assert '"success": false' in scripted_generate(default_rules(), "evaluator", worse)


def test_scripted_backend_is_deterministic(cls_space):
    state = build_advisor_state([em(4, 0.5), em(5, 0.6), em(6, 0.7)], default_config(cls_space), cls_space)
    req = GenerationRequest("s", "u", agent="advisor", context=state.to_dict())
    b = ScriptedBackend()
    assert b.generate(req) == b.generate(req) == ScriptedBackend().generate(req)
    with pytest.raises(ValueError):
        b.generate(GenerationRequest("s", "u", agent="advisor"))
