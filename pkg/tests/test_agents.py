from __future__ import annotations

import json

import jsonschema
import pytest

from lgt.agents import (
    DigestEntry,
    PromptDeltaResponse,
    NoteOp,
    PromptState,
    apply_prompt_delta,
    build_advisor_state,
    build_evaluator_state,
    build_optimizer_state,
    iter_json_objects,
    parse_advisor_response,
    parse_architect_response,
    parse_evaluator_response,
    parse_optimizer_response,
    render_messages,
    render_prompt,
    response_schema,
)
from lgt.agents.prompt import NOTE_CHAR_CAP
from lgt.config_space import ArchSpec, default_config
from lgt.trainer import EpochMetrics
from lgt.trainer.metrics import MetricSet


def em(epoch, val_loss=1.0, train_loss=1.0, acc=0.5, train_acc=None):
    return EpochMetrics(epoch, train_loss, val_loss, MetricSet(accuracy=acc),
                        MetricSet(accuracy=train_acc))


# ----------------------------------------------------------------------------
# state builders


def test_advisor_state_window(cls_space):
    c = default_config(cls_space)
    one = build_advisor_state([em(1)], c, cls_space)
    assert len(one.recent_metrics) == 1
    ten = build_advisor_state([em(t, val_loss=1.0 / t) for t in range(1, 11)], c, cls_space)
    assert [m.epoch for m in ten.recent_metrics] == [6, 7, 8, 9, 10]
    assert ten.current_metrics.epoch == 10 and ten.epochs_since_best == 0


def test_advisor_state_requires_history(cls_space):
    with pytest.raises(ValueError):
        build_advisor_state([], default_config(cls_space), cls_space)


def test_epochs_since_best(cls_space):
    s = build_advisor_state([em(1, 0.5), em(2, 0.7), em(3, 0.6)], default_config(cls_space), cls_space)
    assert s.best_val_loss == 0.5 and s.epochs_since_best == 2


def test_space_summary_shows_bounds(cls_space):
    s = build_advisor_state([em(1)], default_config(cls_space), cls_space).to_dict()
    text = json.dumps(s["space"])
    assert '"min": "0.0001"' in text and '"max": "0.1"' in text
    assert s["space"]["width"]["frozen"] is True


def test_optimizer_digest_must_be_ordered():
    d = [DigestEntry(1, "no_change", False, 1.0, 1.0), DigestEntry(1, "no_change", False, 1.0, 1.0)]
    with pytest.raises(ValueError):
        build_optimizer_state(d, em(1))


# ----------------------------------------------------------------------------
# rendering


def test_render_without_notes_is_base_plus_state(cls_space):
    p = PromptState.for_agent("advisor")
    state = build_advisor_state([em(1)], default_config(cls_space), cls_space)
    text = render_prompt(p, state)
    assert text.startswith(p.base_text + "\n\nCurrent state (JSON):\n")
    assert "Guidance notes" not in text
    assert render_prompt(p, state) == text


def test_render_keeps_note_order(cls_space):
    p = PromptState(PromptState.for_agent("advisor").base_text, ("first", "second", "third"))
    system, _ = render_messages(p, build_advisor_state([em(1)], default_config(cls_space), cls_space))
    assert system.index("1. first") < system.index("2. second") < system.index("3. third")


def test_render_elides_oldest_metrics_under_budget(cls_space):
    p = PromptState.for_agent("advisor")
    state = build_advisor_state([em(t) for t in range(1, 6)], default_config(cls_space), cls_space)
    full = render_prompt(p, state)
    short = render_prompt(p, state, budget=len(full) - 50)
    assert len(short) <= len(full) - 50
    assert "elided_recent_metrics" in short


# ----------------------------------------------------------------------------
# advisor parser


def test_parse_scale_learning_rate(cls_space):
    r = parse_advisor_response('{"scale_numeric": {"field": "learning_rate", "factor": 0.5}}', cls_space)
    assert r.parsed and len(r.delta.changes) == 1
    ch = r.delta.changes[0]
    assert (ch.op, ch.field, ch.value) == ("scale_numeric", "learning_rate", 0.5)


def test_parse_prose_without_json_is_no_change(cls_space):
    r = parse_advisor_response("I think you should lower the learning rate a bit.", cls_space)
    assert not r.parsed and r.delta.changes == () and r.rationale == "parse-failure"


def test_parse_out_of_vocabulary_optimizer_dropped(cls_space):
    r = parse_advisor_response(
        '{"changes": [{"set_categorical": {"field": "optimizer_kind", "value": "lion"}}]}', cls_space)
    assert r.parsed and r.delta.changes == ()
    assert any("lion" in w for w in r.warnings)


def test_parse_picks_first_delta_inside_fenced_prose(cls_space):
    text = ('Here is my plan {"note": 1}.\n```json\n{"changes": [{"scale_numeric": '
            '{"field": "weight_decay", "factor": 2}}], "rationale": "regularize"}\n```')
    r = parse_advisor_response(text, cls_space)
    assert r.rationale == "regularize" and r.delta.changes[0].field == "weight_decay"


def test_parse_rejects_nonpositive_factor(cls_space):
    r = parse_advisor_response('{"scale_numeric": {"field": "learning_rate", "factor": -2}}', cls_space)
    assert r.delta.changes == ()


def test_iter_json_objects_skips_broken_fragments():
    objs = list(iter_json_objects('{"a": 1 ... {"b": [1, 2]} trailing {'))
    assert objs == [{"b": [1, 2]}]


# ----------------------------------------------------------------------------
# evaluator parser


def test_evaluator_examples():
    assert parse_evaluator_response('{"success": true, "reason": "better"}').success is True
    assert parse_evaluator_response('{"success": false}').success is False
    bad = parse_evaluator_response("looks good to me")
    assert bad.success is False and not bad.parsed
    # truthy non-booleans do not count as success
    assert parse_evaluator_response('{"success": "yes"}').success is False


def test_evaluator_state_shape(cls_space):
    c = default_config(cls_space)
    d = build_evaluator_state(em(3, 0.4), c, em(1, 0.9), c, "classification").to_dict()
    assert d["current_metrics"]["val_loss"] == 0.4 and d["baseline_metrics"]["val_loss"] == 0.9


# ----------------------------------------------------------------------------
# prompt optimizer


def _prompt(n):
    return PromptState(PromptState.for_agent("advisor").base_text, tuple(f"n{i}" for i in range(n)))


def test_optimizer_append():
    p = _prompt(2)
    d = parse_optimizer_response('{"ops": [{"append": "lower lr after plateaus"}]}', p)
    new = apply_prompt_delta(p, d)
    assert new.guidance_notes == ("n0", "n1", "lower lr after plateaus")
    assert new.base_text == p.base_text


def test_optimizer_garbage_keeps_prompt():
    p = _prompt(3)
    d = parse_optimizer_response("<html>nope</html>", p)
    assert not d.parsed and d.ops == ()
    assert apply_prompt_delta(p, d) is p


def test_append_to_full_prompt_evicts_oldest():
    p = _prompt(8)
    d = parse_optimizer_response('{"append": "fresh"}', p)
    assert d.ops[0].evicts
    new = apply_prompt_delta(p, d)
    assert len(new.guidance_notes) == 8
    assert new.guidance_notes[0] == "n1" and new.guidance_notes[-1] == "fresh"


def test_replace_and_empty_ops():
    p = _prompt(3)
    assert apply_prompt_delta(p, PromptDeltaResponse()) is p
    new = apply_prompt_delta(p, parse_optimizer_response('{"replace": {"index": 0, "note": "zero"}}', p))
    assert new.guidance_notes == ("zero", "n1", "n2")
    warnings: list[str] = []
    same = apply_prompt_delta(p, PromptDeltaResponse((NoteOp("replace", "x", 7),)), warnings)
    assert same is p and warnings


def test_note_length_and_op_count_capped():
    long = "x" * (NOTE_CHAR_CAP + 100)
    d = parse_optimizer_response(json.dumps({"ops": [{"append": long}, {"append": "b"}, {"append": "c"}]}))
    assert len(d.ops) == 2 and len(d.ops[0].note) == NOTE_CHAR_CAP
    assert any("truncated" in w for w in d.warnings)


def test_negative_replace_index_rejected():
    d = parse_optimizer_response('{"replace": {"index": -1, "note": "x"}}')
    assert d.ops == ()


# ----------------------------------------------------------------------------
# architect parser


def test_architect_clamps_proposal(cls_space):
    prev = ArchSpec((64, 64, 64), 0.2, "relu")
    r = parse_architect_response('{"arch": {"layer_widths": [4096, 8, 8, 8, 8, 8, 8], "dropout": 3}}',
                                 cls_space, prev)
    assert r.parsed and r.warnings
    wb = cls_space.numeric["width"]
    assert all(wb.lower <= w <= wb.upper for w in r.arch.layer_widths)
    assert len(r.arch.layer_widths) <= cls_space.numeric["n_layers"].upper
    assert 0 <= r.arch.dropout <= cls_space.numeric["dropout"].upper


def test_architect_garbage_returns_none(cls_space):
    r = parse_architect_response("no idea", cls_space, ArchSpec())
    assert r.arch is None and not r.parsed


# ----------------------------------------------------------------------------
# schemas


@pytest.mark.parametrize("kind,good,bad", [
    ("advisor", {"changes": [{"scale_numeric": {"field": "learning_rate", "factor": 2}}]}, {"changes": 3}),
    ("evaluator", {"success": True, "reason": "ok"}, {"success": "yes"}),
    ("optimizer", {"ops": [{"append": "note"}]}, {"ops": "x"}),
    ("architect", {"arch": {"layer_widths": [64, 64], "dropout": 0.1, "activation": "relu"}}, {"arch": 1}),
])
def test_response_schemas(kind, good, bad):
    schema = response_schema(kind)
    jsonschema.Draft202012Validator.check_schema(schema)
    jsonschema.validate(good, schema)
    with pytest.raises(jsonschema.ValidationError):
        jsonschema.validate(bad, schema)
