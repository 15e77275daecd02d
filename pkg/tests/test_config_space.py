from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lgt.config_space import (
    ArchSpec,
    ConfigDelta,
    Configuration,
    ConfigurationSpace,
    FieldChange,
    TaskType,
    add_method,
    apply_delta,
    default_config,
    enumerate_grid,
    get_value,
    numeric_bounds,
    remove_method,
    sample_random,
    scale_numeric,
    set_categorical,
    set_numeric,
    validate,
)


def test_default_config_validates_for_both_tasks(cls_space, reg_space):
    c = default_config(cls_space)
    assert c.arch.layer_widths == (64, 64, 64) and c.hyper.learning_rate == 0.01
    assert validate(c, cls_space).ok
    assert c.hyper.class_weights == (1.0, 1.0, 1.0)
    r = default_config(reg_space)
    assert r.strategy.loss_kind == "mse"
    assert validate(r, reg_space).ok


def test_validate_names_learning_rate_bound(cls_space):
    c = default_config(cls_space)
    bad = replace(c, hyper=replace(c.hyper, learning_rate=0.5))
    res = validate(bad, cls_space)
    assert not res.ok
    v = next(v for v in res.violations if v.field == "learning_rate")
    assert v.bound == pytest.approx(1e-1)


def test_validate_names_layer_count(cls_space):
    c = default_config(cls_space)
    bad = replace(c, arch=ArchSpec((64,) * 6, 0.2, "relu"))
    res = validate(bad, cls_space)
    v = next(v for v in res.violations if v.field == "n_layers")
    assert v.bound == 5


def test_validate_rejects_task_incompatible_loss(cls_space):
    c = default_config(cls_space)
    bad = replace(c, strategy=replace(c.strategy, loss_kind="mse"))
    assert not validate(bad, cls_space).ok


def test_scale_learning_rate_doubles(cls_space):
    c = default_config(cls_space)
    new, report = apply_delta(c, ConfigDelta.of(scale_numeric("learning_rate", 2.0)), cls_space)
    assert new.hyper.learning_rate == pytest.approx(0.02)
    assert report.changed_fields == ("learning_rate",)


def test_no_change_is_identity(cls_space):
    c = default_config(cls_space)
    new, report = apply_delta(c, ConfigDelta.no_change(), cls_space)
    assert new == c and report.is_empty


def test_set_learning_rate_out_of_bounds_is_clamped(cls_space):
    c = replace(default_config(cls_space), hyper=replace(default_config(cls_space).hyper, learning_rate=0.06))
    new, report = apply_delta(c, ConfigDelta.of(set_numeric("learning_rate", 0.5)), cls_space)
    assert new.hyper.learning_rate == pytest.approx(0.1)
    assert any(e.action == "clamped" and e.field == "learning_rate" for e in report.entries)


def test_trust_region_caps_before_clamp(cls_space):
    # from 0.01 the largest allowed step is 0.01, so 0.5 is capped to 0.02
    c = default_config(cls_space)
    new, report = apply_delta(c, ConfigDelta.of(set_numeric("learning_rate", 0.5)), cls_space)
    assert new.hyper.learning_rate == pytest.approx(0.02)
    assert [e.action for e in report.entries] == ["capped"]


def test_stacked_changes_share_one_trust_region(cls_space):
    c = default_config(cls_space)
    d = ConfigDelta.of(scale_numeric("learning_rate", 2.0), scale_numeric("learning_rate", 2.0))
    new, _ = apply_delta(c, d, cls_space)
    assert new.hyper.learning_rate <= 0.02 + 1e-15


def test_out_of_vocabulary_changes_are_dropped(cls_space):
    c = default_config(cls_space)
    d = ConfigDelta.of(set_categorical("optimizer_kind", "lion"), set_numeric("bogus", 1.0),
                       set_numeric("class_weights[7]", 2.0), add_method("rotation"))
    new, report = apply_delta(c, d, cls_space)
    assert new == c
    assert len(report.entries) == 4 and all(e.action == "dropped" for e in report.entries)


def test_methods_add_and_remove(cls_space):
    c = default_config(cls_space)
    added, rep = apply_delta(c, ConfigDelta.of(add_method("noise", {"sigma": 0.2})), cls_space)
    assert added.feature.methods == ("noise",) and added.feature.param("noise", "sigma") == 0.2
    assert rep.categorical_flips == 1
    removed, _ = apply_delta(added, ConfigDelta.of(remove_method("noise")), cls_space)
    assert removed.feature.methods == () and not removed.feature.method_params


def test_integer_fields_stay_integer(cls_space):
    c = default_config(cls_space)
    new, _ = apply_delta(c, ConfigDelta.of(scale_numeric("batch_size", 1.7)), cls_space)
    assert isinstance(new.hyper.batch_size, int) and new.hyper.batch_size == 54


def test_configuration_json_round_trip(cls_space):
    c = sample_random(cls_space, np.random.default_rng(0))
    assert Configuration.from_dict(c.to_dict()) == c


def test_space_round_trip(cls_space):
    assert ConfigurationSpace.from_dict(cls_space.to_dict()) == cls_space


def test_sample_random_is_deterministic(cls_space):
    a = sample_random(cls_space, np.random.default_rng(42))
    b = sample_random(cls_space, np.random.default_rng(42))
    assert a == b


def test_sample_random_valid_and_log_uniform(cls_space):
    rng = np.random.default_rng(5)
    samples = [sample_random(cls_space, rng) for _ in range(1000)]
    assert all(validate(s, cls_space).ok for s in samples)
    lrs = np.log10([s.hyper.learning_rate for s in samples])
    assert lrs.max() - lrs.min() >= 2.0
    # log-uniform on [-4, -1]: quartiles at -3.25, -2.5, -1.75
    q = np.quantile(lrs, [0.25, 0.5, 0.75])
    np.testing.assert_allclose(q, [-3.25, -2.5, -1.75], atol=0.15)


def test_grid_counts_and_midpoint(cls_space):
    assert len(enumerate_grid(cls_space, {"learning_rate": 2, "width": 3})) == 6
    (mid,) = enumerate_grid(cls_space, {"learning_rate": 1})
    assert mid.hyper.learning_rate == pytest.approx(math.sqrt(1e-4 * 1e-1))


def test_grid_learning_rate_is_log_spaced(cls_space):
    grid = enumerate_grid(cls_space, {"learning_rate": 4})
    np.testing.assert_allclose([g.hyper.learning_rate for g in grid], [1e-4, 1e-3, 1e-2, 1e-1], rtol=1e-12)


def test_grid_order_is_lexicographic_by_field(cls_space):
    grid = enumerate_grid(cls_space, {"width": 2, "learning_rate": 2})
    # learning_rate sorts first, so it varies slowest
    lrs = [g.hyper.learning_rate for g in grid]
    assert lrs[0] == lrs[1] and lrs[2] == lrs[3] and lrs[0] < lrs[2]
    assert all(validate(g, cls_space).ok for g in grid)


def test_grid_rejects_unknown_field(cls_space):
    with pytest.raises(ValueError):
        enumerate_grid(cls_space, {"momentum": 2})


_FIELDS = ["learning_rate", "weight_decay", "batch_size", "focal_gamma", "class_weights", "class_weights[1]",
           "scheduler.gamma", "scheduler.step_size", "scheduler.min_lr"]


@settings(max_examples=200, deadline=None)
@given(
    field=st.sampled_from(_FIELDS),
    op=st.sampled_from(["set_numeric", "scale_numeric"]),
    value=st.floats(min_value=-1e6, max_value=1e6, allow_nan=False) | st.sampled_from([math.inf, math.nan]),
    seed=st.integers(0, 2**16),
)
def test_apply_delta_respects_trust_region_and_bounds(field, op, value, seed):
    space = ConfigurationSpace.for_task(TaskType.classification(3))
    c = sample_random(space, np.random.default_rng(seed))
    new, _ = apply_delta(c, ConfigDelta.of(FieldChange(op, field, value)), space)
    assert validate(new, space).ok
    names = [f"class_weights[{i}]" for i in range(3)] if field == "class_weights" else [field]
    for name in names:
        b = numeric_bounds(name, space)
        old, cur = float(get_value(c, name)), float(get_value(new, name))
        assert abs(cur - old) <= b.trust * max(abs(old), b.floor) * (1 + 1e-12)
        assert b.lower <= cur <= b.upper
