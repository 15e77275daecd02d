"""Configuration space: architecture x features x strategy x hyperparameters.

All configuration types are frozen dataclasses. Changes go through
:func:`apply_delta`, which caps every numeric move to the per-field trust
region and then clamps into bounds.
"""
from __future__ import annotations

import itertools
import json
import math
import re
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

CLASSIFICATION = "classification"
REGRESSION = "regression"

ACTIVATIONS = ("relu", "tanh")
AUG_METHODS = ("duplication", "rotation", "shift", "flip", "scale", "noise", "contrast", "none")
IMAGE_ONLY_METHODS = ("rotation", "shift", "flip", "contrast")
CLASSIFICATION_LOSSES = ("cross_entropy", "focal")
REGRESSION_LOSSES = ("mse", "mae", "huber")
LOSSES = CLASSIFICATION_LOSSES + REGRESSION_LOSSES
OPTIMIZERS = ("sgd", "adam", "adamw")
SCHEDULERS = ("constant", "step_decay", "cosine")

# method -> (param name, default value)
METHOD_PARAMS: dict[str, tuple[tuple[str, float], ...]] = {
    "duplication": (("factor", 1.0), ("sigma", 0.05)),
    "rotation": (("degrees", 15.0),),
    "shift": (("pixels", 2.0),),
    "flip": (("prob", 0.5),),
    "scale": (("range", 0.1),),
    "noise": (("sigma", 0.1),),
    "contrast": (("range", 0.2),),
    "none": (),
}

SCHEDULER_PARAM_DEFAULTS = {"gamma": 0.5, "step_size": 3.0, "min_lr": 0.0}

CATEGORICAL_FIELDS = ("activation", "loss_kind", "optimizer_kind", "scheduler_kind")

_FIELD_RE = re.compile(r"^([A-Za-z_][A-Za-z0-9_.]*)(?:\[(\d+)\])?$")


@dataclass(frozen=True)
class TaskType:
    kind: str
    n_classes: int = 0

    @classmethod
    def classification(cls, n_classes: int) -> "TaskType":
        if n_classes < 2:
            raise ValueError(f"classification needs >= 2 classes, got {n_classes}")
        return cls(CLASSIFICATION, int(n_classes))

    @classmethod
    def regression(cls) -> "TaskType":
        return cls(REGRESSION, 0)

    @property
    def is_classification(self) -> bool:
        return self.kind == CLASSIFICATION

    @property
    def output_dim(self) -> int:
        return self.n_classes if self.is_classification else 1

    @property
    def losses(self) -> tuple[str, ...]:
        return CLASSIFICATION_LOSSES if self.is_classification else REGRESSION_LOSSES

    @property
    def reference_loss(self) -> str:
        return "cross_entropy" if self.is_classification else "mse"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "n_classes": self.n_classes}

    @classmethod
    def from_dict(cls, d: Mapping) -> "TaskType":
        if d["kind"] == CLASSIFICATION:
            return cls.classification(int(d["n_classes"]))
        if d["kind"] == REGRESSION:
            return cls.regression()
        raise ValueError(f"unknown task kind {d['kind']!r}")


@dataclass(frozen=True)
class ArchSpec:
    layer_widths: tuple[int, ...] = (64, 64, 64)
    dropout: float = 0.2
    activation: str = "relu"

    def to_dict(self) -> dict:
        return {
            "layer_widths": list(self.layer_widths),
            "dropout": self.dropout,
            "activation": self.activation,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ArchSpec":
        return cls(
            layer_widths=tuple(int(w) for w in d["layer_widths"]),
            dropout=float(d["dropout"]),
            activation=str(d["activation"]),
        )


@dataclass(frozen=True)
class FeatureSpec:
    methods: tuple[str, ...] = ()
    # "method.param" -> value, present only for active methods
    method_params: Mapping[str, float] = field(default_factory=dict)

    def param(self, method: str, name: str) -> float:
        key = f"{method}.{name}"
        if key in self.method_params:
            return self.method_params[key]
        return dict(METHOD_PARAMS[method])[name]

    def params_for(self, method: str) -> dict[str, float]:
        return {name: self.param(method, name) for name, _ in METHOD_PARAMS[method]}

    def to_dict(self) -> dict:
        return {
            "methods": list(self.methods),
            "method_params": {k: self.method_params[k] for k in sorted(self.method_params)},
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "FeatureSpec":
        return cls(
            methods=tuple(d.get("methods", ())),
            method_params={str(k): float(v) for k, v in d.get("method_params", {}).items()},
        )


@dataclass(frozen=True)
class StrategySpec:
    loss_kind: str = "cross_entropy"
    optimizer_kind: str = "adam"
    scheduler_kind: str = "constant"
    scheduler_params: Mapping[str, float] = field(
        default_factory=lambda: dict(SCHEDULER_PARAM_DEFAULTS)
    )

    def to_dict(self) -> dict:
        return {
            "loss_kind": self.loss_kind,
            "optimizer_kind": self.optimizer_kind,
            "scheduler_kind": self.scheduler_kind,
            "scheduler_params": {k: self.scheduler_params[k] for k in sorted(self.scheduler_params)},
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "StrategySpec":
        params = dict(SCHEDULER_PARAM_DEFAULTS)
        params.update({str(k): float(v) for k, v in d.get("scheduler_params", {}).items()})
        return cls(
            loss_kind=str(d["loss_kind"]),
            optimizer_kind=str(d["optimizer_kind"]),
            scheduler_kind=str(d["scheduler_kind"]),
            scheduler_params=params,
        )


@dataclass(frozen=True)
class HyperSpec:
    learning_rate: float = 0.01
    weight_decay: float = 0.0
    class_weights: tuple[float, ...] = ()
    batch_size: int = 32
    focal_gamma: float = 2.0

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "weight_decay": self.weight_decay,
            "class_weights": list(self.class_weights),
            "batch_size": self.batch_size,
            "focal_gamma": self.focal_gamma,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "HyperSpec":
        return cls(
            learning_rate=float(d["learning_rate"]),
            weight_decay=float(d["weight_decay"]),
            class_weights=tuple(float(w) for w in d.get("class_weights", ())),
            batch_size=int(d["batch_size"]),
            focal_gamma=float(d.get("focal_gamma", 2.0)),
        )


@dataclass(frozen=True)
class Configuration:
    arch: ArchSpec
    feature: FeatureSpec
    strategy: StrategySpec
    hyper: HyperSpec

    def to_dict(self) -> dict:
        return {
            "arch": self.arch.to_dict(),
            "feature": self.feature.to_dict(),
            "strategy": self.strategy.to_dict(),
            "hyper": self.hyper.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Configuration":
        return cls(
            arch=ArchSpec.from_dict(d["arch"]),
            feature=FeatureSpec.from_dict(d["feature"]),
            strategy=StrategySpec.from_dict(d["strategy"]),
            hyper=HyperSpec.from_dict(d["hyper"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass(frozen=True)
class NumericBounds:
    lower: float
    upper: float
    integer: bool = False
    log: bool = False
    trust: float = 1.0
    # smallest denominator for the relative-change test; None -> width * 1e-6
    step_floor: float | None = None

    @property
    def width(self) -> float:
        return self.upper - self.lower

    @property
    def floor(self) -> float:
        return self.step_floor if self.step_floor is not None else self.width * 1e-6

    def max_step(self, old: float) -> float:
        return self.trust * max(abs(old), self.floor)

    def clamp(self, value: float) -> float:
        return min(max(value, self.lower), self.upper)

    def midpoint(self) -> float:
        if self.log:
            return math.sqrt(self.lower * self.upper)
        return 0.5 * (self.lower + self.upper)

    def grid(self, n: int) -> list[float]:
        if n == 1:
            pts = [self.midpoint()]
        elif self.log:
            pts = list(np.logspace(math.log10(self.lower), math.log10(self.upper), n))
            pts[0], pts[-1] = self.lower, self.upper
        else:
            pts = list(np.linspace(self.lower, self.upper, n))
        if self.integer:
            pts = [int(round(p)) for p in pts]
        else:
            pts = [float(p) for p in pts]
        return pts

    def to_dict(self) -> dict:
        return {
            "lower": self.lower,
            "upper": self.upper,
            "integer": self.integer,
            "log": self.log,
            "trust": self.trust,
            "step_floor": self.step_floor,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "NumericBounds":
        return cls(
            lower=float(d["lower"]),
            upper=float(d["upper"]),
            integer=bool(d.get("integer", False)),
            log=bool(d.get("log", False)),
            trust=float(d.get("trust", 1.0)),
            step_floor=None if d.get("step_floor") is None else float(d["step_floor"]),
        )


def _default_numeric() -> dict[str, NumericBounds]:
    return {
        "learning_rate": NumericBounds(1e-4, 1e-1, log=True, trust=1.0),
        "weight_decay": NumericBounds(0.0, 0.1, trust=1.0, step_floor=1e-3),
        "batch_size": NumericBounds(4, 256, integer=True),
        "focal_gamma": NumericBounds(0.0, 5.0, step_floor=0.5),
        "class_weights": NumericBounds(0.1, 10.0, trust=0.5),
        "dropout": NumericBounds(0.0, 0.9, step_floor=0.1),
        "width": NumericBounds(32, 512, integer=True),
        "n_layers": NumericBounds(2, 5, integer=True),
        "duplication.factor": NumericBounds(1, 4, integer=True),
        "duplication.sigma": NumericBounds(0.0, 1.0, step_floor=0.05),
        "rotation.degrees": NumericBounds(0.0, 45.0, step_floor=5.0),
        "shift.pixels": NumericBounds(0, 4, integer=True, step_floor=1.0),
        "flip.prob": NumericBounds(0.0, 1.0, step_floor=0.1),
        "scale.range": NumericBounds(0.0, 0.5, step_floor=0.05),
        "noise.sigma": NumericBounds(0.0, 1.0, step_floor=0.05),
        "contrast.range": NumericBounds(0.0, 0.5, step_floor=0.05),
        "scheduler.gamma": NumericBounds(0.01, 1.0),
        "scheduler.step_size": NumericBounds(1, 50, integer=True),
        "scheduler.min_lr": NumericBounds(0.0, 1e-3, step_floor=1e-5),
    }


@dataclass(frozen=True)
class ConfigurationSpace:
    """Bounds, vocabularies and trust regions for one task."""

    task: TaskType
    numeric: Mapping[str, NumericBounds] = field(default_factory=_default_numeric)
    categorical: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    methods: tuple[str, ...] = ()

    def __post_init__(self):
        for name, b in self.numeric.items():
            if not b.lower < b.upper:
                raise ValueError(f"{name}: lower bound {b.lower} must be < upper {b.upper}")
            if not b.trust > 0:
                raise ValueError(f"{name}: trust region must be > 0")
        if not self.categorical:
            object.__setattr__(
                self,
                "categorical",
                {
                    "activation": ACTIVATIONS,
                    "loss_kind": self.task.losses,
                    "optimizer_kind": OPTIMIZERS,
                    "scheduler_kind": SCHEDULERS,
                },
            )
        if not self.methods:
            object.__setattr__(
                self, "methods", tuple(m for m in AUG_METHODS if m not in IMAGE_ONLY_METHODS)
            )

    @classmethod
    def for_task(cls, task: TaskType, image_shape: Sequence[int] | None = None) -> "ConfigurationSpace":
        methods = AUG_METHODS if image_shape else tuple(
            m for m in AUG_METHODS if m not in IMAGE_ONLY_METHODS
        )
        return cls(task=task, methods=methods)

    @property
    def trust_region(self) -> dict[str, float]:
        return {name: b.trust for name, b in self.numeric.items()}

    def field_names(self) -> list[str]:
        return sorted(list(self.numeric) + list(self.categorical))

    def to_dict(self) -> dict:
        return {
            "task": self.task.to_dict(),
            "numeric": {k: self.numeric[k].to_dict() for k in sorted(self.numeric)},
            "categorical": {k: list(self.categorical[k]) for k in sorted(self.categorical)},
            "methods": list(self.methods),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ConfigurationSpace":
        return cls(
            task=TaskType.from_dict(d["task"]),
            numeric={k: NumericBounds.from_dict(v) for k, v in d["numeric"].items()},
            categorical={k: tuple(v) for k, v in d["categorical"].items()},
            methods=tuple(d["methods"]),
        )

    def summary(self) -> dict:
        """Compact, agent-facing rendering of every tunable field."""

        def fmt(x: float) -> str:
            return f"{x:g}"

        out: dict[str, Any] = {}
        for name in sorted(self.numeric):
            b = self.numeric[name]
            entry = {"min": fmt(b.lower), "max": fmt(b.upper), "max_relative_step": b.trust}
            if b.integer:
                entry["integer"] = True
            out[name] = entry
        for name in sorted(self.categorical):
            out[name] = {"allowed": list(self.categorical[name])}
        out["methods"] = {"allowed": list(self.methods)}
        return out


# ----------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Violation:
    field: str
    value: Any
    bound: Any
    message: str


@dataclass(frozen=True)
class ValidationResult:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def _check_numeric(out: list, name: str, value: float, b: NumericBounds) -> None:
    if not isinstance(value, (int, float, np.integer, np.floating)) or not math.isfinite(value):
        out.append(Violation(name, value, (b.lower, b.upper), f"{name} is not a finite number"))
        return
    if value < b.lower:
        out.append(Violation(name, value, b.lower, f"{name}={value:g} below lower bound {b.lower:g}"))
    elif value > b.upper:
        out.append(Violation(name, value, b.upper, f"{name}={value:g} above upper bound {b.upper:g}"))
    if b.integer and float(value) != int(value):
        out.append(Violation(name, value, "integer", f"{name} must be an integer"))


def validate(config: Configuration, space: ConfigurationSpace) -> ValidationResult:
    out: list[Violation] = []
    num = space.numeric
    arch, feat, strat, hyp = config.arch, config.feature, config.strategy, config.hyper

    _check_numeric(out, "n_layers", len(arch.layer_widths), num["n_layers"])
    for i, w in enumerate(arch.layer_widths):
        _check_numeric(out, f"layer_widths[{i}]", w, num["width"])
    _check_numeric(out, "dropout", arch.dropout, num["dropout"])
    if arch.activation not in space.categorical["activation"]:
        out.append(Violation("activation", arch.activation, space.categorical["activation"],
                             f"activation {arch.activation!r} not allowed"))

    if len(set(feat.methods)) != len(feat.methods):
        out.append(Violation("methods", list(feat.methods), "unique", "duplicate augmentation methods"))
    for m in feat.methods:
        if m not in space.methods:
            out.append(Violation("methods", m, space.methods, f"augmentation {m!r} not allowed"))
    for key, value in feat.method_params.items():
        method = key.split(".", 1)[0]
        if key not in num:
            out.append(Violation(key, value, None, f"unknown augmentation parameter {key!r}"))
        elif method not in feat.methods:
            out.append(Violation(key, value, None, f"parameter for inactive method {method!r}"))
        else:
            _check_numeric(out, key, value, num[key])

    for cat, value in (("loss_kind", strat.loss_kind), ("optimizer_kind", strat.optimizer_kind),
                       ("scheduler_kind", strat.scheduler_kind)):
        if value not in space.categorical[cat]:
            out.append(Violation(cat, value, space.categorical[cat], f"{cat} {value!r} not allowed"))
    if strat.loss_kind not in space.task.losses:
        out.append(Violation("loss_kind", strat.loss_kind, space.task.losses,
                             f"loss {strat.loss_kind!r} incompatible with {space.task.kind}"))
    for key, value in strat.scheduler_params.items():
        name = f"scheduler.{key}"
        if name not in num:
            out.append(Violation(name, value, None, f"unknown scheduler parameter {key!r}"))
        else:
            _check_numeric(out, name, value, num[name])

    _check_numeric(out, "learning_rate", hyp.learning_rate, num["learning_rate"])
    _check_numeric(out, "weight_decay", hyp.weight_decay, num["weight_decay"])
    _check_numeric(out, "batch_size", hyp.batch_size, num["batch_size"])
    _check_numeric(out, "focal_gamma", hyp.focal_gamma, num["focal_gamma"])
    want = space.task.n_classes if space.task.is_classification else 0
    if len(hyp.class_weights) != want:
        out.append(Violation("class_weights", list(hyp.class_weights), want,
                             f"expected {want} class weights, got {len(hyp.class_weights)}"))
    for i, w in enumerate(hyp.class_weights):
        _check_numeric(out, f"class_weights[{i}]", w, num["class_weights"])
    return ValidationResult(tuple(out))


# ----------------------------------------------------------------------------
# field access


def parse_field(name: str) -> tuple[str, int | None]:
    m = _FIELD_RE.match(name)
    if not m:
        raise KeyError(name)
    return m.group(1), None if m.group(2) is None else int(m.group(2))


def is_known_field(name: str, space: ConfigurationSpace) -> bool:
    try:
        base, idx = parse_field(name)
    except KeyError:
        return False
    if idx is not None:
        return base in ("class_weights", "layer_widths")
    return base in space.numeric or base in space.categorical


def numeric_bounds(name: str, space: ConfigurationSpace) -> NumericBounds:
    base, _ = parse_field(name)
    if base == "layer_widths":
        return space.numeric["width"]
    return space.numeric[base]


def get_value(config: Configuration, name: str) -> Any:
    """Read a field; vector fields without an index return a tuple."""
    base, idx = parse_field(name)
    a, f, s, h = config.arch, config.feature, config.strategy, config.hyper
    if base in ("width", "layer_widths"):
        return a.layer_widths if idx is None else a.layer_widths[idx]
    if base == "class_weights":
        return h.class_weights if idx is None else h.class_weights[idx]
    if base == "n_layers":
        return len(a.layer_widths)
    if base == "dropout":
        return a.dropout
    if base == "activation":
        return a.activation
    if base in ("learning_rate", "weight_decay", "batch_size", "focal_gamma"):
        return getattr(h, base)
    if base in ("loss_kind", "optimizer_kind", "scheduler_kind"):
        return getattr(s, base)
    if base.startswith("scheduler."):
        key = base.split(".", 1)[1]
        return s.scheduler_params.get(key, SCHEDULER_PARAM_DEFAULTS.get(key))
    method, _, param = base.partition(".")
    if method in METHOD_PARAMS and param:
        return f.param(method, param)
    raise KeyError(name)


def set_value(config: Configuration, name: str, value: Any) -> Configuration:
    base, idx = parse_field(name)
    a, f, s, h = config.arch, config.feature, config.strategy, config.hyper
    if base in ("width", "layer_widths"):
        widths = list(a.layer_widths)
        if idx is None:
            widths = [int(v) for v in value] if isinstance(value, (list, tuple)) else [int(value)] * len(widths)
        else:
            widths[idx] = int(value)
        return replace(config, arch=replace(a, layer_widths=tuple(widths)))
    if base == "class_weights":
        weights = list(h.class_weights)
        if idx is None:
            weights = [float(v) for v in value] if isinstance(value, (list, tuple)) else [float(value)] * len(weights)
        else:
            weights[idx] = float(value)
        return replace(config, hyper=replace(h, class_weights=tuple(weights)))
    if base == "n_layers":
        n = int(value)
        widths = list(a.layer_widths[:n])
        while len(widths) < n:
            widths.append(widths[-1] if widths else 64)
        return replace(config, arch=replace(a, layer_widths=tuple(widths)))
    if base == "dropout":
        return replace(config, arch=replace(a, dropout=float(value)))
    if base == "activation":
        return replace(config, arch=replace(a, activation=str(value)))
    if base == "batch_size":
        return replace(config, hyper=replace(h, batch_size=int(value)))
    if base in ("learning_rate", "weight_decay", "focal_gamma"):
        return replace(config, hyper=replace(h, **{base: float(value)}))
    if base in ("loss_kind", "optimizer_kind", "scheduler_kind"):
        return replace(config, strategy=replace(s, **{base: str(value)}))
    if base.startswith("scheduler."):
        params = dict(s.scheduler_params)
        params[base.split(".", 1)[1]] = float(value)
        return replace(config, strategy=replace(s, scheduler_params=params))
    method, _, param = base.partition(".")
    if method in METHOD_PARAMS and param:
        params = dict(f.method_params)
        params[base] = float(value)
        return replace(config, feature=replace(f, method_params=params))
    raise KeyError(name)


# ----------------------------------------------------------------------------
# deltas


@dataclass(frozen=True)
class FieldChange:
    """One typed change. ``op`` is one of the six delta operations."""

    op: str
    field: str | None = None
    value: Any = None

    OPS = ("set_numeric", "scale_numeric", "set_categorical", "add_method", "remove_method", "no_change")

    def to_dict(self) -> dict:
        if self.op == "set_numeric":
            v = list(self.value) if isinstance(self.value, (list, tuple)) else self.value
            return {"set_numeric": {"field": self.field, "value": v}}
        if self.op == "scale_numeric":
            return {"scale_numeric": {"field": self.field, "factor": self.value}}
        if self.op == "set_categorical":
            return {"set_categorical": {"field": self.field, "value": self.value}}
        if self.op == "add_method":
            body: dict[str, Any] = {"method": self.field}
            if self.value:
                body["params"] = {k: self.value[k] for k in sorted(self.value)}
            return {"add_method": body}
        if self.op == "remove_method":
            return {"remove_method": {"method": self.field}}
        return {"no_change": {}}

    def describe(self) -> str:
        if self.op == "scale_numeric":
            return f"{self.field} x{self.value:g}"
        if self.op == "set_numeric":
            return f"{self.field} := {self.value}"
        if self.op == "set_categorical":
            return f"{self.field} := {self.value}"
        if self.op == "add_method":
            return f"+{self.field}" + (f" {json.dumps(self.value, sort_keys=True)}" if self.value else "")
        if self.op == "remove_method":
            return f"-{self.field}"
        return "no_change"


def set_numeric(field: str, value) -> FieldChange:
    return FieldChange("set_numeric", field, tuple(value) if isinstance(value, list) else value)


def scale_numeric(field: str, factor: float) -> FieldChange:
    return FieldChange("scale_numeric", field, factor)


def set_categorical(field: str, value: str) -> FieldChange:
    return FieldChange("set_categorical", field, value)


def add_method(method: str, params: Mapping[str, float] | None = None) -> FieldChange:
    return FieldChange("add_method", method, dict(params) if params else None)


def remove_method(method: str) -> FieldChange:
    return FieldChange("remove_method", method)


@dataclass(frozen=True)
class ConfigDelta:
    changes: tuple[FieldChange, ...] = ()

    @classmethod
    def no_change(cls) -> "ConfigDelta":
        return cls(())

    @classmethod
    def of(cls, *changes: FieldChange) -> "ConfigDelta":
        return cls(tuple(changes))

    @property
    def is_empty(self) -> bool:
        return all(c.op == "no_change" for c in self.changes)

    def to_dict(self) -> dict:
        return {"changes": [c.to_dict() for c in self.changes]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def describe(self) -> str:
        if self.is_empty:
            return "no_change"
        return "; ".join(c.describe() for c in self.changes if c.op != "no_change")


@dataclass(frozen=True)
class ReportEntry:
    field: str
    action: str  # capped | clamped | dropped
    requested: Any
    applied: Any
    note: str = ""

    def to_dict(self) -> dict:
        return {"field": self.field, "action": self.action, "requested": self.requested,
                "applied": self.applied, "note": self.note}


@dataclass(frozen=True)
class ApplyReport:
    entries: tuple[ReportEntry, ...] = ()
    changed_fields: tuple[str, ...] = ()
    categorical_flips: int = 0

    @property
    def is_empty(self) -> bool:
        return not self.entries

    def to_dict(self) -> dict:
        return {
            "entries": [e.to_dict() for e in self.entries],
            "changed_fields": list(self.changed_fields),
            "categorical_flips": self.categorical_flips,
        }


def _bounded_move(old: float, proposed: float, b: NumericBounds, name: str,
                  entries: list[ReportEntry]) -> float:
    """Cap to the trust region around ``old``, clamp into bounds, round integers."""
    if not math.isfinite(proposed):
        entries.append(ReportEntry(name, "dropped", proposed, old, "non-finite value"))
        return old
    step = b.max_step(old)
    new = proposed
    if abs(new - old) > step:
        new = old + math.copysign(step, new - old)
        entries.append(ReportEntry(name, "capped", proposed, new, f"trust region {b.trust:g}"))
    clamped = b.clamp(new)
    if clamped != new:
        entries.append(ReportEntry(name, "clamped", new, clamped, f"bounds [{b.lower:g}, {b.upper:g}]"))
        new = clamped
    if b.integer:
        r = int(round(new))
        if abs(r - old) > step:
            r = int(math.floor(new)) if new > old else int(math.ceil(new))
        new = int(min(max(r, math.ceil(b.lower)), math.floor(b.upper)))
    return new


def apply_delta(config: Configuration, delta: ConfigDelta,
                space: ConfigurationSpace) -> tuple[Configuration, ApplyReport]:
    """Apply ``delta`` with trust-region capping and clamping.

    Every numeric move is measured against the value at the start of the
    call, so stacking several changes on one field cannot exceed its
    trust region. Out-of-vocabulary or unknown changes become no-ops and
    are reported.
    """
    entries: list[ReportEntry] = []
    changed: list[str] = []
    flips = 0
    cur = config

    for ch in delta.changes:
        if ch.op == "no_change":
            continue
        if ch.op in ("set_numeric", "scale_numeric"):
            name = ch.field or ""
            if not is_known_field(name, space) or parse_field(name)[0] in space.categorical:
                entries.append(ReportEntry(name, "dropped", ch.value, None, "unknown numeric field"))
                continue
            base, idx = parse_field(name)
            b = numeric_bounds(name, space)
            method = base.split(".", 1)[0]
            if "." in base and method in METHOD_PARAMS and method not in cur.feature.methods:
                entries.append(ReportEntry(name, "dropped", ch.value, None, f"method {method!r} inactive"))
                continue
            if idx is not None:
                size = min(len(get_value(config, base)), len(get_value(cur, base)))
                if idx >= size:
                    entries.append(ReportEntry(name, "dropped", ch.value, None,
                                               f"index {idx} out of range for {size} values"))
                    continue
            orig = get_value(config, name)
            now = get_value(cur, name)
            try:
                if isinstance(orig, tuple):
                    n = len(orig)
                    if ch.op == "scale_numeric":
                        proposed = [float(v) * float(ch.value) for v in now]
                    elif isinstance(ch.value, (list, tuple)):
                        if len(ch.value) != n:
                            entries.append(ReportEntry(name, "dropped", ch.value, None,
                                                       f"expected {n} values"))
                            continue
                        proposed = [float(v) for v in ch.value]
                    else:
                        proposed = [float(ch.value)] * n
                    new_vals = [
                        _bounded_move(float(o), p, b, f"{base}[{i}]", entries)
                        for i, (o, p) in enumerate(zip(orig, proposed))
                    ]
                    new_value: Any = new_vals
                else:
                    if isinstance(ch.value, (list, tuple)):
                        entries.append(ReportEntry(name, "dropped", ch.value, None, "scalar field"))
                        continue
                    proposed_s = float(now) * float(ch.value) if ch.op == "scale_numeric" else float(ch.value)
                    new_value = _bounded_move(float(orig), proposed_s, b, name, entries)
            except (TypeError, ValueError):
                entries.append(ReportEntry(name, "dropped", ch.value, None, "not a number"))
                continue
            cur = set_value(cur, name, new_value)
            changed.append(name)
        elif ch.op == "set_categorical":
            name = ch.field or ""
            allowed = space.categorical.get(name)
            if allowed is None:
                entries.append(ReportEntry(name, "dropped", ch.value, None, "unknown categorical field"))
                continue
            if ch.value not in allowed or (name == "loss_kind" and ch.value not in space.task.losses):
                entries.append(ReportEntry(name, "dropped", ch.value, None, "value outside allowed set"))
                continue
            if get_value(cur, name) != ch.value:
                cur = set_value(cur, name, ch.value)
                flips += 1
                changed.append(name)
        elif ch.op == "add_method":
            m = ch.field
            if m not in space.methods:
                entries.append(ReportEntry("methods", "dropped", m, None, "method not allowed"))
                continue
            if m == "none" or m in cur.feature.methods:
                continue
            params = dict(cur.feature.method_params)
            for pname, default in METHOD_PARAMS[m]:
                key = f"{m}.{pname}"
                requested = (ch.value or {}).get(pname, default)
                try:
                    requested = float(requested)
                except (TypeError, ValueError):
                    entries.append(ReportEntry(key, "dropped", requested, default, "not a number"))
                    requested = default
                b = space.numeric[key]
                v = b.clamp(requested) if math.isfinite(requested) else default
                if v != requested:
                    entries.append(ReportEntry(key, "clamped", requested, v,
                                               f"bounds [{b.lower:g}, {b.upper:g}]"))
                params[key] = float(int(round(v))) if b.integer else v
            for extra in sorted(set(ch.value or {}) - {p for p, _ in METHOD_PARAMS[m]}):
                entries.append(ReportEntry(f"{m}.{extra}", "dropped", ch.value[extra], None, "unknown parameter"))
            cur = replace(cur, feature=FeatureSpec(cur.feature.methods + (m,), params))
            flips += 1
            changed.append("methods")
        elif ch.op == "remove_method":
            m = ch.field
            if m not in cur.feature.methods:
                continue
            params = {k: v for k, v in cur.feature.method_params.items() if not k.startswith(m + ".")}
            cur = replace(cur, feature=FeatureSpec(tuple(x for x in cur.feature.methods if x != m), params))
            flips += 1
            changed.append("methods")
        else:
            entries.append(ReportEntry(str(ch.field), "dropped", ch.value, None, f"unknown op {ch.op!r}"))

    return cur, ApplyReport(tuple(entries), tuple(dict.fromkeys(changed)), flips)


# ----------------------------------------------------------------------------
# constructors


def default_config(space: ConfigurationSpace, task: TaskType | None = None) -> Configuration:
    task = task or space.task
    return Configuration(
        arch=ArchSpec(layer_widths=(64, 64, 64), dropout=0.2, activation="relu"),
        feature=FeatureSpec(),
        strategy=StrategySpec(loss_kind=task.reference_loss, optimizer_kind="adam",
                              scheduler_kind="constant"),
        hyper=HyperSpec(learning_rate=0.01, weight_decay=0.0,
                        class_weights=(1.0,) * task.n_classes if task.is_classification else (),
                        batch_size=32, focal_gamma=2.0),
    )


def _uniform(rng: np.random.Generator, b: NumericBounds) -> float:
    if b.integer:
        return int(rng.integers(int(b.lower), int(b.upper) + 1))
    if b.log:
        return float(math.exp(rng.uniform(math.log(b.lower), math.log(b.upper))))
    return float(rng.uniform(b.lower, b.upper))


def sample_random(space: ConfigurationSpace, rng: np.random.Generator,
                  task: TaskType | None = None) -> Configuration:
    """Draw a valid configuration; learning rate is log-uniform."""
    task = task or space.task
    num, cat = space.numeric, space.categorical
    n_layers = _uniform(rng, num["n_layers"])
    widths = tuple(_uniform(rng, num["width"]) for _ in range(n_layers))
    arch = ArchSpec(widths, _uniform(rng, num["dropout"]), str(rng.choice(cat["activation"])))

    choices = [m for m in space.methods if m != "none"]
    methods: tuple[str, ...] = ()
    params: dict[str, float] = {}
    pick = int(rng.integers(0, len(choices) + 1))
    if pick < len(choices):
        m = choices[pick]
        methods = (m,)
        for pname, _ in METHOD_PARAMS[m]:
            params[f"{m}.{pname}"] = float(_uniform(rng, num[f"{m}.{pname}"]))
    feature = FeatureSpec(methods, params)

    losses = [l for l in cat["loss_kind"] if l in task.losses]
    sched_params = {k: float(_uniform(rng, num[f"scheduler.{k}"])) for k in sorted(SCHEDULER_PARAM_DEFAULTS)}
    strategy = StrategySpec(str(rng.choice(losses)), str(rng.choice(cat["optimizer_kind"])),
                            str(rng.choice(cat["scheduler_kind"])), sched_params)
    weights = tuple(_uniform(rng, num["class_weights"]) for _ in range(task.n_classes)) \
        if task.is_classification else ()
    hyper = HyperSpec(
        learning_rate=_uniform(rng, num["learning_rate"]),
        weight_decay=_uniform(rng, num["weight_decay"]),
        class_weights=weights,
        batch_size=_uniform(rng, num["batch_size"]),
        focal_gamma=_uniform(rng, num["focal_gamma"]),
    )
    return Configuration(arch, feature, strategy, hyper)


GRID_FIELDS = (
    "activation", "batch_size", "class_weights", "dropout", "focal_gamma", "learning_rate",
    "loss_kind", "n_layers", "optimizer_kind", "scheduler_kind", "weight_decay", "width",
)


def grid_values(space: ConfigurationSpace, name: str, n: int) -> list:
    if name not in GRID_FIELDS:
        raise ValueError(f"field {name!r} cannot be gridded; choose from {GRID_FIELDS}")
    if n < 1:
        raise ValueError(f"resolution for {name!r} must be >= 1, got {n}")
    if name in space.categorical:
        allowed = list(space.categorical[name])
        if name == "loss_kind":
            allowed = [l for l in allowed if l in space.task.losses]
        if n > len(allowed):
            raise ValueError(f"resolution {n} for {name!r} exceeds its {len(allowed)} values")
        if n == 1:
            return [get_value(default_config(space), name)]
        return allowed[:n]
    b = space.numeric[name]
    if b.integer and n > int(b.upper - b.lower) + 1:
        raise ValueError(f"resolution {n} for integer field {name!r} exceeds distinct values")
    return b.grid(n)


def enumerate_grid(space: ConfigurationSpace, resolution: Mapping[str, int]) -> list[Configuration]:
    """Cartesian grid over the named fields, lexicographic by field name.

    Fields not named keep their default value. Resolution 1 puts the field at
    its midpoint (geometric midpoint for log-scaled fields).
    """
    unknown = sorted(set(resolution) - set(GRID_FIELDS))
    if unknown:
        raise ValueError(f"unknown grid fields: {unknown}")
    names = sorted(resolution)
    axes = [grid_values(space, n, int(resolution[n])) for n in names]
    base = default_config(space)
    out = []
    for combo in itertools.product(*axes):
        cfg = base
        for n, v in zip(names, combo):
            cfg = set_value(cfg, n, v)
        out.append(cfg)
    return out


def configs_to_json(configs: Iterable[Configuration]) -> str:
    return json.dumps([c.to_dict() for c in configs], sort_keys=True)
