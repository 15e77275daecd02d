"""Deterministic rule-based stand-in for the language model.

Each agent kind has an ordered rule list; the first rule whose condition holds
on the agent's state emits the response. Every list ends with a catch-all.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Callable, Mapping

State = Mapping[str, Any]


@dataclass(frozen=True)
class ScriptedRule:
    name: str
    condition: Callable[[State], bool]
    respond: Callable[[State], dict]


def _always(_: State) -> bool:
    return True


@dataclass(frozen=True)
class ScriptedRuleSet:
    rules: Mapping[str, tuple[ScriptedRule, ...]]
    name: str = "default"

    def __post_init__(self):
        for agent, rules in self.rules.items():
            if not rules or rules[-1].condition is not _always:
                raise ValueError(f"rule list for {agent!r} must end with a catch-all rule")

    def match(self, agent: str, state: State) -> ScriptedRule:
        try:
            rules = self.rules[agent]
        except KeyError:
            raise ValueError(f"no scripted rules for agent {agent!r}") from None
        for rule in rules:
            if rule.condition(state):
                return rule
        raise AssertionError("catch-all rule did not match")


def render_response(payload: dict) -> str:
    return "```json\n" + json.dumps(payload, sort_keys=True) + "\n```"


def scripted_generate(rules: ScriptedRuleSet, agent: str, state: State) -> str:
    rule = rules.match(agent, state)
    payload = dict(rule.respond(state))
    payload.setdefault("rationale", f"rule:{rule.name}")
    return render_response(payload)


# ----------------------------------------------------------------------------
# advisor heuristics

OVERFIT_GAP = 0.15
REGRESSION_GAP_RATIO = 1.5
RECALL_SKEW = 0.3
SLOW_PROGRESS = 0.01
WEIGHT_GROWTH = 1.25


def _val_losses(s: State) -> list[float]:
    return [m["val_loss"] for m in s.get("recent_metrics", [])]


def _config(s: State) -> dict:
    return s["current_config"]


def _gap(s: State) -> float:
    cur = s["current_metrics"]
    if s.get("task") == "classification":
        train_acc = cur.get("train_accuracy")
        val_acc = cur["val"].get("accuracy")
        if train_acc is None or val_acc is None:
            return 0.0
        return train_acc - val_acc
    return 0.0


def _overfitting(s: State) -> bool:
    cur = s["current_metrics"]
    if s.get("task") == "classification":
        return _gap(s) > OVERFIT_GAP
    return cur["val_loss"] > REGRESSION_GAP_RATIO * cur["train_loss"] and cur["val_loss"] - cur["train_loss"] > 1e-3


def _regularize(s: State) -> dict:
    cfg = _config(s)
    changes = []
    if "noise" in cfg["feature"]["methods"]:
        changes.append({"scale_numeric": {"field": "noise.sigma", "factor": 1.5}})
    else:
        changes.append({"add_method": {"method": "noise", "params": {"sigma": 0.1}}})
    if cfg["hyper"]["weight_decay"] <= 0.0:
        changes.append({"set_numeric": {"field": "weight_decay", "value": 0.001}})
    else:
        changes.append({"scale_numeric": {"field": "weight_decay", "factor": 2.0}})
    return {"changes": changes,
            "rationale": "Train/validation gap is wide: add input noise and raise weight decay."}


def _plateau(s: State) -> bool:
    v = _val_losses(s)
    rising = len(v) >= 3 and v[-3] < v[-2] < v[-1]
    return rising or s.get("epochs_since_best", 0) >= 2


def _decay_lr(_: State) -> dict:
    return {"changes": [{"scale_numeric": {"field": "learning_rate", "factor": 0.5}}],
            "rationale": "Validation loss stopped improving: halve the learning rate."}


def _recall_skew(s: State) -> bool:
    if s.get("task") != "classification":
        return False
    rec = s["current_metrics"]["val"].get("recall_per_class") or []
    return len(rec) >= 2 and max(rec) - min(rec) > RECALL_SKEW \
        and _config(s)["strategy"]["loss_kind"] == "cross_entropy"


def _focal(s: State) -> dict:
    rec = s["current_metrics"]["val"]["recall_per_class"]
    worst = min(range(len(rec)), key=rec.__getitem__)
    return {"changes": [
        {"set_categorical": {"field": "loss_kind", "value": "focal"}},
        {"set_categorical": {"field": "optimizer_kind", "value": "adamw"}},
        {"scale_numeric": {"field": f"class_weights[{worst}]", "factor": 1.5}},
    ], "rationale": f"Class {worst} recall lags the others: switch to focal loss with AdamW and up-weight it."}


def _slow_start(s: State) -> bool:
    v = _val_losses(s)
    epoch = s["current_metrics"]["epoch"]
    if epoch > 3 or len(v) < 2 or v[-2] <= 0:
        return False
    return (v[-2] - v[-1]) / v[-2] < SLOW_PROGRESS and v[-1] <= v[-2]


def _raise_lr(_: State) -> dict:
    return {"changes": [{"scale_numeric": {"field": "learning_rate", "factor": 2.0}}],
            "rationale": "Early progress is slow: double the learning rate."}


def _weight_growth(s: State) -> bool:
    recent = s.get("recent_metrics", [])
    if len(recent) < 3 or _config(s)["strategy"]["optimizer_kind"] != "adam":
        return False
    first = recent[0]["weight_norm"]
    return first > 0 and recent[-1]["weight_norm"] > WEIGHT_GROWTH * first


def _to_adamw(s: State) -> dict:
    wd = _config(s)["hyper"]["weight_decay"]
    changes = [{"set_categorical": {"field": "optimizer_kind", "value": "adamw"}}]
    if wd <= 0.0:
        changes.append({"set_numeric": {"field": "weight_decay", "value": 0.001}})
    return {"changes": changes, "rationale": "Weights keep growing: use AdamW's decoupled decay."}


def _hold(_: State) -> dict:
    return {"changes": [], "rationale": "Training looks healthy; keep the configuration."}


ADVISOR_RULES = (
    ScriptedRule("augment_on_overfit_gap", _overfitting, _regularize),
    ScriptedRule("lr_decay_on_plateau", _plateau, _decay_lr),
    ScriptedRule("focal_on_recall_skew", _recall_skew, _focal),
    ScriptedRule("lr_raise_on_slow_start", _slow_start, _raise_lr),
    ScriptedRule("adamw_on_weight_growth", _weight_growth, _to_adamw),
    ScriptedRule("no_change", _always, _hold),
)

# ----------------------------------------------------------------------------
# evaluator


def _improved(s: State) -> bool:
    return s["current_metrics"]["val_loss"] < s["baseline_metrics"]["val_loss"]


EVALUATOR_RULES = (
    ScriptedRule("improved", _improved,
                 lambda s: {"success": True, "reason": "Validation loss is below the baseline."}),
    ScriptedRule("not_improved", _always,
                 lambda s: {"success": False, "reason": "Validation loss has not beaten the baseline."}),
)

# ----------------------------------------------------------------------------
# prompt optimizer


def _last(s: State) -> dict | None:
    d = s.get("history_digest") or []
    return d[-1] if d else None


def _failed_change(s: State) -> bool:
    e = _last(s)
    return e is not None and e["change"] != "no_change" and not e["success"]


def _helped_change(s: State) -> bool:
    e = _last(s)
    return e is not None and e["change"] != "no_change" and e["success"]


def _note_failed(s: State) -> dict:
    e = _last(s)
    return {"ops": [{"append": f"Epoch {e['epoch']}: '{e['change']}' did not beat the baseline "
                               f"(val loss {e['val_loss']:.4g}); prefer smaller or different moves."}]}


def _note_helped(s: State) -> dict:
    e = _last(s)
    return {"ops": [{"append": f"Epoch {e['epoch']}: '{e['change']}' kept validation loss below the "
                               f"baseline ({e['val_loss']:.4g}); similar moves are promising."}]}


OPTIMIZER_RULES = (
    ScriptedRule("record_failure", _failed_change, _note_failed),
    ScriptedRule("record_success", _helped_change, _note_helped),
    ScriptedRule("keep_notes", _always, lambda s: {"ops": []}),
)

# ----------------------------------------------------------------------------
# architecture


def _last_iteration(s: State) -> dict | None:
    it = s.get("iterations") or []
    return it[-1] if it else None


def _arch_overfit(s: State) -> bool:
    it = _last_iteration(s)
    if not it or not it.get("epochs"):
        return False
    e = it["epochs"][-1]
    if s.get("task") == "classification":
        ta, va = e.get("train_accuracy"), e.get("val_accuracy")
        return ta is not None and va is not None and ta - va > OVERFIT_GAP
    return e["val_loss"] > REGRESSION_GAP_RATIO * e["train_loss"]


def _arch_underfit(s: State) -> bool:
    it = _last_iteration(s)
    if not it or len(it.get("epochs", [])) < 2:
        return False
    first, last = it["epochs"][0], it["epochs"][-1]
    flat = last["train_loss"] >= 0.9 * first["train_loss"]
    if s.get("task") == "classification":
        return flat and (last.get("train_accuracy") or 0.0) < 0.9
    return flat


def _more_dropout(s: State) -> dict:
    a = dict(s["current_arch"])
    a["dropout"] = round(min(a["dropout"] + 0.2, 0.9), 10)
    return {"arch": a, "rationale": "Large generalization gap: raise dropout."}


def _wider(s: State) -> dict:
    a = dict(s["current_arch"])
    a["layer_widths"] = [min(2 * w, 512) for w in a["layer_widths"]]
    return {"arch": a, "rationale": "Training loss is high and flat: double the layer widths."}


ARCHITECT_RULES = (
    ScriptedRule("dropout_on_overfit", _arch_overfit, _more_dropout),
    ScriptedRule("widen_on_underfit", _arch_underfit, _wider),
    ScriptedRule("keep_arch", _always, lambda s: {"arch": dict(s["current_arch"])}),
)


def default_rules() -> ScriptedRuleSet:
    return ScriptedRuleSet({
        "advisor": ADVISOR_RULES,
        "evaluator": EVALUATOR_RULES,
        "optimizer": OPTIMIZER_RULES,
        "architect": ARCHITECT_RULES,
    })


# ----------------------------------------------------------------------------
# adversarial variants for stress-testing the bounded-update machinery


def _wild(s: State) -> dict:
    epoch = s["current_metrics"]["epoch"]
    k = len(_config(s)["hyper"]["class_weights"])
    moves = [
        {"scale_numeric": {"field": "learning_rate", "factor": 1000.0}},
        {"set_numeric": {"field": "learning_rate", "value": 50.0}},
        {"scale_numeric": {"field": "learning_rate", "factor": 1e-6}},
        {"set_numeric": {"field": "weight_decay", "value": -3.0}},
        {"set_numeric": {"field": "batch_size", "value": 100000}},
        {"scale_numeric": {"field": "batch_size", "factor": 0.001}},
        {"set_numeric": {"field": "class_weights", "value": [1e6] * k}} if k else
        {"set_numeric": {"field": "focal_gamma", "value": 1e9}},
        {"set_numeric": {"field": "class_weights[0]", "value": -5.0}} if k else
        {"scale_numeric": {"field": "weight_decay", "factor": 1e9}},
        {"set_categorical": {"field": "optimizer_kind", "value": "lion"}},
        {"set_numeric": {"field": "width", "value": 100000}},
        {"add_method": {"method": "noise", "params": {"sigma": 1e9}}},
        {"set_numeric": {"field": "noise.sigma", "value": 1e9}},
        {"set_numeric": {"field": "scheduler.gamma", "value": 0.0}},
        {"set_categorical": {"field": "loss_kind", "value": "mse" if k else "focal"}},
    ]
    pick = [moves[(epoch * 7 + i * 3) % len(moves)] for i in range(3)]
    return {"changes": pick, "rationale": "adversarial"}


def _alternate(s: State) -> dict:
    epoch = s["current_metrics"]["epoch"]
    f = 1e3 if epoch % 2 else 1e-3
    return {"changes": [
        {"scale_numeric": {"field": "learning_rate", "factor": f}},
        {"scale_numeric": {"field": "weight_decay", "factor": 1.0 / f}},
        {"scale_numeric": {"field": "learning_rate", "factor": f}},
        {"set_numeric": {"field": "focal_gamma", "value": -1.0 if epoch % 2 else 99.0}},
        {"set_categorical": {"field": "scheduler_kind", "value": "cosine" if epoch % 2 else "step_decay"}},
    ], "rationale": "oscillate"}


def adversarial_rules(variant: int = 0) -> ScriptedRuleSet:
    """Rule sets whose Advisor requests out-of-bound and oversized moves."""
    respond = (_wild, _alternate)[variant % 2]
    base = default_rules().rules
    return ScriptedRuleSet({
        **base,
        "advisor": (ScriptedRule(f"adversarial_{variant}", _always, respond),),
        "architect": (ScriptedRule("wild_arch", _always, lambda s: {"arch": {
                          "layer_widths": [4096] * 9, "dropout": 3.0, "activation": "gelu"}}),),
    }, name=f"adversarial-{variant}")


RULE_SETS = {"default": default_rules, "adversarial-0": lambda: adversarial_rules(0),
             "adversarial-1": lambda: adversarial_rules(1)}


def get_rule_set(name: str) -> ScriptedRuleSet:
    try:
        return RULE_SETS[name]()
    except KeyError:
        raise ValueError(f"unknown scripted rule set {name!r}; choose from {sorted(RULE_SETS)}") from None


class ScriptedBackend:
    def __init__(self, rules: ScriptedRuleSet | None = None):
        self.rules = rules or default_rules()

    def generate(self, request) -> str:
        if request.context is None:
            raise ValueError("scripted backend needs the structured agent state in request.context")
        return scripted_generate(self.rules, request.agent, request.context)

    def close(self) -> None:
        pass
