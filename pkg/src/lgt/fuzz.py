"""Random agent responses for exercising the parsers."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .agents import (
    NoteOp,
    PromptState,
    apply_prompt_delta,
    parse_advisor_response,
    parse_architect_response,
    parse_evaluator_response,
    parse_optimizer_response,
)
from .agents.prompt import NOTE_CHAR_CAP
from .config_space import (
    ACTIVATIONS,
    AUG_METHODS,
    ConfigurationSpace,
    TaskType,
    apply_delta,
    default_config,
    validate,
)

_FIELDS = ("learning_rate", "weight_decay", "batch_size", "dropout", "class_weights[1]", "class_weights[9]",
           "focal_gamma", "loss_kind", "optimizer_kind", "scheduler_kind", "width", "bogus", "",
           "noise.sigma", "scheduler.gamma", "layer_widths[0]", "activation")
_VALUES = (0.5, -3, 1e308, -1e308, 0, 2, "nan", "Infinity", None, True, "adamw", "focal", "cosine",
           "quantum", [], {}, [1, 2], "0.1", 1e-320, 10 ** 40)
_JUNK = ("", "{", "}", "{{}}", "```json\n", "```", "null", "[]", "\x00", "﻿", "{\"a\":", "\\",
         "NaN", "changes", "success", "ops", "arch", "🙂", "\n", "{" * 50, "]" * 20)


def _value(rng: np.random.Generator):
    return _VALUES[int(rng.integers(len(_VALUES)))]


def _advisor_obj(rng: np.random.Generator) -> dict:
    ops = []
    for _ in range(int(rng.integers(0, 5))):
        kind = int(rng.integers(7))
        f = _FIELDS[int(rng.integers(len(_FIELDS)))]
        if kind == 0:
            ops.append({"set_numeric": {"field": f, "value": _value(rng)}})
        elif kind == 1:
            ops.append({"scale_numeric": {"field": f, "factor": _value(rng)}})
        elif kind == 2:
            ops.append({"set_categorical": {"field": f, "value": _value(rng)}})
        elif kind == 3:
            m = AUG_METHODS[int(rng.integers(len(AUG_METHODS)))] if rng.random() < 0.7 else "mixup"
            ops.append({"add_method": {"method": m, "params": {"sigma": _value(rng)}}})
        elif kind == 4:
            ops.append({"remove_method": {"method": _value(rng)}})
        elif kind == 5:
            ops.append("no_change")
        else:
            ops.append(_value(rng))
    return {"changes": ops, "rationale": _value(rng)}


def _evaluator_obj(rng: np.random.Generator) -> dict:
    return {"success": _value(rng), "reason": _value(rng)}


def _optimizer_obj(rng: np.random.Generator) -> dict:
    ops = []
    for _ in range(int(rng.integers(0, 5))):
        note = "x" * int(rng.integers(0, 600)) if rng.random() < 0.5 else _value(rng)
        if rng.random() < 0.5:
            ops.append({"append": note})
        else:
            ops.append({"replace": {"index": _value(rng), "note": note}})
    return {"ops": ops}


def _architect_obj(rng: np.random.Generator) -> dict:
    widths = [int(w) for w in rng.integers(-100, 5000, size=int(rng.integers(0, 12)))]
    if rng.random() < 0.2:
        widths = _value(rng)
    act = ACTIVATIONS[int(rng.integers(len(ACTIVATIONS)))] if rng.random() < 0.6 else _value(rng)
    return {"arch": {"layer_widths": widths, "dropout": _value(rng), "activation": act}}


_MAKERS = (_advisor_obj, _evaluator_obj, _optimizer_obj, _architect_obj)


def _corrupt(text: str, rng: np.random.Generator) -> str:
    mode = int(rng.integers(6))
    if mode == 0 or not text:
        return text
    if mode == 1:
        return text[: int(rng.integers(len(text)))]
    if mode == 2:
        i = int(rng.integers(len(text)))
        return text[:i] + _JUNK[int(rng.integers(len(_JUNK)))] + text[i:]
    if mode == 3:
        return f"Sure! Here is my answer:\n```json\n{text}\n```\nHope that helps."
    if mode == 4:
        return "{" * int(rng.integers(1, 3000)) + text
    return "".join(chr(int(c)) for c in rng.integers(0, 0x2FF, size=int(rng.integers(0, 200))))


def fuzz_text(rng: np.random.Generator) -> str:
    """One random response: a plausible object, possibly damaged, or pure junk."""
    if rng.random() < 0.1:
        return "".join(_JUNK[int(i)] for i in rng.integers(len(_JUNK), size=int(rng.integers(0, 30))))
    obj = _MAKERS[int(rng.integers(len(_MAKERS)))](rng)
    try:
        text = json.dumps(obj, allow_nan=True)
    except (TypeError, ValueError):
        text = str(obj)
    return _corrupt(text, rng)


@dataclass
class FuzzReport:
    iterations: int = 0
    aborts: int = 0
    invalid: int = 0
    failures: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.aborts == 0 and self.invalid == 0


def check_outputs(text: str, space: ConfigurationSpace, prompt: PromptState) -> list[str]:
    """Run every parser on ``text`` and return contract violations (empty when fine)."""
    problems = []
    config = default_config(space)
    adv = parse_advisor_response(text, space)
    new, _ = apply_delta(config, adv.delta, space)
    if not validate(new, space).ok:
        problems.append("advisor delta produced an invalid configuration")
    ev = parse_evaluator_response(text)
    if not isinstance(ev.success, bool):
        problems.append("evaluator success is not a boolean")
    pd = parse_optimizer_response(text, prompt)
    if len(pd.ops) > 2 or any(not isinstance(o, NoteOp) or len(o.note) > NOTE_CHAR_CAP or not o.note
                              for o in pd.ops):
        problems.append("optimizer ops violate the note limits")
    updated = apply_prompt_delta(prompt, pd)
    if len(updated.guidance_notes) > updated.capacity:
        problems.append("prompt exceeds its note capacity")
    arch = parse_architect_response(text, space, config.arch)
    if arch.arch is not None and not validate(default_config(space).__class__(
            arch.arch, config.feature, config.strategy, config.hyper), space).ok:
        problems.append("architect proposal is outside the architecture bounds")
    return problems


def fuzz_parsers(iterations: int, seed: int = 0) -> FuzzReport:
    rng = np.random.default_rng(seed)
    space = ConfigurationSpace.for_task(TaskType.classification(3))
    full = PromptState(PromptState.for_agent("advisor").base_text, tuple(f"note {i}" for i in range(8)))
    report = FuzzReport()
    for i in range(iterations):
        text = fuzz_text(rng)
        prompt = full if i % 2 else PromptState.for_agent("advisor")
        report.iterations += 1
        try:
            problems = check_outputs(text, space, prompt)
        except Exception as exc:  # any escape is an abort
            report.aborts += 1
            report.failures.append(f"{type(exc).__name__}: {exc} on {text[:80]!r}")
            continue
        if problems:
            report.invalid += 1
            report.failures.append(f"{problems} on {text[:80]!r}")
    return report
