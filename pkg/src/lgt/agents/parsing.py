"""Total parsers for untrusted agent text.

Every parser returns a well-formed response object; malformed input degrades
to the conservative default (no change, success=False, no prompt ops).
"""
from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass, field
from typing import Any, Iterator

from ..config_space import (
    AUG_METHODS,
    METHOD_PARAMS,
    ArchSpec,
    ConfigDelta,
    ConfigurationSpace,
    FieldChange,
    add_method,
    is_known_field,
    parse_field,
)
from .prompt import NOTE_CAPACITY, NOTE_CHAR_CAP, PromptState

log = logging.getLogger(__name__)

MAX_TEXT_CHARS = 200_000
MAX_PROMPT_OPS = 2
PARSE_FAILURE = "parse-failure"
_OBJECT_START = re.compile(r"\{(?=\s*[\"}])")


def iter_json_objects(text: str) -> Iterator[dict]:
    """Yield every JSON object decodable at some '{' in ``text``, left to right."""
    if not isinstance(text, str):
        return
    text = text[:MAX_TEXT_CHARS]
    dec = json.JSONDecoder()
    # an object can only open with '{' followed by a key or '}'
    for m in _OBJECT_START.finditer(text):
        try:
            obj, _ = dec.raw_decode(text, m.start())
        except (ValueError, RecursionError):
            continue
        if isinstance(obj, dict):
            yield obj


def _is_number(v: Any) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _text(v: Any) -> str:
    return v if isinstance(v, str) else ""


# ----------------------------------------------------------------------------
# advisor


@dataclass(frozen=True)
class ConfigDeltaResponse:
    delta: ConfigDelta
    rationale: str = ""
    warnings: tuple[str, ...] = ()
    parsed: bool = True

    def to_dict(self) -> dict:
        return {"delta": self.delta.to_dict(), "rationale": self.rationale,
                "warnings": list(self.warnings), "parsed": self.parsed}


_DELTA_OPS = FieldChange.OPS


def _looks_like_delta(obj: dict) -> bool:
    return isinstance(obj.get("changes"), list) or any(k in obj for k in _DELTA_OPS)


def _parse_change(op: str, body: Any, space: ConfigurationSpace, warn: list[str]) -> FieldChange | None:
    if op == "no_change":
        return None
    if not isinstance(body, dict):
        warn.append(f"{op}: body is not an object")
        return None
    if op in ("set_numeric", "scale_numeric"):
        name = body.get("field")
        if not isinstance(name, str) or not is_known_field(name, space) \
                or parse_field(name)[0] in space.categorical:
            warn.append(f"{op}: unknown numeric field {name!r}")
            return None
        if op == "scale_numeric":
            f = body.get("factor")
            if not _is_number(f) or f <= 0:
                warn.append(f"scale_numeric {name}: factor must be a positive number, got {f!r}")
                return None
            return FieldChange("scale_numeric", name, f)
        v = body.get("value")
        vector = parse_field(name)[0] in ("class_weights", "width", "layer_widths") and parse_field(name)[1] is None
        if isinstance(v, list):
            if not vector or not v or not all(_is_number(x) for x in v):
                warn.append(f"set_numeric {name}: invalid list value")
                return None
            return FieldChange("set_numeric", name, tuple(v))
        if not _is_number(v):
            warn.append(f"set_numeric {name}: value must be a finite number, got {v!r}")
            return None
        return FieldChange("set_numeric", name, v)
    if op == "set_categorical":
        name, value = body.get("field"), body.get("value")
        allowed = space.categorical.get(name) if isinstance(name, str) else None
        if allowed is None:
            warn.append(f"set_categorical: unknown field {name!r}")
            return None
        if value not in allowed or (name == "loss_kind" and value not in space.task.losses):
            warn.append(f"set_categorical {name}: {value!r} out of vocabulary {list(allowed)}")
            return None
        return FieldChange("set_categorical", name, value)
    if op == "add_method":
        m = body.get("method")
        if m not in space.methods:
            warn.append(f"add_method: {m!r} not an allowed method {list(space.methods)}")
            return None
        params = body.get("params")
        clean: dict[str, Any] = {}
        if params is not None:
            if not isinstance(params, dict):
                warn.append(f"add_method {m}: params is not an object")
            else:
                names = {p for p, _ in METHOD_PARAMS[m]}
                for k in sorted(params):
                    if k in names and _is_number(params[k]):
                        clean[k] = params[k]
                    else:
                        warn.append(f"add_method {m}: ignored parameter {k!r}")
        return add_method(m, clean)
    if op == "remove_method":
        m = body.get("method")
        if m not in AUG_METHODS:
            warn.append(f"remove_method: unknown method {m!r}")
            return None
        return FieldChange("remove_method", m)
    warn.append(f"unknown op {op!r}")
    return None


def _parse_entry(entry: Any, space: ConfigurationSpace, warn: list[str]) -> list[FieldChange]:
    if not isinstance(entry, dict):
        warn.append("change entry is not an object")
        return []
    out = []
    for key in entry:
        if key in _DELTA_OPS:
            ch = _parse_change(key, entry[key], space, warn)
            if ch is not None:
                out.append(ch)
        else:
            warn.append(f"ignored unknown key {key!r}")
    return out


def parse_advisor_response(text: str, space: ConfigurationSpace) -> ConfigDeltaResponse:
    try:
        for obj in iter_json_objects(text):
            if not _looks_like_delta(obj):
                continue
            warn: list[str] = []
            changes: list[FieldChange] = []
            if isinstance(obj.get("changes"), list):
                for entry in obj["changes"]:
                    changes.extend(_parse_entry(entry, space, warn))
                extra = [k for k in obj if k not in ("changes", "rationale", "reason")]
                warn.extend(f"ignored unknown key {k!r}" for k in extra)
            else:
                changes = _parse_entry({k: v for k, v in obj.items() if k in _DELTA_OPS}, space, warn)
            rationale = _text(obj.get("rationale")) or _text(obj.get("reason"))
            return ConfigDeltaResponse(ConfigDelta(tuple(changes)), rationale, tuple(warn), True)
    except Exception as exc:  # parsers must be total
        log.warning("advisor parse error: %s", exc)
    return ConfigDeltaResponse(ConfigDelta.no_change(), PARSE_FAILURE, ("no delta object found",), False)


# ----------------------------------------------------------------------------
# evaluator


@dataclass(frozen=True)
class EvalResponse:
    success: bool
    rationale: str = ""
    parsed: bool = True

    def to_dict(self) -> dict:
        return {"success": self.success, "rationale": self.rationale, "parsed": self.parsed}


def parse_evaluator_response(text: str) -> EvalResponse:
    try:
        for obj in iter_json_objects(text):
            if "success" in obj:
                rationale = _text(obj.get("reason")) or _text(obj.get("rationale"))
                return EvalResponse(obj["success"] is True, rationale, True)
    except Exception as exc:
        log.warning("evaluator parse error: %s", exc)
    return EvalResponse(False, PARSE_FAILURE, False)


# ----------------------------------------------------------------------------
# prompt optimizer


@dataclass(frozen=True)
class NoteOp:
    kind: str  # append | replace
    note: str
    index: int | None = None
    evicts: bool = False

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"kind": self.kind, "note": self.note}
        if self.index is not None:
            d["index"] = self.index
        if self.evicts:
            d["evicts"] = True
        return d


@dataclass(frozen=True)
class PromptDeltaResponse:
    ops: tuple[NoteOp, ...] = ()
    rationale: str = ""
    warnings: tuple[str, ...] = ()
    parsed: bool = True

    def to_dict(self) -> dict:
        return {"ops": [o.to_dict() for o in self.ops], "rationale": self.rationale,
                "warnings": list(self.warnings), "parsed": self.parsed}


def _clip_note(note: str, warn: list[str]) -> str:
    note = " ".join(note.split())
    if len(note) > NOTE_CHAR_CAP:
        warn.append(f"note truncated from {len(note)} to {NOTE_CHAR_CAP} characters")
        note = note[:NOTE_CHAR_CAP]
    return note


def _parse_note_op(entry: Any, warn: list[str]) -> list[NoteOp]:
    if not isinstance(entry, dict):
        warn.append("note op is not an object")
        return []
    out = []
    if "append" in entry:
        if isinstance(entry["append"], str) and entry["append"].strip():
            out.append(NoteOp("append", _clip_note(entry["append"], warn)))
        else:
            warn.append("append needs a non-empty string")
    if "replace" in entry:
        body = entry["replace"]
        index = body.get("index") if isinstance(body, dict) else None
        if isinstance(index, int) and not isinstance(index, bool) and index >= 0 \
                and isinstance(body.get("note"), str) and body["note"].strip():
            out.append(NoteOp("replace", _clip_note(body["note"], warn), body["index"]))
        else:
            warn.append("replace needs {index: non-negative int, note: string}")
    return out


def parse_optimizer_response(text: str, prompt: PromptState | None = None) -> PromptDeltaResponse:
    """Extract note operations; with ``prompt`` given, appends to a full list are marked as evicting."""
    try:
        for obj in iter_json_objects(text):
            if not any(k in obj for k in ("ops", "append", "replace")):
                continue
            warn: list[str] = []
            ops: list[NoteOp] = []
            if isinstance(obj.get("ops"), list):
                for entry in obj["ops"]:
                    ops.extend(_parse_note_op(entry, warn))
            else:
                ops.extend(_parse_note_op({k: obj[k] for k in ("append", "replace") if k in obj}, warn))
            if len(ops) > MAX_PROMPT_OPS:
                warn.append(f"kept first {MAX_PROMPT_OPS} of {len(ops)} note ops")
                ops = ops[:MAX_PROMPT_OPS]
            if prompt is not None:
                n = len(prompt.guidance_notes)
                marked = []
                for op in ops:
                    if op.kind == "append":
                        op = NoteOp("append", op.note, None, n >= prompt.capacity)
                        n = min(n + 1, prompt.capacity)
                    marked.append(op)
                ops = marked
            rationale = _text(obj.get("rationale")) or _text(obj.get("reason"))
            return PromptDeltaResponse(tuple(ops), rationale, tuple(warn), True)
    except Exception as exc:
        log.warning("optimizer parse error: %s", exc)
    return PromptDeltaResponse((), PARSE_FAILURE, ("no note-op object found",), False)


def apply_prompt_delta(prompt: PromptState, delta: PromptDeltaResponse,
                       warnings: list[str] | None = None) -> PromptState:
    notes = list(prompt.guidance_notes)
    for op in delta.ops:
        if op.kind == "append":
            notes.append(op.note)
            if len(notes) > prompt.capacity:
                notes.pop(0)
        elif op.kind == "replace":
            if op.index is not None and 0 <= op.index < len(notes):
                notes[op.index] = op.note
            else:
                msg = f"replace index {op.index} out of range for {len(notes)} notes; ignored"
                log.info(msg)
                if warnings is not None:
                    warnings.append(msg)
    if notes == list(prompt.guidance_notes):
        return prompt
    return PromptState(prompt.base_text, tuple(notes), prompt.capacity)


# ----------------------------------------------------------------------------
# architecture


@dataclass(frozen=True)
class ArchResponse:
    arch: ArchSpec | None
    rationale: str = ""
    warnings: tuple[str, ...] = ()
    parsed: bool = True

    def to_dict(self) -> dict:
        return {"arch": None if self.arch is None else self.arch.to_dict(), "rationale": self.rationale,
                "warnings": list(self.warnings), "parsed": self.parsed}


def parse_architect_response(text: str, space: ConfigurationSpace, previous: ArchSpec) -> ArchResponse:
    """Parse and clamp an architecture proposal into the feasible set."""
    try:
        for obj in iter_json_objects(text):
            body = obj.get("arch") if isinstance(obj.get("arch"), dict) else obj
            widths = body.get("layer_widths")
            if not isinstance(widths, list) or not widths or not all(_is_number(w) for w in widths):
                continue
            warn: list[str] = []
            wb, nb, db = space.numeric["width"], space.numeric["n_layers"], space.numeric["dropout"]
            ws = [int(round(wb.clamp(float(w)))) for w in widths]
            if ws != [int(round(w)) for w in widths]:
                warn.append(f"widths clamped into [{wb.lower:g}, {wb.upper:g}]")
            n = int(nb.clamp(len(ws)))
            if n != len(ws):
                warn.append(f"layer count {len(ws)} clamped to {n}")
                ws = (ws + [ws[-1]] * n)[:n]
            dropout = body.get("dropout", previous.dropout)
            if not _is_number(dropout):
                warn.append("invalid dropout; kept previous")
                dropout = previous.dropout
            d = db.clamp(float(dropout))
            if d != dropout:
                warn.append(f"dropout clamped to {d:g}")
            act = body.get("activation", previous.activation)
            if act not in space.categorical["activation"]:
                warn.append(f"activation {act!r} not allowed; kept previous")
                act = previous.activation
            rationale = _text(obj.get("rationale")) or _text(obj.get("reason"))
            return ArchResponse(ArchSpec(tuple(ws), d, act), rationale, tuple(warn), True)
    except Exception as exc:
        log.warning("architect parse error: %s", exc)
    return ArchResponse(None, PARSE_FAILURE, ("no architecture object found",), False)
