"""Prompt assets, the evolving Advisor prompt and deterministic rendering."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

log = logging.getLogger(__name__)

NOTE_CAPACITY = 8
NOTE_CHAR_CAP = 280
PROMPT_CHAR_BUDGET = 16000
PROMPT_VERSION = 1
AGENT_KINDS = ("advisor", "evaluator", "optimizer", "architect")


@lru_cache(maxsize=None)
def base_text(kind: str, version: int = PROMPT_VERSION) -> str:
    if kind not in AGENT_KINDS:
        raise ValueError(f"unknown agent kind {kind!r}")
    return resources.files("lgt.agents").joinpath(f"assets/{kind}_v{version}.txt").read_text("utf-8").strip()


@lru_cache(maxsize=None)
def response_schema(kind: str) -> dict:
    path = resources.files("lgt.agents").joinpath(f"assets/{kind}_response.schema.json")
    return json.loads(path.read_text("utf-8"))


@dataclass(frozen=True)
class PromptState:
    base_text: str
    guidance_notes: tuple[str, ...] = ()
    capacity: int = NOTE_CAPACITY

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("note capacity must be >= 1")
        if len(self.guidance_notes) > self.capacity:
            object.__setattr__(self, "guidance_notes", tuple(self.guidance_notes[-self.capacity:]))

    @classmethod
    def for_agent(cls, kind: str, capacity: int = NOTE_CAPACITY) -> "PromptState":
        return cls(base_text(kind), (), capacity)

    def to_dict(self) -> dict:
        return {"guidance_notes": list(self.guidance_notes), "capacity": self.capacity}


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False)


def _notes_block(notes) -> str:
    if not notes:
        return ""
    return "Guidance notes:\n" + "\n".join(f"{i}. {n}" for i, n in enumerate(notes, start=1))


def _state_block(state_dict: dict) -> str:
    return "Current state (JSON):\n" + canonical_json(state_dict)


def render_messages(prompt: PromptState, state, budget: int = PROMPT_CHAR_BUDGET) -> tuple[str, str]:
    """Split rendering into (system text, user text).

    When the total exceeds ``budget`` characters, the oldest entries of the
    state's elidable list (recent metrics, digest, iterations) go first.
    """
    system = prompt.base_text
    notes = _notes_block(prompt.guidance_notes)
    if notes:
        system = f"{system}\n\n{notes}"
    d = state.to_dict() if hasattr(state, "to_dict") else dict(state)
    key = getattr(state, "elide_key", None)
    user = _state_block(d)
    dropped = 0
    while len(system) + 2 + len(user) > budget and key and d.get(key):
        d = dict(d)
        d[key] = d[key][1:]
        dropped += 1
        d[f"elided_{key}"] = dropped
        user = _state_block(d)
    room = budget - len(system) - 2
    if len(user) > room:
        user = user[:max(room, 0)]
    return system, user


def render_prompt(prompt: PromptState, state, budget: int = PROMPT_CHAR_BUDGET) -> str:
    system, user = render_messages(prompt, state, budget)
    return f"{system}\n\n{user}"[:budget]
