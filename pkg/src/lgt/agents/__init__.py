from .parsing import (
    ArchResponse,
    ConfigDeltaResponse,
    EvalResponse,
    NoteOp,
    PromptDeltaResponse,
    apply_prompt_delta,
    iter_json_objects,
    parse_advisor_response,
    parse_architect_response,
    parse_evaluator_response,
    parse_optimizer_response,
)
from .prompt import PromptState, base_text, render_messages, render_prompt, response_schema
from .state import (
    AdvisorState,
    ArchitectState,
    DigestEntry,
    EvaluatorState,
    PromptOptimizerState,
    build_advisor_state,
    build_evaluator_state,
    build_optimizer_state,
)

__all__ = [
    "ArchResponse", "ConfigDeltaResponse", "EvalResponse", "NoteOp", "PromptDeltaResponse",
    "apply_prompt_delta", "iter_json_objects", "parse_advisor_response", "parse_architect_response",
    "parse_evaluator_response", "parse_optimizer_response", "PromptState", "base_text",
    "render_messages", "render_prompt", "response_schema", "AdvisorState", "ArchitectState",
    "DigestEntry", "EvaluatorState", "PromptOptimizerState", "build_advisor_state",
    "build_evaluator_state", "build_optimizer_state",
]
