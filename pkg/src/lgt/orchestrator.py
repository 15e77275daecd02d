"""The epoch-level tuning loop and the between-iteration architecture pass."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

from .agents import (
    ArchitectState,
    DigestEntry,
    PromptState,
    apply_prompt_delta,
    build_advisor_state,
    build_evaluator_state,
    build_optimizer_state,
    parse_advisor_response,
    parse_architect_response,
    parse_evaluator_response,
    parse_optimizer_response,
    render_messages,
)
from .agents.state import FROZEN_IN_ITERATION
from .backend import FAILURE_SENTINEL, BackendConfig, GenerationRequest
from .config_space import (
    ApplyReport,
    ArchSpec,
    ConfigDelta,
    Configuration,
    ConfigurationSpace,
    ReportEntry,
    apply_delta,
    default_config,
    parse_field,
    validate,
)
from .records import (
    Budget,
    BudgetLedger,
    HistoryEntry,
    RunRecord,
    Splits,
    Transcript,
    append_history,
    run_rng,
)
from .trainer import TrainingError, build_model, evaluate, train_epoch

log = logging.getLogger(__name__)

STEPS = ("train", "advise", "apply", "evaluate", "prompt_update", "history_append")


@dataclass
class AgentCaller:
    """Renders a prompt, calls the backend, and logs the exchange."""

    backend: object
    backend_config: BackendConfig = field(default_factory=BackendConfig)
    transcript: Transcript | None = None
    _last: dict | None = field(default=None, repr=False)

    def __call__(self, prompt: PromptState, state) -> str:
        system, user = render_messages(prompt, state)
        cfg = self.backend_config
        request = GenerationRequest(
            system_text=system, user_text=user, temperature=cfg.temperature,
            max_tokens=cfg.max_tokens, model_name=cfg.model_name,
            agent=state.kind, context=state.to_dict(),
        )
        t_start = time.time()
        try:
            text = self.backend.generate(request)
        except Exception as exc:  # a misbehaving backend degrades to the fallback path
            log.warning("%s backend call failed: %s", state.kind, exc)
            text = FAILURE_SENTINEL
        self._last = {"agent": state.kind, "request": {"system": system, "user": user,
                                                       "temperature": request.temperature,
                                                       "max_tokens": request.max_tokens},
                      "response": text, "t_start": t_start, "t_end": time.time()}
        return text

    def log(self, step: str, iteration: int, epoch: int | None, parse: dict | None = None, **extra) -> None:
        if self.transcript is None:
            return
        call = self._last if parse is not None else None
        self._last = None
        self.transcript.log(step, iteration=iteration, epoch=epoch,
                            **(call or {}), **({"parse": parse} if parse is not None else {}), **extra)


def _freeze_arch(delta: ConfigDelta) -> tuple[ConfigDelta, list[ReportEntry]]:
    """Drop advisor changes to architecture fields; those only move between iterations."""
    kept, dropped = [], []
    for ch in delta.changes:
        base = parse_field(ch.field or "")[0] if ch.field else ""
        if ch.op != "no_change" and base in FROZEN_IN_ITERATION + ("layer_widths",):
            dropped.append(ReportEntry(ch.field, "dropped", ch.value, None,
                                       "architecture is fixed within an iteration"))
        else:
            kept.append(ch)
    return ConfigDelta(tuple(kept)), dropped


def run_iteration(config: Configuration, space: ConfigurationSpace, splits: Splits, caller: AgentCaller,
                  *, epochs: int, seed: int, iteration: int, prompt: PromptState,
                  method: str = "lgt", dataset: str = "", budget: Budget | None = None,
                  record_time: bool = False) -> tuple[RunRecord, PromptState]:
    """One iteration of the epoch loop with a fixed architecture.

    Per epoch: train, advise, apply, evaluate, prompt update, history append.
    The evaluator's baseline is this iteration's epoch-1 snapshot.
    """
    budget = budget or Budget(epochs_per_evaluation=epochs)
    rng = run_rng(seed, iteration - 1)
    record = RunRecord(method=method, seed=seed, dataset=dataset, dataset_hash=splits.digest(),
                       task=splits.task.to_dict(), budget=budget, initial_config=config,
                       iteration_index=iteration, budget_used=1)
    model = build_model(config.arch, splits.fit.n_features, splits.task.output_dim, rng)
    opt_state = None
    history: tuple[HistoryEntry, ...] = ()
    digest: list[DigestEntry] = []
    baseline = None
    c_t = config

    for t in range(1, epochs + 1):
        # 1. train
        try:
            model, opt_state, m_t = train_epoch(model, splits.fit, splits.val, c_t, t, epochs, opt_state, rng,
                                                test=splits.test, record_time=record_time)
        except TrainingError as exc:
            record.status, record.error = "failed", str(exc)
            caller.log("train", iteration, t, error=str(exc))
            break
        caller.log("train", iteration, t, train_loss=m_t.train_loss, val_loss=m_t.val_loss)
        if baseline is None:
            baseline = (m_t, c_t)

        # 2. advise
        adv_state = build_advisor_state([h.metrics for h in history] + [m_t], c_t, space, epochs)
        adv = parse_advisor_response(caller(prompt, adv_state), space)
        caller.log("advise", iteration, t, parse=adv.to_dict())

        # 3. apply
        delta, frozen = _freeze_arch(adv.delta)
        c_next, report = apply_delta(c_t, delta, space)
        if frozen:
            report = ApplyReport(tuple(frozen) + report.entries, report.changed_fields, report.categorical_flips)
        check = validate(c_next, space)
        if not check.ok:  # apply_delta guarantees feasibility; keep the last valid config if not
            log.error("applied configuration failed validation: %s", check.violations)
            c_next, report = c_t, ApplyReport(report.entries, (), 0)
        caller.log("apply", iteration, t, delta=delta.to_dict(), report=report.to_dict(),
                   next_config=c_next.to_dict())

        # 4. evaluate
        ev_state = build_evaluator_state(m_t, c_t, baseline[0], baseline[1], space.task.kind)
        ev = parse_evaluator_response(caller(PromptState.for_agent("evaluator"), ev_state))
        caller.log("evaluate", iteration, t, parse=ev.to_dict())

        # 5. prompt update
        digest.append(DigestEntry(t, delta.describe(), ev.success, m_t.train_loss, m_t.val_loss,
                                  len(report.entries)))
        opt_state_view = build_optimizer_state(digest, m_t, prompt.guidance_notes, prompt.capacity)
        pd = parse_optimizer_response(
            caller(PromptState.for_agent("optimizer"), opt_state_view),
            prompt,
        )
        warnings: list[str] = []
        new_prompt = apply_prompt_delta(prompt, pd, warnings)
        caller.log("prompt_update", iteration, t, parse=pd.to_dict(), apply_warnings=warnings,
                   notes=list(new_prompt.guidance_notes))

        # 6. history append
        entry = HistoryEntry(
            epoch=t, config=c_t, metrics=m_t, delta_applied=delta, apply_report=report,
            success_bit=ev.success, advisor_prompt_notes=prompt.guidance_notes,
            rationales={"advisor": adv.rationale, "evaluator": ev.rationale, "optimizer": pd.rationale},
        )
        history = append_history(history, entry)
        caller.log("history_append", iteration, t, history_length=len(history))
        c_t, prompt = c_next, new_prompt

    record.history = list(history)
    record.final_config = c_t
    record.final_prompt_notes = list(prompt.guidance_notes)
    if history:
        record.final_val_loss = history[-1].metrics.val_loss
    if record.ok:
        record.final_test_loss, record.final_test_metrics = evaluate(model, splits.test)
    return record, prompt


def _iteration_digest(rec: RunRecord) -> dict:
    return {
        "iteration": rec.iteration_index,
        "arch": rec.initial_config.arch.to_dict() if rec.initial_config else None,
        "status": rec.status,
        "final_val_loss": None if rec.final_val_loss is None else round(rec.final_val_loss, 6),
        "epochs": [
            {"epoch": h.epoch, "train_loss": round(h.metrics.train_loss, 6),
             "val_loss": round(h.metrics.val_loss, 6),
             "train_accuracy": h.metrics.train_metric_set.accuracy,
             "val_accuracy": h.metrics.metric_set.accuracy}
            for h in rec.history
        ],
    }


def _arch_space(space: ConfigurationSpace) -> dict:
    s = space.summary()
    return {k: s[k] for k in ("width", "n_layers", "dropout", "activation") if k in s}


def optimize_architecture(iteration_history: Sequence[RunRecord], backend, space: ConfigurationSpace,
                          *, caller: AgentCaller | None = None) -> ArchSpec:
    """Propose the next architecture from every completed iteration.

    The response is clamped into the architecture bounds; anything that
    cannot be parsed keeps the previous architecture.
    """
    if not iteration_history:
        raise ValueError("architecture optimization needs at least one completed iteration")
    last = iteration_history[-1]
    previous = (last.initial_config or default_config(space)).arch
    caller = caller or AgentCaller(backend)
    state = ArchitectState(previous, tuple(_iteration_digest(r) for r in iteration_history),
                           _arch_space(space), space.task.kind)
    text = caller(PromptState.for_agent("architect"), state)
    resp = parse_architect_response(text, space, previous)
    arch = resp.arch or previous
    probe = replace(last.initial_config or default_config(space), arch=arch)
    if not validate(probe, space).ok:
        arch = previous
    caller.log("architect", last.iteration_index, None, parse=resp.to_dict(), arch=arch.to_dict())
    return arch


def select_iteration(records: Sequence[RunRecord]) -> RunRecord:
    """Best completed iteration by final validation loss (earliest on ties)."""
    ok = [r for r in records if r.ok and r.final_val_loss is not None]
    if not ok:
        return records[-1]
    return min(ok, key=lambda r: (r.final_val_loss, r.iteration_index))


def run_lgt(splits: Splits, space: ConfigurationSpace, backend, seed: int, *,
            budget: Budget | None = None, backend_config: BackendConfig | None = None,
            transcript: Transcript | None = None, dataset: str = "",
            initial: Configuration | None = None, record_time: bool = False,
            ledger: BudgetLedger | None = None) -> RunRecord:
    """Run every outer iteration and return the selected iteration's record.

    Configuration and advisor prompt carry over between iterations; the
    architecture is re-proposed between iterations. The returned record
    holds all iterations under ``iteration_records``.
    """
    budget = budget or Budget()
    ledger = ledger or BudgetLedger(budget)
    caller = AgentCaller(backend, backend_config or BackendConfig(), transcript)
    config = initial or default_config(space)
    prompt = PromptState.for_agent("advisor")
    records: list[RunRecord] = []
    n_iter = min(budget.iterations, ledger.remaining)

    for i in range(1, n_iter + 1):
        if records:
            arch = optimize_architecture(records, backend, space, caller=caller)
            config = replace(records[-1].final_config, arch=arch)
        ledger.consume()
        rec, prompt = run_iteration(config, space, splits, caller, epochs=budget.epochs_per_evaluation,
                                    seed=seed, iteration=i, prompt=prompt, dataset=dataset,
                                    budget=budget, record_time=record_time)
        records.append(rec)
        if not rec.ok:
            break

    chosen = select_iteration(records)
    failed = next((r for r in records if not r.ok), None)
    out = replace(chosen, iteration_records=records, iterations_total=len(records),
                  budget_used=ledger.used)
    if failed is not None:
        out.status, out.error = "failed", failed.error
    return out
