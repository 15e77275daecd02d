"""Run records, history entries, budgets and the transcript log."""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .config_space import ApplyReport, ConfigDelta, Configuration, FieldChange, ReportEntry
from .datasets import fit_val_split, split_and_standardize
from .trainer.metrics import MetricSet
from .trainer.loop import EpochMetrics
from .trainer.model import Dataset


class BudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class Budget:
    max_configurations: int = 50
    epochs_per_evaluation: int = 10
    iterations: int = 3

    def __post_init__(self):
        if self.max_configurations < 1 or self.epochs_per_evaluation < 1 or self.iterations < 1:
            raise ValueError("budget values must all be >= 1")

    def to_dict(self) -> dict:
        return {"max_configurations": self.max_configurations,
                "epochs_per_evaluation": self.epochs_per_evaluation,
                "iterations": self.iterations}

    @classmethod
    def from_dict(cls, d: dict) -> "Budget":
        unknown = sorted(set(d) - {"max_configurations", "epochs_per_evaluation", "iterations"})
        if unknown:
            raise ValueError(f"unknown budget keys: {unknown}")
        return cls(**d)


class BudgetLedger:
    """Counts trained configurations and refuses to exceed the cap."""

    def __init__(self, budget: Budget):
        self.budget = budget
        self.used = 0

    @property
    def remaining(self) -> int:
        return self.budget.max_configurations - self.used

    def consume(self, n: int = 1) -> None:
        if self.used + n > self.budget.max_configurations:
            raise BudgetExceeded(
                f"training {n} more configuration(s) would exceed the budget of "
                f"{self.budget.max_configurations} (used {self.used})"
            )
        self.used += n


# ----------------------------------------------------------------------------
# serialization helpers


def delta_from_dict(d: dict) -> ConfigDelta:
    changes = []
    for entry in d.get("changes", []):
        (op, body), = entry.items()
        if op == "set_numeric":
            v = body["value"]
            changes.append(FieldChange(op, body["field"], tuple(v) if isinstance(v, list) else v))
        elif op == "scale_numeric":
            changes.append(FieldChange(op, body["field"], body["factor"]))
        elif op == "set_categorical":
            changes.append(FieldChange(op, body["field"], body["value"]))
        elif op == "add_method":
            changes.append(FieldChange(op, body["method"], body.get("params") or None))
        elif op == "remove_method":
            changes.append(FieldChange(op, body["method"]))
        else:
            changes.append(FieldChange("no_change"))
    return ConfigDelta(tuple(changes))


def report_from_dict(d: dict) -> ApplyReport:
    return ApplyReport(
        tuple(ReportEntry(**e) for e in d.get("entries", [])),
        tuple(d.get("changed_fields", [])),
        int(d.get("categorical_flips", 0)),
    )


@dataclass(frozen=True)
class HistoryEntry:
    epoch: int
    config: Configuration
    metrics: EpochMetrics
    delta_applied: ConfigDelta = field(default_factory=ConfigDelta)
    apply_report: ApplyReport = field(default_factory=ApplyReport)
    success_bit: bool = False
    advisor_prompt_notes: tuple[str, ...] | None = None
    rationales: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "config": self.config.to_dict(),
            "metrics": self.metrics.to_dict(),
            "delta_applied": self.delta_applied.to_dict(),
            "apply_report": self.apply_report.to_dict(),
            "success_bit": self.success_bit,
            "advisor_prompt_notes": None if self.advisor_prompt_notes is None else list(self.advisor_prompt_notes),
            "rationales": dict(self.rationales),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HistoryEntry":
        notes = d.get("advisor_prompt_notes")
        return cls(
            epoch=int(d["epoch"]),
            config=Configuration.from_dict(d["config"]),
            metrics=EpochMetrics.from_dict(d["metrics"]),
            delta_applied=delta_from_dict(d.get("delta_applied", {})),
            apply_report=report_from_dict(d.get("apply_report", {})),
            success_bit=bool(d.get("success_bit", False)),
            advisor_prompt_notes=None if notes is None else tuple(notes),
            rationales=dict(d.get("rationales", {})),
        )


def append_history(history: Sequence[HistoryEntry], entry: HistoryEntry) -> tuple[HistoryEntry, ...]:
    """Append-only history: the new entry must carry epoch len(history) + 1."""
    if entry.epoch != len(history) + 1:
        raise ValueError(f"history has {len(history)} entries; cannot append epoch {entry.epoch}")
    return (*history, entry)


@dataclass
class RunRecord:
    method: str
    seed: int
    dataset: str
    dataset_hash: str
    task: dict
    budget: Budget
    history: list[HistoryEntry] = field(default_factory=list)
    initial_config: Configuration | None = None
    final_config: Configuration | None = None
    final_val_loss: float | None = None
    final_test_loss: float | None = None
    final_test_metrics: MetricSet | None = None
    budget_used: int = 0
    status: str = "ok"
    error: str | None = None
    iteration_index: int = 1
    iterations_total: int = 1
    transcript_path: str | None = None
    run_config: dict = field(default_factory=dict)
    iteration_records: list["RunRecord"] = field(default_factory=list)
    search: dict | None = None
    final_prompt_notes: list[str] | None = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "seed": self.seed,
            "dataset": self.dataset,
            "dataset_hash": self.dataset_hash,
            "task": self.task,
            "budget": self.budget.to_dict(),
            "budget_used": self.budget_used,
            "status": self.status,
            "error": self.error,
            "iteration_index": self.iteration_index,
            "iterations_total": self.iterations_total,
            "transcript_path": self.transcript_path,
            "run_config": self.run_config,
            "initial_config": None if self.initial_config is None else self.initial_config.to_dict(),
            "final_config": None if self.final_config is None else self.final_config.to_dict(),
            "final_val_loss": self.final_val_loss,
            "final_test_loss": self.final_test_loss,
            "final_test_metrics": None if self.final_test_metrics is None else self.final_test_metrics.to_dict(),
            "final_prompt_notes": self.final_prompt_notes,
            "history": [h.to_dict() for h in self.history],
            "iteration_records": [r.to_dict() for r in self.iteration_records],
            "search": self.search,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        cfg = lambda x: None if x is None else Configuration.from_dict(x)  # noqa: E731
        return cls(
            method=d["method"],
            seed=int(d["seed"]),
            dataset=d["dataset"],
            dataset_hash=d["dataset_hash"],
            task=d["task"],
            budget=Budget.from_dict(d["budget"]),
            history=[HistoryEntry.from_dict(h) for h in d.get("history", [])],
            initial_config=cfg(d.get("initial_config")),
            final_config=cfg(d.get("final_config")),
            final_val_loss=d.get("final_val_loss"),
            final_test_loss=d.get("final_test_loss"),
            final_test_metrics=None if d.get("final_test_metrics") is None
            else MetricSet.from_dict(d["final_test_metrics"]),
            budget_used=int(d.get("budget_used", 0)),
            status=d.get("status", "ok"),
            error=d.get("error"),
            iteration_index=int(d.get("iteration_index", 1)),
            iterations_total=int(d.get("iterations_total", 1)),
            transcript_path=d.get("transcript_path"),
            run_config=d.get("run_config", {}),
            iteration_records=[RunRecord.from_dict(r) for r in d.get("iteration_records", [])],
            search=d.get("search"),
            final_prompt_notes=d.get("final_prompt_notes"),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1, allow_nan=False,
                          default=_json_default)


def _json_default(o: Any):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


# ----------------------------------------------------------------------------
# transcript


class Transcript:
    """Line-delimited JSON log of every loop step and agent call."""

    def __init__(self, path: Path | str | None = None):
        self.path = Path(path) if path is not None else None
        self.entries: list[dict] = []
        self._seq = 0
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("", encoding="utf-8")

    def log(self, step: str, **fields) -> dict:
        self._seq += 1
        entry = {"seq": self._seq, "step": step, "ts": time.time(), **fields}
        self.entries.append(entry)
        if self.path is not None:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry, sort_keys=True, default=_json_default) + "\n")
        return entry


def read_transcript(path: Path | str) -> list[dict]:
    with Path(path).open(encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


# ----------------------------------------------------------------------------
# data splits shared by every method


@dataclass(frozen=True)
class Splits:
    fit: Dataset
    val: Dataset
    test: Dataset

    @property
    def task(self):
        return self.fit.task

    def digest(self) -> str:
        return "-".join(d.digest()[:8] for d in (self.fit, self.val, self.test))


def make_splits(data: Dataset, ratio: float, split_seed: int, seed: int) -> Splits:
    """80/20 train/test split per (split_seed, seed), then 90/10 fit/validation."""
    train, test = split_and_standardize(data, ratio, [split_seed, seed])
    fit, val = fit_val_split(train, [split_seed, seed, 2])
    return Splits(fit, val, test)


def run_rng(seed: int, index: int) -> np.random.Generator:
    """RNG for the index-th trained configuration of a run (init, shuffling, dropout)."""
    return np.random.default_rng([int(seed), 1, int(index)])
