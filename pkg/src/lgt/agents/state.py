"""What each agent sees: structured state built from metrics, configs and history."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from ..config_space import ArchSpec, Configuration, ConfigurationSpace
from ..trainer.loop import EpochMetrics

METRIC_WINDOW = 5
FROZEN_IN_ITERATION = ("width", "n_layers", "dropout", "activation")


def _tunable_space(space: ConfigurationSpace) -> dict:
    s = space.summary()
    for name in FROZEN_IN_ITERATION:
        if name in s:
            s[name]["frozen"] = True
    return s


@dataclass(frozen=True)
class AdvisorState:
    current_metrics: EpochMetrics
    recent_metrics: tuple[EpochMetrics, ...]
    current_config: Configuration
    space_summary: dict
    task: str
    total_epochs: int
    best_val_loss: float
    epochs_since_best: int

    kind = "advisor"
    elide_key = "recent_metrics"

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "epoch": self.current_metrics.epoch,
            "total_epochs": self.total_epochs,
            "current_metrics": self.current_metrics.agent_view(),
            "recent_metrics": [m.agent_view() for m in self.recent_metrics],
            "best_val_loss": round(self.best_val_loss, 6),
            "epochs_since_best": self.epochs_since_best,
            "current_config": self.current_config.to_dict(),
            "space": self.space_summary,
        }


def build_advisor_state(history: Sequence[EpochMetrics], config: Configuration,
                        space: ConfigurationSpace, total_epochs: int | None = None,
                        window: int = METRIC_WINDOW) -> AdvisorState:
    if not history:
        raise ValueError("advisor state needs at least one epoch of metrics")
    ordered = sorted(history, key=lambda m: m.epoch)
    vals = [m.val_loss for m in ordered]
    best_i = min(range(len(vals)), key=vals.__getitem__)
    return AdvisorState(
        current_metrics=ordered[-1],
        recent_metrics=tuple(ordered[-window:]),
        current_config=config,
        space_summary=_tunable_space(space),
        task=space.task.kind,
        total_epochs=total_epochs or ordered[-1].epoch,
        best_val_loss=vals[best_i],
        epochs_since_best=len(vals) - 1 - best_i,
    )


@dataclass(frozen=True)
class EvaluatorState:
    current_metrics: EpochMetrics
    current_config: Configuration
    baseline_metrics: EpochMetrics
    baseline_config: Configuration
    task: str = ""

    kind = "evaluator"
    elide_key = None

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "current_metrics": self.current_metrics.agent_view(),
            "current_config": self.current_config.to_dict(),
            "baseline_metrics": self.baseline_metrics.agent_view(),
            "baseline_config": self.baseline_config.to_dict(),
        }


def build_evaluator_state(current: EpochMetrics, config: Configuration, baseline: EpochMetrics,
                          baseline_config: Configuration, task: str = "") -> EvaluatorState:
    return EvaluatorState(current, config, baseline, baseline_config, task)


@dataclass(frozen=True)
class DigestEntry:
    epoch: int
    change: str
    success: bool
    train_loss: float
    val_loss: float
    adjusted: int = 0

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "change": self.change,
            "success": self.success,
            "train_loss": round(self.train_loss, 6),
            "val_loss": round(self.val_loss, 6),
            "adjusted_by_bounds": self.adjusted,
        }


@dataclass(frozen=True)
class PromptOptimizerState:
    history_digest: tuple[DigestEntry, ...]
    current_metrics: EpochMetrics
    current_notes: tuple[str, ...] = ()
    note_capacity: int = 8

    kind = "optimizer"
    elide_key = "history_digest"

    def to_dict(self) -> dict:
        return {
            "history_digest": [e.to_dict() for e in self.history_digest],
            "current_metrics": self.current_metrics.agent_view(),
            "current_notes": list(self.current_notes),
            "note_capacity": self.note_capacity,
        }


def build_optimizer_state(digest: Sequence[DigestEntry], current: EpochMetrics,
                          notes: Sequence[str] = (), capacity: int = 8) -> PromptOptimizerState:
    epochs = [e.epoch for e in digest]
    if epochs != sorted(set(epochs)):
        raise ValueError("history digest must list every epoch exactly once, in order")
    return PromptOptimizerState(tuple(digest), current, tuple(notes), capacity)


@dataclass(frozen=True)
class ArchitectState:
    current_arch: ArchSpec
    iterations: tuple[dict, ...]
    arch_space: dict = field(default_factory=dict)
    task: str = ""

    kind = "architect"
    elide_key = "iterations"

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "current_arch": self.current_arch.to_dict(),
            "iterations": list(self.iterations),
            "arch_space": self.arch_space,
        }
