"""No-Tuning, Random Search and Grid Search under the shared trainer and budget."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .config_space import (
    Configuration,
    ConfigurationSpace,
    default_config,
    enumerate_grid,
    sample_random,
)
from .records import Budget, BudgetLedger, HistoryEntry, RunRecord, Splits, run_rng
from .trainer import FitResult, MetricSet, fit_configuration

DEFAULT_RESOLUTION = {"learning_rate": 3, "weight_decay": 2, "dropout": 2, "batch_size": 2}


@dataclass(frozen=True)
class Evaluated:
    config: Configuration
    val_loss: float
    test_loss: float | None
    test_metrics: MetricSet | None
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "val_loss": self.val_loss if math.isfinite(self.val_loss) else None,
            "test_loss": self.test_loss,
            "test_metrics": None if self.test_metrics is None else self.test_metrics.to_dict(),
            "error": self.error,
        }


@dataclass
class SearchResult:
    evaluated: list[Evaluated] = field(default_factory=list)
    best: int | None = None
    budget_used: int = 0

    def to_dict(self) -> dict:
        return {"evaluated": [e.to_dict() for e in self.evaluated], "best": self.best,
                "budget_used": self.budget_used}


def best_index(evaluated: Sequence[Evaluated]) -> int | None:
    """Lowest validation loss among successful evaluations; earliest wins ties."""
    best = None
    for i, e in enumerate(evaluated):
        if e.error is None and math.isfinite(e.val_loss) and (best is None or e.val_loss < evaluated[best].val_loss):
            best = i
    return best


def _history(fit: FitResult) -> list[HistoryEntry]:
    return [HistoryEntry(epoch=m.epoch, config=fit.config, metrics=m) for m in fit.epochs]


def _record(method: str, seed: int, splits: Splits, budget: Budget, dataset: str,
            fit: FitResult | None, used: int) -> RunRecord:
    rec = RunRecord(method=method, seed=seed, dataset=dataset, dataset_hash=splits.digest(),
                    task=splits.task.to_dict(), budget=budget, budget_used=used)
    if fit is None:
        rec.status, rec.error = "failed", "no configuration trained successfully"
        return rec
    rec.history = _history(fit)
    rec.initial_config = rec.final_config = fit.config
    rec.final_val_loss = fit.val_loss if math.isfinite(fit.val_loss) else None
    rec.final_test_loss, rec.final_test_metrics = fit.test_loss, fit.test_metrics
    if not fit.ok:
        rec.status, rec.error = "failed", fit.error
    return rec


def run_no_tuning(splits: Splits, space: ConfigurationSpace, budget: Budget, seed: int, *,
                  dataset: str = "", record_time: bool = False,
                  ledger: BudgetLedger | None = None) -> RunRecord:
    """Train the default configuration once."""
    ledger = ledger or BudgetLedger(budget)
    ledger.consume()
    fit = fit_configuration(default_config(space), splits.fit, splits.val, splits.test,
                            budget.epochs_per_evaluation, run_rng(seed, 0), record_time=record_time)
    return _record("no_tuning", seed, splits, budget, dataset, fit, ledger.used)


def _search(method: str, configs: Sequence[Configuration], splits: Splits, budget: Budget, seed: int,
            dataset: str, record_time: bool, ledger: BudgetLedger) -> tuple[RunRecord, SearchResult]:
    result = SearchResult()
    fits: list[FitResult] = []
    for i, cfg in enumerate(configs):
        ledger.consume()
        fit = fit_configuration(cfg, splits.fit, splits.val, splits.test, budget.epochs_per_evaluation,
                                run_rng(seed, i), record_time=record_time)
        fits.append(fit)
        result.evaluated.append(Evaluated(cfg, fit.val_loss, fit.test_loss, fit.test_metrics, fit.error))
    result.budget_used = len(fits)
    result.best = best_index(result.evaluated)
    rec = _record(method, seed, splits, budget, dataset,
                  None if result.best is None else fits[result.best], ledger.used)
    rec.search = result.to_dict()
    return rec, result


def run_random_search(splits: Splits, space: ConfigurationSpace, budget: Budget, seed: int, *,
                      dataset: str = "", record_time: bool = False,
                      ledger: BudgetLedger | None = None) -> tuple[RunRecord, SearchResult]:
    """Sample ``max_configurations`` configurations and keep the best by validation loss."""
    ledger = ledger or BudgetLedger(budget)
    sampler = run_rng(seed, 10_000)
    n = ledger.remaining
    configs = [sample_random(space, sampler) for _ in range(n)]
    return _search("random", configs, splits, budget, seed, dataset, record_time, ledger)


def run_grid_search(splits: Splits, space: ConfigurationSpace, budget: Budget, seed: int,
                    resolution: Mapping[str, int] | None = None, *, dataset: str = "",
                    record_time: bool = False,
                    ledger: BudgetLedger | None = None) -> tuple[RunRecord, SearchResult]:
    """Evaluate the enumerated grid in order, truncated at the budget."""
    ledger = ledger or BudgetLedger(budget)
    grid = enumerate_grid(space, resolution or DEFAULT_RESOLUTION)
    return _search("grid", grid[:ledger.remaining], splits, budget, seed, dataset, record_time, ledger)
