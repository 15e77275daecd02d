"""Experiment configuration and the (method, seed) runner."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .backend import BackendConfig, make_backend
from .baselines import DEFAULT_RESOLUTION, run_grid_search, run_no_tuning, run_random_search
from .config_space import ConfigurationSpace
from .datasets import DatasetManifest, load_dataset
from .orchestrator import run_lgt
from .records import Budget, BudgetLedger, RunRecord, Transcript, make_splits

log = logging.getLogger(__name__)

METHODS = ("no_tuning", "random", "grid", "lgt")
DEFAULT_SEEDS = tuple(range(42, 52))


class ExperimentConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetManifest
    methods: tuple[str, ...] = METHODS
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    budget: Budget = field(default_factory=Budget)
    backend: BackendConfig = field(default_factory=BackendConfig)
    output_dir: str = "runs"
    grid_resolution: Mapping[str, int] = field(default_factory=lambda: dict(DEFAULT_RESOLUTION))
    record_wall_time: bool = False

    def __post_init__(self):
        if not self.seeds:
            raise ExperimentConfigError("seeds must be non-empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ExperimentConfigError("seeds must be distinct")
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise ExperimentConfigError(f"methods must be a non-empty subset of {METHODS}, got {list(self.methods)}")

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset.to_dict(),
            "methods": list(self.methods),
            "seeds": list(self.seeds),
            "budget": self.budget.to_dict(),
            "backend": self.backend.to_dict(),
            "output_dir": self.output_dir,
            "grid_resolution": dict(self.grid_resolution),
            "record_wall_time": self.record_wall_time,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ExperimentConfig":
        unknown = sorted(set(d) - set(cls.__dataclass_fields__))
        if unknown:
            raise ExperimentConfigError(f"unknown experiment keys: {unknown}")
        if "dataset" not in d:
            raise ExperimentConfigError("experiment config needs a dataset")
        try:
            return cls(
                dataset=DatasetManifest.from_dict(d["dataset"]),
                methods=tuple(d.get("methods", METHODS)),
                seeds=tuple(int(s) for s in d.get("seeds", DEFAULT_SEEDS)),
                budget=Budget.from_dict(d.get("budget", {})),
                backend=BackendConfig.from_dict(d.get("backend", {})),
                output_dir=str(d.get("output_dir", "runs")),
                grid_resolution=dict(d.get("grid_resolution", DEFAULT_RESOLUTION)),
                record_wall_time=bool(d.get("record_wall_time", False)),
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ExperimentConfigError):
                raise
            raise ExperimentConfigError(str(exc)) from exc


def load_experiment_config(path: Path | str) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ExperimentConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ExperimentConfigError(f"{path}: expected a JSON object")
    return ExperimentConfig.from_dict(raw)


def record_path(output_dir: Path, method: str, seed: int) -> Path:
    return output_dir / "records" / method / f"seed{seed}.json"


def transcript_path(output_dir: Path, method: str, seed: int) -> Path:
    return output_dir / "transcripts" / method / f"seed{seed}.jsonl"


def _failed(config: ExperimentConfig, method: str, seed: int, error: str, used: int) -> RunRecord:
    return RunRecord(method=method, seed=seed, dataset=config.dataset.name, dataset_hash="",
                     task={}, budget=config.budget, budget_used=used, status="failed", error=error)


def run_one(config: ExperimentConfig, method: str, seed: int, data, backend, output_dir: Path) -> RunRecord:
    """Run a single (method, seed) pair; never raises."""
    budget = config.budget
    ledger = BudgetLedger(budget)
    try:
        splits = make_splits(data, config.dataset.split_ratio, config.dataset.split_seed, seed)
        space = ConfigurationSpace.for_task(splits.task, data.image_shape)
        common = dict(dataset=config.dataset.name, record_time=config.record_wall_time, ledger=ledger)
        if method == "no_tuning":
            rec = run_no_tuning(splits, space, budget, seed, **common)
        elif method == "random":
            rec, _ = run_random_search(splits, space, budget, seed, **common)
        elif method == "grid":
            rec, _ = run_grid_search(splits, space, budget, seed, config.grid_resolution, **common)
        else:
            tpath = transcript_path(output_dir, method, seed)
            rec = run_lgt(splits, space, backend, seed, budget=budget, backend_config=config.backend,
                          transcript=Transcript(tpath), **common)
            rec.transcript_path = tpath.relative_to(output_dir).as_posix()
    except Exception as exc:  # one broken run must not take the others down
        log.exception("run %s seed %d failed", method, seed)
        return _failed(config, method, seed, f"{type(exc).__name__}: {exc}", ledger.used)
    rec.run_config = {"dataset": config.dataset.to_dict(), "method": method, "seed": seed,
                      "budget": budget.to_dict()}
    return rec


def run_experiment(config: ExperimentConfig, *, base_dir: Path | None = None, backend=None,
                   output_dir: Path | str | None = None) -> list[RunRecord]:
    """Run every (method, seed) pair and write records, transcripts and the budget ledger."""
    out = Path(output_dir if output_dir is not None else config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = load_dataset(config.dataset, base_dir)
    if backend is None and "lgt" in config.methods:
        backend = make_backend(config.backend)
    (out / "experiment.json").write_text(json.dumps(config.to_dict(), sort_keys=True, indent=1) + "\n",
                                         encoding="utf-8")

    records: list[RunRecord] = []
    for method in config.methods:
        for seed in config.seeds:
            rec = run_one(config, method, seed, data, backend, out)
            path = record_path(out, method, seed)
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(rec.to_json() + "\n", encoding="utf-8")
            records.append(rec)
    write_budget_ledger(out, records, config.budget)
    return records


def write_budget_ledger(out: Path, records: Sequence[RunRecord], budget: Budget) -> dict:
    runs = [{"method": r.method, "seed": r.seed, "configurations": r.budget_used} for r in records]
    ledger = {
        "max_configurations": budget.max_configurations,
        "runs": runs,
        "max_used": max((r["configurations"] for r in runs), default=0),
        "within_budget": all(r["configurations"] <= budget.max_configurations for r in runs),
    }
    (out / "budget_ledger.json").write_text(json.dumps(ledger, sort_keys=True, indent=1) + "\n",
                                            encoding="utf-8")
    return ledger


def load_records(directory: Path | str) -> list[RunRecord]:
    root = Path(directory)
    base = root / "records" if (root / "records").is_dir() else root
    paths = sorted(base.rglob("*.json"))
    if not paths:
        raise FileNotFoundError(f"no run records under {root}")
    return [RunRecord.from_dict(json.loads(p.read_text(encoding="utf-8"))) for p in paths]
