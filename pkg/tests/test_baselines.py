from __future__ import annotations

import math

import numpy as np
import pytest

from lgt.baselines import Evaluated, best_index, run_grid_search, run_no_tuning, run_random_search
from lgt.config_space import ConfigurationSpace, default_config, enumerate_grid, sample_random
from lgt.datasets import make_synthetic
from lgt.records import Budget, BudgetExceeded, BudgetLedger, RunRecord, make_splits, run_rng

FAST = dict(epochs_per_evaluation=3)


@pytest.fixture(scope="module")
def space(blob_splits):
    return ConfigurationSpace.for_task(blob_splits.task)


def test_no_tuning_trains_default_once(blob_splits, space):
    rec = run_no_tuning(blob_splits, space, Budget(**FAST), 42)
    assert rec.ok and rec.budget_used == 1
    assert rec.final_config == default_config(space) and len(rec.history) == 3
    again = run_no_tuning(blob_splits, space, Budget(**FAST), 42)
    assert rec.to_json() == again.to_json()
    assert RunRecord.from_dict(rec.to_dict()).to_json() == rec.to_json()


def test_random_search_spends_budget(blob_splits, space):
    rec, res = run_random_search(blob_splits, space, Budget(max_configurations=6, **FAST), 42)
    assert res.budget_used == 6 == rec.budget_used == len(res.evaluated)
    assert rec.final_config == res.evaluated[res.best].config


def test_random_search_single_sample_matches_sampler(blob_splits, space):
    _, res = run_random_search(blob_splits, space, Budget(max_configurations=1, **FAST), 7)
    assert res.evaluated[0].config == sample_random(space, run_rng(7, 10_000))


def test_best_index_is_exhaustive_argmin():
    rng = np.random.default_rng(0)
    for _ in range(50):
        losses = list(rng.choice([0.1, 0.2, 0.3, math.nan], size=8))
        ev = [Evaluated(None, v, None, None) for v in losses]
        finite = [i for i, v in enumerate(losses) if math.isfinite(v)]
        expected = min(finite, key=lambda i: (losses[i], i)) if finite else None
        assert best_index(ev) == expected


def test_grid_search_exact_count(blob_splits, space):
    res_map = {"learning_rate": 2, "width": 3}
    _, res = run_grid_search(blob_splits, space, Budget(max_configurations=50, **FAST), 42, res_map)
    assert res.budget_used == 6
    assert [e.config for e in res.evaluated] == enumerate_grid(space, res_map)


def test_grid_search_truncates_in_order(space):
    grid = enumerate_grid(space, {"learning_rate": 10, "width": 10})
    assert len(grid) == 100
    # truncation keeps the leading prefix; checked on a cheap budget
    tiny = make_splits(make_synthetic("blobs_classification", {"n": 30}), 0.8, 0, 1)
    _, res = run_grid_search(tiny, space, Budget(max_configurations=5, epochs_per_evaluation=1), 1,
                             {"learning_rate": 10, "width": 10})
    assert [e.config for e in res.evaluated] == grid[:5]


def test_grid_all_ones_is_single_midpoint(blob_splits, space):
    _, res = run_grid_search(blob_splits, space, Budget(**FAST), 42,
                             {"learning_rate": 1, "weight_decay": 1, "batch_size": 1})
    assert res.budget_used == 1


def test_shared_ledger_refuses_overspend(blob_splits, space):
    ledger = BudgetLedger(Budget(max_configurations=1, **FAST))
    run_no_tuning(blob_splits, space, ledger.budget, 42, ledger=ledger)
    with pytest.raises(BudgetExceeded):
        run_no_tuning(blob_splits, space, ledger.budget, 42, ledger=ledger)
