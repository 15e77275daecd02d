from __future__ import annotations

import numpy as np
import pytest

from lgt.config_space import ConfigurationSpace, TaskType
from lgt.datasets import make_synthetic
from lgt.records import make_splits

_CRITERIA: dict[int, list] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    for key, value in report.user_properties:
        if key == "criterion":
            n, title = value
            detail = dict(report.user_properties).get("detail", "")
            _CRITERIA[n] = [title, report.outcome, detail]


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, outcome, detail = _CRITERIA[n]
        mark = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{mark}] criterion {n:2d}: {title}" + (f" ({detail})" if detail else ""))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def blob_splits():
    return make_splits(make_synthetic("blobs_classification"), 0.8, 0, 42)


@pytest.fixture(scope="session")
def trap_splits():
    return make_splits(make_synthetic("overfit_trap"), 0.8, 0, 42)


@pytest.fixture(scope="session")
def reg_splits():
    return make_splits(make_synthetic("linear_regression"), 0.8, 0, 42)


@pytest.fixture
def cls_space():
    return ConfigurationSpace.for_task(TaskType.classification(3))


@pytest.fixture
def reg_space():
    return ConfigurationSpace.for_task(TaskType.regression())
