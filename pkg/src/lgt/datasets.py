"""CSV ingestion, splitting/standardization and built-in synthetic datasets."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .config_space import CLASSIFICATION, REGRESSION, TaskType
from .trainer.model import Dataset

log = logging.getLogger(__name__)

SYNTHETIC_KINDS = ("blobs_classification", "linear_regression", "overfit_trap")


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    source: str = "builtin"  # csv_path | builtin
    path: str | None = None
    target_column: str | int = -1
    task: str = CLASSIFICATION
    split_ratio: float = 0.8
    split_seed: int = 0
    builtin_kind: str | None = None
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 < self.split_ratio < 1.0:
            raise DatasetError(f"split_ratio must be in (0, 1), got {self.split_ratio}")
        if self.source not in ("csv_path", "builtin"):
            raise DatasetError(f"unknown dataset source {self.source!r}")
        if self.task not in (CLASSIFICATION, REGRESSION):
            raise DatasetError(f"unknown task {self.task!r}")
        if self.source == "csv_path" and not self.path:
            raise DatasetError("csv_path datasets need a path")
        if self.source == "builtin" and (self.builtin_kind or self.name) not in SYNTHETIC_KINDS:
            raise DatasetError(f"unknown builtin dataset {self.builtin_kind or self.name!r}")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "source": self.source,
            "path": self.path,
            "target_column": self.target_column,
            "task": self.task,
            "split_ratio": self.split_ratio,
            "split_seed": self.split_seed,
            "builtin_kind": self.builtin_kind,
            "params": dict(self.params),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "DatasetManifest":
        known = {f for f in cls.__dataclass_fields__}
        unknown = sorted(set(d) - known)
        if unknown:
            raise DatasetError(f"unknown dataset manifest keys: {unknown}")
        return cls(**{k: v for k, v in d.items()})


def load_csv(manifest: DatasetManifest, base_dir: Path | None = None) -> Dataset:
    """Parse a headered CSV; classification labels are encoded in order of first appearance."""
    path = Path(manifest.path)
    if base_dir is not None and not path.is_absolute():
        path = base_dir / path
    if not path.exists():
        raise DatasetError(f"dataset file not found: {path}")
    with path.open(newline="", encoding="utf-8-sig") as fh:
        sample = fh.read(4096)
        fh.seek(0)
        try:
            dialect = csv.Sniffer().sniff(sample, delimiters=",;\t")
        except csv.Error:
            dialect = csv.excel
        rows = list(csv.reader(fh, dialect))
    if not rows:
        raise DatasetError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if any(c.strip() for c in r)]
    tc = manifest.target_column
    if isinstance(tc, int) or (isinstance(tc, str) and tc.lstrip("-").isdigit() and tc not in header):
        ti = int(tc)
        if not -len(header) <= ti < len(header):
            raise DatasetError(f"{path}: target column index {ti} out of range")
        ti %= len(header)
    else:
        if tc not in header:
            raise DatasetError(f"{path}: target column {tc!r} not in header {header}")
        ti = header.index(tc)
    feat_cols = [i for i in range(len(header)) if i != ti]

    x = np.empty((len(body), len(feat_cols)))
    raw_targets = []
    for r, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise DatasetError(f"{path}: row {r} has {len(row)} cells, expected {len(header)}")
        for j, c in enumerate(feat_cols):
            cell = row[c].strip()
            try:
                x[r - 2, j] = float(cell)
            except ValueError:
                raise DatasetError(
                    f"{path}: non-numeric value {cell!r} at row {r}, column {header[c]!r}"
                ) from None
            if not math.isfinite(x[r - 2, j]):
                raise DatasetError(f"{path}: non-finite value at row {r}, column {header[c]!r}")
        raw_targets.append(row[ti].strip())

    if manifest.task == CLASSIFICATION:
        labels: dict[str, int] = {}
        y = np.array([labels.setdefault(v, len(labels)) for v in raw_targets], dtype=np.int64)
        if len(labels) < 2:
            raise DatasetError(f"{path}: classification target has fewer than 2 classes")
        task = TaskType.classification(len(labels))
    else:
        try:
            y = np.array([float(v) for v in raw_targets])
        except ValueError:
            bad = next(i for i, v in enumerate(raw_targets) if not _is_float(v))
            raise DatasetError(
                f"{path}: non-numeric target {raw_targets[bad]!r} at row {bad + 2}"
            ) from None
        task = TaskType.regression()
    return Dataset(x, y, task, name=manifest.name)


def _is_float(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def _split_indices(data: Dataset, ratio: float, rng: np.random.Generator):
    n = data.n_samples
    n_train = int(round(ratio * n))
    if data.task.is_classification:
        counts = np.bincount(data.targets, minlength=data.task.n_classes)
        present = counts[counts > 0]
        if present.min() >= 2:
            # largest-remainder allocation so the total matches round(ratio * n)
            quota = ratio * counts
            alloc = np.floor(quota).astype(int)
            rem = n_train - int(alloc.sum())
            order = np.argsort(-(quota - alloc), kind="stable")
            for c in order[:max(rem, 0)]:
                alloc[c] += 1
            train_idx, test_idx = [], []
            for c in range(data.task.n_classes):
                idx = np.flatnonzero(data.targets == c)
                idx = idx[rng.permutation(idx.shape[0])]
                train_idx.append(idx[:alloc[c]])
                test_idx.append(idx[alloc[c]:])
            tr = np.concatenate(train_idx)
            te = np.concatenate(test_idx)
            return tr[rng.permutation(tr.shape[0])], te[rng.permutation(te.shape[0])]
        log.warning("a class has fewer than 2 samples; falling back to an unstratified split")
    perm = rng.permutation(n)
    return perm[:n_train], perm[n_train:]


def standardize(train: Dataset, *others: Dataset) -> list[Dataset]:
    mu = train.features.mean(axis=0)
    sd = train.features.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    out = []
    for d in (train, *others):
        z = (d.features - mu) / sd
        out.append(Dataset(z, d.targets, d.task, mu, sd, d.image_shape, d.name))
    return out


def split_and_standardize(data: Dataset, ratio: float, seed: int) -> tuple[Dataset, Dataset]:
    """Stratified (for classification) shuffled split; z-score fitted on the train part."""
    if not 0.0 < ratio < 1.0:
        raise DatasetError(f"ratio must be in (0, 1), got {ratio}")
    rng = np.random.default_rng(seed)
    tr, te = _split_indices(data, ratio, rng)
    train, test = standardize(data.subset(tr), data.subset(te))
    return train, test


def split_indices(data: Dataset, ratio: float, seed: int):
    return _split_indices(data, ratio, np.random.default_rng(seed))


def fit_val_split(train: Dataset, seed: int, ratio: float = 0.9) -> tuple[Dataset, Dataset]:
    """Hold out part of an already standardized train split for agent-visible validation."""
    tr, va = _split_indices(train, ratio, np.random.default_rng(seed))
    return train.subset(tr), train.subset(va)


# ----------------------------------------------------------------------------
# synthetic generators


def make_synthetic(kind: str, params: Mapping[str, Any] | None = None, seed: int = 0) -> Dataset:
    """Desk-scale stand-in datasets.

    blobs_classification: ``k`` isotropic Gaussian clusters (n, k, d, separation).
    linear_regression: ``y = X beta + noise`` (n, d, noise).
    overfit_trap: few samples, many irrelevant features and flipped labels, so an
    unregularized MLP memorizes noise (n, d, informative, label_noise).
    """
    p = dict(params or {})
    rng = np.random.default_rng(seed)
    if kind == "blobs_classification":
        n, k, d = int(p.get("n", 150)), int(p.get("k", 3)), int(p.get("d", 4))
        sep = float(p.get("separation", 6.0))
        centers = rng.normal(0.0, 1.0, size=(k, d))
        centers = sep * centers / np.linalg.norm(centers, axis=1, keepdims=True)
        y = np.arange(n) % k
        rng.shuffle(y)
        x = centers[y] + rng.normal(0.0, 1.0, size=(n, d))
        return Dataset(x, y, TaskType.classification(k), name=kind)
    if kind == "linear_regression":
        n, d = int(p.get("n", 200)), int(p.get("d", 5))
        noise = float(p.get("noise", 0.1))
        x = rng.normal(0.0, 1.0, size=(n, d))
        beta = np.asarray(p["beta"], dtype=np.float64) if "beta" in p else rng.normal(0.0, 1.0, size=d)
        y = x @ beta + (rng.normal(0.0, noise, size=n) if noise > 0 else 0.0)
        return Dataset(x, y, TaskType.regression(), name=kind)
    if kind == "overfit_trap":
        n, d = int(p.get("n", 150)), int(p.get("d", 40))
        informative = int(p.get("informative", 2))
        flip = float(p.get("label_noise", 0.25))
        x = rng.normal(0.0, 1.0, size=(n, d))
        w = np.zeros(d)
        w[:informative] = 1.5
        y = (x @ w + rng.normal(0.0, 0.5, size=n) > 0).astype(np.int64)
        flips = rng.random(n) < flip
        y[flips] = 1 - y[flips]
        return Dataset(x, y, TaskType.classification(2), name=kind)
    raise DatasetError(f"unknown synthetic dataset kind {kind!r}; choose from {SYNTHETIC_KINDS}")


def load_dataset(manifest: DatasetManifest, base_dir: Path | None = None) -> Dataset:
    if manifest.source == "csv_path":
        return load_csv(manifest, base_dir)
    return make_synthetic(manifest.builtin_kind or manifest.name, manifest.params, manifest.split_seed)
