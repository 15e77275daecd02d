"""Classification and regression metrics."""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from ..config_space import TaskType
from ._kernels import kernels


@dataclass(frozen=True)
class MetricSet:
    accuracy: float | None = None
    macro_f1: float | None = None
    # None marks an undefined AUC (a single class present)
    auc: float | None = None
    recall_per_class: tuple[float, ...] = ()
    mae: float | None = None
    mse: float | None = None
    r2: float | None = None

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "recall_per_class":
                if v:
                    out[f.name] = list(v)
            elif v is not None or f.name in ("auc", "r2"):
                out[f.name] = v
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "MetricSet":
        kw = dict(d)
        if "recall_per_class" in kw:
            kw["recall_per_class"] = tuple(kw["recall_per_class"])
        return cls(**kw)

    def primary(self, task: TaskType) -> float | None:
        return self.accuracy if task.is_classification else self.mse


def roc_auc(scores: np.ndarray, labels: np.ndarray) -> float | None:
    """Binary AUC via the Mann-Whitney rank statistic (ties count half)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    n_neg = labels.shape[0] - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = kernels.average_ranks(scores)
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def classification_metrics(probs: np.ndarray, targets: np.ndarray, n_classes: int) -> MetricSet:
    probs = np.asarray(probs, dtype=np.float64)
    y = np.asarray(targets, dtype=np.int64)
    if probs.ndim == 1:
        if n_classes != 2:
            raise ValueError("1-D scores are only valid for binary tasks")
        probs = np.stack([1.0 - probs, probs], axis=1)
    if probs.shape != (y.shape[0], n_classes):
        raise ValueError(f"probabilities {probs.shape} do not match {y.shape[0]} x {n_classes}")
    if y.shape[0] == 0:
        raise ValueError("empty prediction set")
    pred = probs.argmax(axis=1)
    f1s, recalls, aucs = [], [], []
    for c in range(n_classes):
        tp = int(np.sum((pred == c) & (y == c)))
        fp = int(np.sum((pred == c) & (y != c)))
        fn = int(np.sum((pred != c) & (y == c)))
        denom = 2 * tp + fp + fn
        f1s.append(2 * tp / denom if denom else 0.0)
        recalls.append(tp / (tp + fn) if tp + fn else 0.0)
        if n_classes == 2 and c == 0:
            continue
        a = roc_auc(probs[:, c], y == c)
        if a is not None:
            aucs.append(a)
    return MetricSet(
        accuracy=float(np.mean(pred == y)),
        macro_f1=float(np.mean(f1s)),
        auc=float(np.mean(aucs)) if aucs else None,
        recall_per_class=tuple(float(r) for r in recalls),
    )


def regression_metrics(pred: np.ndarray, targets: np.ndarray) -> MetricSet:
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    t = np.asarray(targets, dtype=np.float64)
    if pred.shape != t.shape or t.size == 0:
        raise ValueError(f"predictions {pred.shape} do not match targets {t.shape}")
    r = pred - t
    ss_res = float(np.sum(r * r))
    ss_tot = float(np.sum((t - t.mean()) ** 2))
    r2 = None if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return MetricSet(mae=float(np.mean(np.abs(r))), mse=ss_res / t.size, r2=r2)


def compute_metrics(task: TaskType, predictions: np.ndarray, targets: np.ndarray) -> MetricSet:
    """``predictions`` are class probabilities (or binary scores) or regression outputs."""
    if task.is_classification:
        return classification_metrics(predictions, targets, task.n_classes)
    return regression_metrics(predictions, targets)
