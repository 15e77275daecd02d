"""Loss functions returning (mean loss, d loss / d outputs)."""
from __future__ import annotations

import numpy as np

from ..config_space import HyperSpec
from ._kernels import kernels

HUBER_DELTA = 1.0


def _class_weights(hyper: HyperSpec | None, k: int) -> np.ndarray:
    if hyper is None or not hyper.class_weights:
        return np.ones(k)
    w = np.asarray(hyper.class_weights, dtype=np.float64)
    if w.shape[0] != k:
        raise ValueError(f"{w.shape[0]} class weights for {k} classes")
    return w


def _regression_residual(outputs: np.ndarray, targets: np.ndarray) -> np.ndarray:
    pred = outputs.reshape(-1) if outputs.ndim == 2 and outputs.shape[1] == 1 else outputs
    if pred.ndim != 1 or pred.shape[0] != targets.shape[0]:
        raise ValueError(f"predictions {outputs.shape} do not match targets {targets.shape}")
    return pred - targets


def loss_and_grad(kind: str, outputs: np.ndarray, targets: np.ndarray,
                  hyper: HyperSpec | None = None, *, gamma: float | None = None):
    """Mean-reduced loss and its gradient with the same shape as ``outputs``.

    Class weights scale each sample's loss by the weight of its true class;
    the mean is still taken over the sample count.
    """
    outputs = np.asarray(outputs, dtype=np.float64)
    n = targets.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    if kind in ("cross_entropy", "focal"):
        if outputs.ndim != 2 or outputs.shape[0] != n:
            raise ValueError(f"logits {outputs.shape} do not match {n} targets")
        k = outputs.shape[1]
        w = _class_weights(hyper, k)
        g = 0.0
        if kind == "focal":
            g = float(gamma if gamma is not None else (hyper.focal_gamma if hyper else 2.0))
        y = np.asarray(targets, dtype=np.int64)
        per, grad = kernels.focal(outputs, y, w, g)
        return float(per.sum() / n), grad / n

    r = _regression_residual(outputs, np.asarray(targets, dtype=np.float64))
    if kind == "mse":
        loss = float(np.mean(r * r))
        g = 2.0 * r / n
    elif kind == "mae":
        loss = float(np.mean(np.abs(r)))
        g = np.sign(r) / n
    elif kind == "huber":
        a = np.abs(r)
        small = a <= HUBER_DELTA
        loss = float(np.mean(np.where(small, 0.5 * r * r, HUBER_DELTA * (a - 0.5 * HUBER_DELTA))))
        g = np.where(small, r, HUBER_DELTA * np.sign(r)) / n
    else:
        raise ValueError(f"unknown loss kind {kind!r}")
    return loss, g.reshape(outputs.shape)


def softmax(logits: np.ndarray) -> np.ndarray:
    return kernels.softmax(np.asarray(logits, dtype=np.float64))
