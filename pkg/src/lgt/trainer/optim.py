"""SGD (momentum), Adam and AdamW over a model's flat parameter buffer."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import kernels
from .model import MlpModel

SGD_MOMENTUM = 0.9
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


@dataclass(eq=False)
class OptimizerState:
    kind: str
    step: int = 0
    # sgd: momentum buffer in m; adam/adamw: first moment m, second moment v
    m: np.ndarray | None = None
    v: np.ndarray | None = None
    hparams: dict = field(default_factory=dict)

    @classmethod
    def fresh(cls, kind: str, n_params: int, **hparams) -> "OptimizerState":
        if kind not in ("sgd", "adam", "adamw"):
            raise ValueError(f"unknown optimizer kind {kind!r}")
        v = None if kind == "sgd" else np.zeros(n_params)
        return cls(kind, 0, np.zeros(n_params), v, dict(hparams))

    def copy(self) -> "OptimizerState":
        return OptimizerState(
            self.kind, self.step,
            None if self.m is None else self.m.copy(),
            None if self.v is None else self.v.copy(),
            dict(self.hparams),
        )


def step_inplace(kind: str, params: np.ndarray, grads: np.ndarray, state: OptimizerState,
                 lr: float, weight_decay: float) -> None:
    if grads.shape != params.shape:
        raise ValueError(f"grads {grads.shape} do not match params {params.shape}")
    if state.kind != kind or state.m is None or state.m.shape != params.shape:
        raise ValueError("optimizer state does not match optimizer kind / parameters")
    state.step += 1
    if kind == "sgd":
        momentum = float(state.hparams.get("momentum", SGD_MOMENTUM))
        kernels.sgd(params, grads, state.m, float(lr), momentum, float(weight_decay))
    else:
        b1, b2 = state.hparams.get("betas", ADAM_BETAS)
        eps = float(state.hparams.get("eps", ADAM_EPS))
        kernels.adam(params, grads, state.m, state.v, float(lr), float(b1), float(b2), eps,
                     float(weight_decay), float(state.step), kind == "adamw")


def optimizer_step(kind: str, model: MlpModel, grads: np.ndarray, state: OptimizerState,
                   lr: float, weight_decay: float) -> tuple[MlpModel, OptimizerState]:
    """Functional update: inputs are left untouched."""
    new_model, new_state = model.copy(), state.copy()
    step_inplace(kind, new_model.params, np.asarray(grads, dtype=np.float64), new_state, lr, weight_decay)
    return new_model, new_state


def scheduled_lr(kind: str, base_lr: float, epoch: int, total_epochs: int,
                 params: dict | None = None) -> float:
    """Learning rate for a 0-based ``epoch`` out of ``total_epochs``."""
    params = params or {}
    if not 0 <= epoch < max(total_epochs, 1):
        raise ValueError(f"epoch {epoch} outside [0, {total_epochs})")
    if kind == "constant":
        return base_lr
    if kind == "step_decay":
        gamma = float(params.get("gamma", 0.5))
        step = max(int(params.get("step_size", 3)), 1)
        return base_lr * gamma ** (epoch // step)
    if kind == "cosine":
        min_lr = float(params.get("min_lr", 0.0))
        if total_epochs <= 1:
            return base_lr
        return min_lr + 0.5 * (base_lr - min_lr) * (1.0 + math.cos(math.pi * epoch / (total_epochs - 1)))
    raise ValueError(f"unknown scheduler kind {kind!r}")
