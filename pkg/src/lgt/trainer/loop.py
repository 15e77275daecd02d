"""One-epoch training, evaluation and whole-configuration fitting."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..config_space import Configuration
from .augment import augment_all
from .losses import loss_and_grad, softmax
from .metrics import MetricSet, compute_metrics
from .model import Dataset, MlpModel, backward, build_model, forward
from .optim import OptimizerState, scheduled_lr, step_inplace


class TrainingError(RuntimeError):
    """Training produced non-finite values or could not run."""


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    train_loss: float
    val_loss: float
    metric_set: MetricSet
    train_metric_set: MetricSet = field(default_factory=MetricSet)
    objective_loss: float = 0.0
    learning_rate: float = 0.0
    weight_norm: float = 0.0
    # logged for loss curves only; never shown to agents
    test_loss: float | None = None
    wall_time_ms: int = 0

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "train_loss": self.train_loss,
            "val_loss": self.val_loss,
            "metric_set": self.metric_set.to_dict(),
            "train_metric_set": self.train_metric_set.to_dict(),
            "objective_loss": self.objective_loss,
            "learning_rate": self.learning_rate,
            "weight_norm": self.weight_norm,
            "test_loss": self.test_loss,
            "wall_time_ms": self.wall_time_ms,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EpochMetrics":
        return cls(
            epoch=int(d["epoch"]),
            train_loss=float(d["train_loss"]),
            val_loss=float(d["val_loss"]),
            metric_set=MetricSet.from_dict(d["metric_set"]),
            train_metric_set=MetricSet.from_dict(d.get("train_metric_set", {})),
            objective_loss=float(d.get("objective_loss", 0.0)),
            learning_rate=float(d.get("learning_rate", 0.0)),
            weight_norm=float(d.get("weight_norm", 0.0)),
            test_loss=None if d.get("test_loss") is None else float(d["test_loss"]),
            wall_time_ms=int(d.get("wall_time_ms", 0)),
        )

    def agent_view(self) -> dict:
        d = {
            "epoch": self.epoch,
            "train_loss": round(self.train_loss, 6),
            "val_loss": round(self.val_loss, 6),
            "learning_rate": self.learning_rate,
            "weight_norm": round(self.weight_norm, 4),
            "val": {k: (round(v, 6) if isinstance(v, float) else v)
                    for k, v in self.metric_set.to_dict().items()},
        }
        if self.train_metric_set.accuracy is not None:
            d["train_accuracy"] = round(self.train_metric_set.accuracy, 6)
        return d


def evaluate(model: MlpModel, data: Dataset) -> tuple[float, MetricSet]:
    """Reference loss (unweighted cross-entropy or MSE) and metrics, eval mode."""
    out, _ = forward(model, data.features, train=False)
    loss, _ = loss_and_grad(data.task.reference_loss, out, data.targets)
    preds = softmax(out) if data.task.is_classification else out.reshape(-1)
    return loss, compute_metrics(data.task, preds, data.targets)


def _check_compatible(model: MlpModel, data: Dataset) -> None:
    if model.input_dim != data.n_features or model.output_dim != data.task.output_dim:
        raise ValueError(
            f"model dims {model.input_dim}->{model.output_dim} do not match dataset "
            f"{data.n_features}->{data.task.output_dim}"
        )


def train_epoch(model: MlpModel, train: Dataset, val: Dataset, config: Configuration, epoch: int,
                total_epochs: int, state: OptimizerState | None, rng: np.random.Generator,
                *, test: Dataset | None = None, record_time: bool = False):
    """One shuffled mini-batch pass. ``epoch`` is 1-based.

    Returns ``(model', state', EpochMetrics)``; the input model is not
    modified. A fresh optimizer state is created when ``state`` is None or
    belongs to another optimizer kind.
    """
    t0 = time.perf_counter()
    _check_compatible(model, train)
    _check_compatible(model, val)
    strat, hyper = config.strategy, config.hyper
    model = model.copy()
    if state is None or state.kind != strat.optimizer_kind or state.m is None \
            or state.m.shape != model.params.shape:
        state = OptimizerState.fresh(strat.optimizer_kind, model.parameter_count)
    else:
        state = state.copy()
    lr = scheduled_lr(strat.scheduler_kind, hyper.learning_rate, epoch - 1, total_epochs,
                      dict(strat.scheduler_params))

    # divergence is detected by the finiteness checks below, not by numpy warnings
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        return _run_epoch(model, train, val, config, epoch, state, rng, lr, test, t0, record_time)


def _run_epoch(model, train, val, config, epoch, state, rng, lr, test, t0, record_time):
    strat, hyper = config.strategy, config.hyper
    data = augment_all(config.feature.methods, config.feature.params_for, train, rng)
    n = data.n_samples
    order = rng.permutation(n)
    bs = max(int(hyper.batch_size), 1)
    total, seen = 0.0, 0
    for start in range(0, n, bs):
        idx = order[start:start + bs]
        xb, yb = data.features[idx], data.targets[idx]
        out, cache = forward(model, xb, train=True, rng=rng)
        loss, d_out = loss_and_grad(strat.loss_kind, out, yb, hyper)
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite training loss at epoch {epoch}")
        grads = backward(model, cache, d_out)
        step_inplace(strat.optimizer_kind, model.params, grads, state, lr, hyper.weight_decay)
        total += loss * idx.shape[0]
        seen += idx.shape[0]
    if not np.all(np.isfinite(model.params)):
        raise TrainingError(f"non-finite parameters after epoch {epoch}")

    train_loss, train_ms = evaluate(model, train)
    val_loss, val_ms = evaluate(model, val)
    test_loss = evaluate(model, test)[0] if test is not None else None
    if not (np.isfinite(train_loss) and np.isfinite(val_loss)):
        raise TrainingError(f"non-finite evaluation loss at epoch {epoch}")
    metrics = EpochMetrics(
        epoch=epoch,
        train_loss=train_loss,
        val_loss=val_loss,
        metric_set=val_ms,
        train_metric_set=train_ms,
        objective_loss=total / max(seen, 1),
        learning_rate=lr,
        weight_norm=model.weight_norm(),
        test_loss=test_loss,
        wall_time_ms=int(round((time.perf_counter() - t0) * 1000)) if record_time else 0,
    )
    return model, state, metrics


@dataclass
class FitResult:
    config: Configuration
    epochs: list[EpochMetrics]
    model: MlpModel | None
    val_loss: float
    test_loss: float | None
    test_metrics: MetricSet | None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def fit_configuration(config: Configuration, fit: Dataset, val: Dataset, test: Dataset | None,
                      epochs: int, rng: np.random.Generator, *, record_time: bool = False) -> FitResult:
    """Train a fixed configuration from scratch for ``epochs`` epochs."""
    model = build_model(config.arch, fit.n_features, fit.task.output_dim, rng)
    state = None
    history: list[EpochMetrics] = []
    try:
        for t in range(1, epochs + 1):
            model, state, m = train_epoch(model, fit, val, config, t, epochs, state, rng,
                                          test=test, record_time=record_time)
            history.append(m)
    except TrainingError as exc:
        return FitResult(config, history, None, float("inf"), None, None, str(exc))
    test_loss, test_metrics = evaluate(model, test) if test is not None else (None, None)
    return FitResult(config, history, model, history[-1].val_loss if history else float("inf"),
                     test_loss, test_metrics)
