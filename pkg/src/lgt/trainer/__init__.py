from ._kernels import BACKEND
from .augment import AugmentationError, augment
from .losses import loss_and_grad, softmax
from .loop import EpochMetrics, FitResult, TrainingError, evaluate, fit_configuration, train_epoch
from .metrics import MetricSet, compute_metrics, roc_auc
from .model import Dataset, MlpModel, backward, build_model, forward, predict
from .optim import OptimizerState, optimizer_step, scheduled_lr

__all__ = [
    "BACKEND", "AugmentationError", "augment", "loss_and_grad", "softmax", "EpochMetrics",
    "FitResult", "TrainingError", "evaluate", "fit_configuration", "train_epoch", "MetricSet",
    "compute_metrics", "roc_auc", "Dataset", "MlpModel", "backward", "build_model", "forward",
    "predict", "OptimizerState", "optimizer_step", "scheduled_lr",
]
