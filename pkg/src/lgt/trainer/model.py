"""Dataset container and a feed-forward MLP on a single flat parameter buffer."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

from ..config_space import ArchSpec, TaskType


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    targets: np.ndarray
    task: TaskType
    feature_means: np.ndarray | None = None
    feature_stds: np.ndarray | None = None
    # (height, width) when each feature row is a flattened single-channel image
    image_shape: tuple[int, int] | None = None
    name: str = ""

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        if x.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {x.shape}")
        if self.task.is_classification:
            y = np.asarray(self.targets, dtype=np.int64)
            if y.size and (y.min() < 0 or y.max() >= self.task.n_classes):
                raise ValueError(f"class targets must lie in [0, {self.task.n_classes})")
        else:
            y = np.asarray(self.targets, dtype=np.float64)
        if y.shape[0] != x.shape[0]:
            raise ValueError(f"{x.shape[0]} feature rows but {y.shape[0]} targets")
        if self.image_shape is not None and self.image_shape[0] * self.image_shape[1] != x.shape[1]:
            raise ValueError(f"image_shape {self.image_shape} does not match {x.shape[1]} features")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "targets", y)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "Dataset":
        return replace(self, features=self.features[idx], targets=self.targets[idx])

    def with_features(self, features: np.ndarray, targets: np.ndarray | None = None) -> "Dataset":
        return replace(self, features=features, targets=self.targets if targets is None else targets)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.features).tobytes())
        h.update(np.ascontiguousarray(self.targets).tobytes())
        return h.hexdigest()[:16]


@dataclass(eq=False)
class MlpModel:
    arch: ArchSpec
    input_dim: int
    output_dim: int
    params: np.ndarray
    shapes: list[tuple[int, int]] = field(default_factory=list)

    @property
    def parameter_count(self) -> int:
        return int(self.params.size)

    def _offsets(self):
        off = 0
        for fan_in, fan_out in self.shapes:
            w = (off, off + fan_in * fan_out)
            off = w[1]
            b = (off, off + fan_out)
            off = b[1]
            yield w, b, (fan_in, fan_out)

    @property
    def weights(self) -> list[np.ndarray]:
        return [self.params[w0:w1].reshape(shape) for (w0, w1), _, shape in self._offsets()]

    @property
    def biases(self) -> list[np.ndarray]:
        return [self.params[b0:b1] for _, (b0, b1), _ in self._offsets()]

    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return list(zip(self.weights, self.biases))

    def copy(self) -> "MlpModel":
        return MlpModel(self.arch, self.input_dim, self.output_dim, self.params.copy(), list(self.shapes))

    def weight_norm(self) -> float:
        return float(np.sqrt(sum(float(np.sum(w * w)) for w in self.weights)))


def layer_shapes(arch: ArchSpec, input_dim: int, output_dim: int) -> list[tuple[int, int]]:
    dims = [input_dim, *arch.layer_widths, output_dim]
    return list(zip(dims[:-1], dims[1:]))


def build_model(arch: ArchSpec, input_dim: int, output_dim: int, rng: np.random.Generator) -> MlpModel:
    """Uniform fan-in init (He for relu, LeCun for tanh), zero biases."""
    if input_dim < 1 or output_dim < 1:
        raise ValueError(f"input_dim and output_dim must be >= 1, got {input_dim}, {output_dim}")
    shapes = layer_shapes(arch, input_dim, output_dim)
    total = sum(a * b + b for a, b in shapes)
    model = MlpModel(arch, input_dim, output_dim, np.zeros(total), shapes)
    gain = 6.0 if arch.activation == "relu" else 3.0
    for i, w in enumerate(model.weights):
        fan_in = shapes[i][0]
        limit = np.sqrt(gain / fan_in)
        w[...] = rng.uniform(-limit, limit, size=w.shape)
    return model


def _activate(kind: str, a: np.ndarray) -> np.ndarray:
    return np.maximum(a, 0.0) if kind == "relu" else np.tanh(a)


def forward(model: MlpModel, x: np.ndarray, *, train: bool = False,
            rng: np.random.Generator | None = None, dropout: float | None = None):
    """Return (outputs, cache). Dropout is inverted and only active when ``train``."""
    p = model.arch.dropout if dropout is None else dropout
    use_drop = train and p > 0.0
    if use_drop and rng is None:
        raise ValueError("training-mode dropout needs an rng")
    layers = model.layers()
    h = x
    cache = {"inputs": [], "pre": [], "masks": []}
    for i, (w, b) in enumerate(layers):
        cache["inputs"].append(h)
        a = h @ w + b
        if i == len(layers) - 1:
            return a, cache
        cache["pre"].append(a)
        h = _activate(model.arch.activation, a)
        if use_drop:
            mask = (rng.random(h.shape) >= p) / (1.0 - p)
            h = h * mask
            cache["masks"].append(mask)
        else:
            cache["masks"].append(None)
    raise AssertionError("unreachable")


def backward(model: MlpModel, cache, d_out: np.ndarray) -> np.ndarray:
    """Gradient of the loss w.r.t. the flat parameter vector, given d loss / d outputs."""
    grad = np.empty_like(model.params)
    offsets = list(model._offsets())
    weights = model.weights
    delta = d_out
    for i in range(len(offsets) - 1, -1, -1):
        (w0, w1), (b0, b1), shape = offsets[i]
        h_in = cache["inputs"][i]
        grad[w0:w1] = (h_in.T @ delta).ravel()
        grad[b0:b1] = delta.sum(axis=0)
        if i == 0:
            break
        dh = delta @ weights[i].T
        mask = cache["masks"][i - 1]
        if mask is not None:
            dh = dh * mask
        pre = cache["pre"][i - 1]
        if model.arch.activation == "relu":
            delta = dh * (pre > 0.0)
        else:
            t = np.tanh(pre)
            delta = dh * (1.0 - t * t)
    return grad


def predict(model: MlpModel, x: np.ndarray) -> np.ndarray:
    out, _ = forward(model, x, train=False)
    return out
