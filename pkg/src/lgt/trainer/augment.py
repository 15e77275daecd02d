"""Training-set augmentations applied in standardized feature space."""
from __future__ import annotations

from typing import Mapping

import numpy as np
from scipy import ndimage

from ..config_space import IMAGE_ONLY_METHODS, METHOD_PARAMS
from .model import Dataset


class AugmentationError(ValueError):
    pass


def _images(data: Dataset) -> np.ndarray:
    h, w = data.image_shape
    return data.features.reshape(-1, h, w)


def augment(method: str, data: Dataset, params: Mapping[str, float] | None,
            rng: np.random.Generator) -> Dataset:
    if method not in METHOD_PARAMS:
        raise AugmentationError(f"unknown augmentation method {method!r}")
    if method in IMAGE_ONLY_METHODS and data.image_shape is None:
        raise AugmentationError(
            f"{method!r} needs image-shaped features but dataset {data.name or '<unnamed>'} "
            f"is tabular ({data.n_features} features); use noise, scale or duplication"
        )
    p = {name: default for name, default in METHOD_PARAMS[method]}
    p.update(params or {})
    x = data.features

    if method == "none":
        return data
    if method == "duplication":
        factor = int(round(p["factor"]))
        if factor < 1:
            return data
        copies = np.repeat(x[None], factor, axis=0).reshape(-1, x.shape[1])
        if p["sigma"] > 0:
            copies = copies + rng.normal(0.0, p["sigma"], size=copies.shape)
        targets = np.concatenate([data.targets] + [data.targets] * factor)
        return data.with_features(np.concatenate([x, copies]), targets)
    if method == "noise":
        if p["sigma"] == 0:
            return data
        return data.with_features(x + rng.normal(0.0, p["sigma"], size=x.shape))
    if method == "scale":
        factors = rng.uniform(1.0 - p["range"], 1.0 + p["range"], size=(x.shape[0], 1))
        return data.with_features(x * factors)

    imgs = _images(data)
    if method == "flip":
        chosen = rng.random(imgs.shape[0]) < p["prob"]
        out = imgs.copy()
        out[chosen] = out[chosen][:, :, ::-1]
    elif method == "shift":
        k = int(round(p["pixels"]))
        out = imgs.copy()
        if k > 0:
            dy = rng.integers(-k, k + 1, size=imgs.shape[0])
            dx = rng.integers(-k, k + 1, size=imgs.shape[0])
            for i in range(imgs.shape[0]):
                out[i] = ndimage.shift(imgs[i], (dy[i], dx[i]), order=0, mode="constant", cval=0.0)
    elif method == "rotation":
        angles = rng.uniform(-p["degrees"], p["degrees"], size=imgs.shape[0])
        out = np.stack([
            ndimage.rotate(img, a, reshape=False, order=1, mode="nearest") for img, a in zip(imgs, angles)
        ]) if imgs.shape[0] else imgs.copy()
    else:  # contrast
        factors = rng.uniform(1.0 - p["range"], 1.0 + p["range"], size=(imgs.shape[0], 1, 1))
        mean = imgs.mean(axis=(1, 2), keepdims=True)
        out = mean + (imgs - mean) * factors
    return data.with_features(out.reshape(x.shape))


def augment_all(methods, params_for, data: Dataset, rng: np.random.Generator) -> Dataset:
    for m in methods:
        data = augment(m, data, params_for(m), rng)
    return data
