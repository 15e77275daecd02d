"""Hot elementwise kernels with numba and pure-numpy implementations.

``LGT_NUMBA=0`` (or ``NUMBA_DISABLE_JIT=1``, or numba missing) selects the
numpy path. Both paths are always importable as ``numpy_kernels`` and
``numba_kernels`` so they can be compared directly.
"""
from __future__ import annotations

import math
import os
from types import SimpleNamespace

import numpy as np

# ----------------------------------------------------------------------------
# numpy


def _softmax_np(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _log_softmax_np(z):
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def _focal_np(z, y, w, gamma):
    """Per-sample weighted focal loss and d(loss_i)/dz (not yet averaged)."""
    n = z.shape[0]
    logp = _log_softmax_np(z)
    p = np.exp(logp)
    rows = np.arange(n)
    lpy = logp[rows, y]
    py = p[rows, y]
    wy = w[y]
    one_m = 1.0 - py
    if gamma == 0.0:
        loss = -wy * lpy
        coef = -np.ones(n)
    else:
        mod = one_m ** gamma
        loss = -wy * mod * lpy
        # gamma * py * (1-py)^(gamma-1) * log py, written to stay finite at py -> 1
        safe = np.maximum(one_m, 1e-300)
        coef = gamma * py * (mod / safe) * lpy - mod
        coef = np.where(one_m > 0.0, coef, 0.0)
    onehot = np.zeros_like(p)
    onehot[rows, y] = 1.0
    grad = (onehot - p) * (coef * wy)[:, None]
    return loss, grad


def _adam_np(theta, g, m, v, lr, beta1, beta2, eps, wd, step, decoupled):
    if decoupled:
        if wd != 0.0:
            theta *= 1.0 - lr * wd
    elif wd != 0.0:
        g = g + wd * theta
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    bc1 = 1.0 - beta1 ** step
    bc2 = 1.0 - beta2 ** step
    theta -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


def _sgd_np(theta, g, buf, lr, momentum, wd):
    if wd != 0.0:
        g = g + wd * theta
    if momentum != 0.0:
        buf *= momentum
        buf += g
        theta -= lr * buf
    else:
        theta -= lr * g


def _average_ranks_np(x):
    """1-based ranks with ties sharing their mean rank."""
    n = x.shape[0]
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    ranks = np.empty(n)
    i = 0
    while i < n:
        j = i
        while j + 1 < n and xs[j + 1] == xs[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


numpy_kernels = SimpleNamespace(
    name="numpy",
    softmax=_softmax_np,
    log_softmax=_log_softmax_np,
    focal=_focal_np,
    adam=_adam_np,
    sgd=_sgd_np,
    average_ranks=_average_ranks_np,
)

# ----------------------------------------------------------------------------
# numba


def _build_numba():
    from numba import njit

    @njit(cache=True)
    def log_softmax(z):
        n, k = z.shape
        out = np.empty_like(z)
        for i in range(n):
            mx = z[i, 0]
            for j in range(1, k):
                if z[i, j] > mx:
                    mx = z[i, j]
            s = 0.0
            for j in range(k):
                s += math.exp(z[i, j] - mx)
            ls = math.log(s)
            for j in range(k):
                out[i, j] = z[i, j] - mx - ls
        return out

    @njit(cache=True)
    def softmax(z):
        n, k = z.shape
        out = np.empty_like(z)
        for i in range(n):
            mx = z[i, 0]
            for j in range(1, k):
                if z[i, j] > mx:
                    mx = z[i, j]
            s = 0.0
            for j in range(k):
                e = math.exp(z[i, j] - mx)
                out[i, j] = e
                s += e
            for j in range(k):
                out[i, j] /= s
        return out

    @njit(cache=True)
    def focal(z, y, w, gamma):
        n, k = z.shape
        logp = log_softmax(z)
        loss = np.empty(n)
        grad = np.empty_like(z)
        for i in range(n):
            yi = y[i]
            lpy = logp[i, yi]
            py = math.exp(lpy)
            wy = w[yi]
            one_m = 1.0 - py
            if gamma == 0.0:
                loss[i] = -wy * lpy
                coef = -1.0
            else:
                mod = one_m ** gamma
                loss[i] = -wy * mod * lpy
                if one_m > 0.0:
                    coef = gamma * py * (mod / one_m) * lpy - mod
                else:
                    coef = 0.0
            for j in range(k):
                pj = math.exp(logp[i, j])
                d = (1.0 if j == yi else 0.0) - pj
                grad[i, j] = d * coef * wy
        return loss, grad

    @njit(cache=True)
    def adam(theta, g, m, v, lr, beta1, beta2, eps, wd, step, decoupled):
        bc1 = 1.0 - beta1 ** step
        bc2 = 1.0 - beta2 ** step
        shrink = 1.0 - lr * wd
        for i in range(theta.shape[0]):
            gi = g[i]
            if decoupled:
                if wd != 0.0:
                    theta[i] *= shrink
            elif wd != 0.0:
                gi = gi + wd * theta[i]
            m[i] = beta1 * m[i] + (1.0 - beta1) * gi
            v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi
            theta[i] -= lr * (m[i] / bc1) / (math.sqrt(v[i] / bc2) + eps)

    @njit(cache=True)
    def sgd(theta, g, buf, lr, momentum, wd):
        for i in range(theta.shape[0]):
            gi = g[i]
            if wd != 0.0:
                gi = gi + wd * theta[i]
            if momentum != 0.0:
                buf[i] = momentum * buf[i] + gi
                theta[i] -= lr * buf[i]
            else:
                theta[i] -= lr * gi

    @njit(cache=True)
    def average_ranks(x):
        n = x.shape[0]
        order = np.argsort(x, kind="mergesort")
        ranks = np.empty(n)
        i = 0
        while i < n:
            j = i
            while j + 1 < n and x[order[j + 1]] == x[order[i]]:
                j += 1
            r = 0.5 * (i + j) + 1.0
            for t in range(i, j + 1):
                ranks[order[t]] = r
            i = j + 1
        return ranks

    return SimpleNamespace(
        name="numba",
        softmax=softmax,
        log_softmax=log_softmax,
        focal=focal,
        adam=adam,
        sgd=sgd,
        average_ranks=average_ranks,
    )


def _numba_wanted() -> bool:
    flag = os.environ.get("LGT_NUMBA", "1").strip().lower()
    if flag in ("0", "false", "no", "off"):
        return False
    return os.environ.get("NUMBA_DISABLE_JIT", "0") != "1"


try:
    numba_kernels = _build_numba()
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba_kernels = None

kernels = numba_kernels if (numba_kernels is not None and _numba_wanted()) else numpy_kernels
BACKEND = kernels.name
