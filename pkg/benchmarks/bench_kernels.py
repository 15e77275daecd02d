"""Compare the numba kernels with the numpy fallback, plus one full training fit.

    python3 benchmarks/bench_kernels.py [--repeat 50]
"""
from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from lgt.trainer import _kernels as K


def _cases(rng):
    z = rng.normal(size=(256, 10))
    y = rng.integers(0, 10, size=256)
    w = np.ones(10)
    theta = rng.normal(size=50_000)
    g = rng.normal(size=50_000)
    scores = rng.normal(size=5_000)
    return {
        "softmax": lambda k: k.softmax(z),
        "focal": lambda k: k.focal(z, y, w, 2.0),
        "adam": lambda k: k.adam(theta.copy(), g, np.zeros_like(g), np.zeros_like(g),
                                 1e-3, 0.9, 0.999, 1e-8, 1e-2, 1, True),
        "sgd": lambda k: k.sgd(theta.copy(), g, np.zeros_like(g), 1e-2, 0.9, 0.0),
        "average_ranks": lambda k: k.average_ranks(scores),
    }


def bench_kernels(repeat: int) -> None:
    if K.numba_kernels is None:
        print("numba is not importable; only the numpy kernels exist")
        return
    cases = _cases(np.random.default_rng(0))
    print(f"{'kernel':<14}{'numpy us':>12}{'numba us':>12}{'speedup':>10}")
    for name, fn in cases.items():
        fn(K.numba_kernels)  # compile outside the timing
        t_np = min(timeit.repeat(lambda: fn(K.numpy_kernels), number=1, repeat=repeat)) * 1e6
        t_nb = min(timeit.repeat(lambda: fn(K.numba_kernels), number=1, repeat=repeat)) * 1e6
        print(f"{name:<14}{t_np:>12.1f}{t_nb:>12.1f}{t_np / t_nb:>10.2f}")


_FIT = """
import time
import numpy as np
from lgt.config_space import ConfigurationSpace, default_config
from lgt.datasets import make_synthetic
from lgt.records import make_splits, run_rng
from lgt.trainer import BACKEND, fit_configuration
sp = make_splits(make_synthetic("overfit_trap"), 0.8, 0, 42)
cfg = default_config(ConfigurationSpace.for_task(sp.task))
fit_configuration(cfg, sp.fit, sp.val, sp.test, 1, run_rng(42, 0))
t = time.perf_counter()
for i in range(20):
    fit_configuration(cfg, sp.fit, sp.val, sp.test, 10, run_rng(42, i))
print(BACKEND, (time.perf_counter() - t) / 20 * 1000)
"""


def bench_fit() -> None:
    print("\n10-epoch fit on overfit_trap (ms, mean of 20):")
    for flag in ("0", "1"):
        out = subprocess.run([sys.executable, "-c", _FIT], env={**os.environ, "LGT_NUMBA": flag},
                             capture_output=True, text=True, check=True).stdout.split()
        print(f"  {out[0]:<8}{float(out[1]):8.1f}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=50)
    args = ap.parse_args()
    bench_kernels(args.repeat)
    bench_fit()
