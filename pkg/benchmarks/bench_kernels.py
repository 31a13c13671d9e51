"""Benchmark the compiled kernel backend against the numpy fallback.

Micro-benchmarks run both backend modules side by side in-process; the
end-to-end training comparison re-executes this script in a subprocess with
PFSOLVE_KERNELS pinned, since the backend is chosen once at import time.

Usage:
    python benchmarks/bench_kernels.py            # full report
    python benchmarks/bench_kernels.py --train-only   # (internal) one backend
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from pfsolve._kernels import available_backends, get_backend

REPS = 200


def timeit(fn, reps=REPS):
    fn()  # warm-up
    t0 = time.perf_counter()
    for _ in range(reps):
        fn()
    return (time.perf_counter() - t0) / reps


def micro_benchmarks():
    backends = {name: get_backend(name) for name in available_backends()}
    rng = np.random.default_rng(0)

    act = rng.normal(size=(64, 256))  # batch x hidden, the training shape
    grad = rng.normal(size=act.shape)
    tanh_out = np.tanh(act)
    # IEEE14-scale MLP parameter tensors for the fused optimizer update.
    shapes = [(256, 22), (256,), (256, 256), (256,), (256, 256), (256,),
              (256, 256), (256,), (22, 256), (22,)]
    params = [rng.normal(size=s) for s in shapes]
    grads = [rng.normal(size=s) for s in shapes]
    ms = [np.zeros(s) for s in shapes]
    vs = [np.zeros(s) for s in shapes]

    cases = {
        "tanh_fwd (64x256)": lambda be: be.tanh_fwd(act),
        "tanh_bwd (64x256)": lambda be: be.tanh_bwd(grad, tanh_out),
        "softplus_fwd (64x256)": lambda be: be.softplus_fwd(act),
        "softplus_bwd (64x256)": lambda be: be.softplus_bwd(grad, act),
        "sq_norm (64x256)": lambda be: be.sq_norm(act),
        "adamw_update (209k params)": lambda be: [
            be.adamw_update(p, g, m, v, 1, 5e-4, 0.9, 0.999, 1e-8, 1e-4)
            for p, g, m, v in zip(params, grads, ms, vs)
        ],
    }

    print(f"{'kernel':<28}" + "".join(f"{name:>14}" for name in backends) + f"{'speedup':>10}")
    for label, call in cases.items():
        times = {name: timeit(lambda be=be: call(be)) for name, be in backends.items()}
        row = f"{label:<28}" + "".join(f"{times[n] * 1e6:>12.1f}us" for n in backends)
        if "cython" in times and "numpy" in times:
            row += f"{times['numpy'] / times['cython']:>9.2f}x"
        print(row)


def train_benchmark_one(epochs=300):
    """Time a short IEEE14 training run under the active backend."""
    from pfsolve import load_case
    from pfsolve._kernels import BACKEND
    from pfsolve.model import auto_config_for_case
    from pfsolve.training import TrainingConfig, train

    case = load_case("ieee14")
    config = TrainingConfig(epochs=epochs, batch_size=64, seed=0, log_period=50)
    t0 = time.perf_counter()
    train(case, auto_config_for_case(case), config)
    dt = time.perf_counter() - t0
    print(f"train[{BACKEND}]: {epochs} epochs in {dt:.2f}s "
          f"({dt / epochs * 1e3:.2f} ms/epoch)")


def train_benchmarks():
    for backend in available_backends():
        env = dict(os.environ, PFSOLVE_KERNELS=backend)
        subprocess.run(
            [sys.executable, __file__, "--train-only"], env=env, check=True
        )


if __name__ == "__main__":
    parser = argparse.ArgumentParser()
    parser.add_argument("--train-only", action="store_true")
    args = parser.parse_args()
    if args.train_only:
        train_benchmark_one()
    else:
        print(f"available backends: {available_backends()}\n")
        micro_benchmarks()
        print()
        train_benchmarks()
