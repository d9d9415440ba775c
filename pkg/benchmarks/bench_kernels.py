"""Time the numba and numpy gradient kernels on the default instance.

Usage::

    python3 benchmarks/bench_kernels.py [--repeats 50] [--agents 35]

Both backends are checked against each other before timing. The numba
path is compiled once up front so compile time is not counted.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from dgwf import _accel
from dgwf.config import ExperimentConfig
from dgwf.experiments import build_instance
from dgwf.kernels import GradientKernel


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times), float(np.median(times))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=50)
    parser.add_argument("--agents", type=int, default=35)
    args = parser.parse_args(argv)

    inst = build_instance(ExperimentConfig(), seed=0, num_agents=args.agents)
    ref = inst.problem.kernel
    kernels = {"numpy": GradientKernel(ref.A, ref.src, ref.dst, ref.data, backend="numpy")}
    if _accel.numba is not None:
        kernels["numba"] = GradientKernel(ref.A, ref.src, ref.dst, ref.data, backend="numba")
    else:
        print("numba not installed; timing numpy only")

    rng = np.random.default_rng(0)
    N, _, K = ref.A.shape
    X = rng.standard_normal((N, K)) + 1j * rng.standard_normal((N, K))
    x = X[0]

    outputs = {name: (k.agent_gradients(X), k.mean_gradient(x)) for name, k in kernels.items()}
    if "numba" in outputs:
        for a, b, what in zip(outputs["numpy"], outputs["numba"], ("agent", "mean")):
            err = np.max(np.abs(a - b)) / np.max(np.abs(a))
            print(f"{what} gradient max relative difference: {err:.2e}")

    print(f"N={N} K={K} S={ref.A.shape[1]} directed edges={len(ref.src)} repeats={args.repeats}")
    print(f"{'backend':8s} {'kernel':16s} {'best ms':>9s} {'median ms':>10s}")
    for name, k in kernels.items():
        for label, fn in (("agent_gradients", lambda: k.agent_gradients(X)), ("mean_gradient", lambda: k.mean_gradient(x))):
            best, med = best_of(fn, args.repeats)
            print(f"{name:8s} {label:16s} {1e3 * best:9.3f} {1e3 * med:10.3f}")


if __name__ == "__main__":
    main()
