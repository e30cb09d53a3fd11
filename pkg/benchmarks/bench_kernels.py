#!/usr/bin/env python3
"""Throughput benchmark: compiled stepping kernels vs the pure-Python
fallback.

Usage:  python benchmarks/bench_kernels.py [n_steps]
"""
import sys
import time

import numpy as np

from leapfrog4d import Position4, Velocity4, quadratic_well_field
from leapfrog4d import _kernels_py
from leapfrog4d.backend import get_kernels
from leapfrog4d.trajectory import integrate

X0 = Position4(0.0, [0.0, 1.0, 0.1])
U0 = Velocity4.on_shell([0.09, 0.05, 0.2])

METHOD_STEPS = {
    "explicit": 1.0,
    "dgrad-midpoint": 0.25,
    "dgrad-avf": 0.25,
    "variational": 0.25,
}


def bench(kernels, method, n_steps):
    model = quadratic_well_field()
    h = 0.01
    start = time.perf_counter()
    res = integrate(model, method, X0, U0, h, n_steps,
                    record_every=max(1, n_steps // 100), kernels=kernels)
    elapsed = time.perf_counter() - start
    # keep the result observable so the loop cannot be elided
    assert np.isfinite(res.summary.max_energy_rel_err)
    return n_steps / elapsed


def main():
    base_steps = int(sys.argv[1]) if len(sys.argv) > 1 else 200_000
    try:
        compiled = get_kernels("compiled")
    except ImportError:
        compiled = None
        print("compiled kernels not built; benchmarking the fallback only")

    print(f"{'method':<16} {'python steps/s':>16} {'compiled steps/s':>18} "
          f"{'speedup':>9}")
    for method, factor in METHOD_STEPS.items():
        n_c = int(base_steps * factor)
        n_py = max(1000, n_c // 50)
        py_rate = bench(_kernels_py, method, n_py)
        if compiled is not None:
            c_rate = bench(compiled, method, n_c)
            print(f"{method:<16} {py_rate:>16,.0f} {c_rate:>18,.0f} "
                  f"{c_rate / py_rate:>8.1f}x")
        else:
            print(f"{method:<16} {py_rate:>16,.0f} {'-':>18} {'-':>9}")


if __name__ == "__main__":
    main()
