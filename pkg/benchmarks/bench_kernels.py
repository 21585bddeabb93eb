#!/usr/bin/env python3
"""Time the compiled residual-update kernels against the numpy fallback.

Runs each kernel on synthetic vectors of growing size and prints a table of
per-call wall time plus the speedup ratio.  The two backends must also agree
numerically; any drift beyond 1e-10 aborts the run.

Usage: python benchmarks/bench_kernels.py [--sizes 1000,10000,100000] [--reps 20]
"""
import argparse
import time

import numpy as np

from parafit import kernels
from parafit.kernels import _core_py


def _time(fn, reps):
    best = float("inf")
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--sizes", default="1000,10000,100000")
    parser.add_argument("--reps", type=int, default=20)
    args = parser.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]

    if "compiled" not in kernels.available_backends():
        print("compiled extension not built; nothing to compare")
        return 0
    compiled = kernels.get_backend("compiled")

    rng = np.random.default_rng(0)
    print(f"{'kernel':<22}{'m':>9}{'python_us':>12}{'compiled_us':>13}"
          f"{'speedup':>9}")
    cases = [("regression_r/" + name, kernels.LOSS_IDS[name][0])
             for name in ("least_squares", "quantile", "huber", "svr")]
    for m in sizes:
        b = rng.uniform(-5, 5, size=m)
        q = rng.uniform(-5, 5, size=m)
        u = rng.uniform(-2, 2, size=m)
        labels = rng.choice([-1.0, 1.0], size=m)
        warm = np.zeros(m)
        for label, loss_id in cases:
            py = _time(lambda: _core_py.regression_r(loss_id, b, q, u, 0.5, 0.5),
                       args.reps)
            cc = _time(lambda: compiled.regression_r(loss_id, b, q, u, 0.5, 0.5),
                       args.reps)
            drift = np.max(np.abs(
                compiled.regression_r(loss_id, b, q, u, 0.5, 0.5)
                - _core_py.regression_r(loss_id, b, q, u, 0.5, 0.5)
            ))
            assert drift <= 1e-10, (label, drift)
            print(f"{label:<22}{m:>9}{py * 1e6:>12.1f}{cc * 1e6:>13.1f}"
                  f"{py / cc:>9.2f}")
        py = _time(lambda: _core_py.logistic_r(labels, q, u, 0.5, warm,
                                               1e-10, 50), args.reps)
        cc = _time(lambda: compiled.logistic_r(labels, q, u, 0.5, warm,
                                               1e-10, 50), args.reps)
        drift = np.max(np.abs(
            compiled.logistic_r(labels, q, u, 0.5, warm, 1e-10, 50)
            - _core_py.logistic_r(labels, q, u, 0.5, warm, 1e-10, 50)
        ))
        assert drift <= 1e-8, drift
        print(f"{'logistic_r':<22}{m:>9}{py * 1e6:>12.1f}{cc * 1e6:>13.1f}"
              f"{py / cc:>9.2f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
