#!/usr/bin/env python3
"""l1-regularized logistic regression benchmark on the rcv1 binary dataset.

Non-gating: this script only runs when the dataset file is available locally
(it is ~1 GB and not bundled).  Point --train/--test at LIBSVM-format rcv1
files, e.g. rcv1_train.binary / rcv1_test.binary from the LIBSVM dataset
collection.  Reports Sparsity / Train / Test accuracy per worker count for
manual comparison against published distributed-solver results (train
accuracy around 90% at D=2 is the reference ballpark).

Usage:
  python benchmarks/rcv1_logistic.py --train rcv1_train.binary \
      [--test rcv1_test.binary] [--lambda 1e-4] [--workers 2,4] \
      [--test-sample 10000]
"""
import argparse
import os
import sys
import time

import numpy as np

from parafit import dataio, metrics
from parafit.solver import SolverConfig, solve
from parafit.types import ProblemSpec


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--train", default="rcv1_train.binary")
    parser.add_argument("--test", default=None)
    parser.add_argument("--lambda", dest="lam", type=float, default=1e-4)
    parser.add_argument("--mu", type=float, default=0.1)
    parser.add_argument("--workers", default="2")
    parser.add_argument("--max-iter", type=int, default=200)
    parser.add_argument("--tol", type=float, default=1e-3)
    parser.add_argument("--test-sample", type=int, default=10000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    if not os.path.exists(args.train):
        print(f"rcv1 training file {args.train!r} not found; skipping "
              "(this benchmark is optional and non-gating)")
        return 0

    print(f"loading {args.train} ...", file=sys.stderr)
    train = dataio.read_libsvm(args.train)
    test = None
    if args.test and os.path.exists(args.test):
        print(f"loading {args.test} ...", file=sys.stderr)
        test = dataio.read_libsvm(args.test, n_hint=train.n)
        if args.test_sample and args.test_sample < test.m:
            rng = np.random.default_rng(args.seed)
            rows = rng.choice(test.m, size=args.test_sample, replace=False)
            test = dataio.Dataset(matrix=test.matrix[rows],
                                  response=test.response[rows])

    spec = ProblemSpec(loss="logistic", regularizer="l1", lam=args.lam,
                       mu=args.mu)
    print("model,D,NI,CT_ms,Sparsity,Train,Test")
    for D in (int(tok) for tok in args.workers.split(",")):
        shards = dataio.partition(train, D)
        cfg = SolverConfig(max_iter=args.max_iter, tol=args.tol,
                           transport="thread", record_trace=False)
        t0 = time.perf_counter()
        res = solve(spec, shards, cfg)
        ct_ms = (time.perf_counter() - t0) * 1e3
        x = res.coefficients
        sparsity = metrics.sparsity_pct(x)
        train_acc = metrics.classification_accuracy(x, train)
        test_acc = (metrics.classification_accuracy(x, test)
                    if test is not None else float("nan"))
        print(f"pip,{D},{res.iterations},{ct_ms:.0f},{sparsity:.2f},"
              f"{train_acc:.2f},{test_acc:.2f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
