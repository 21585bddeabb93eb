"""Command-line front-end: fit, select, bench and gen subcommands.

Exit codes: 0 success/converged, 2 hit the iteration cap without converging,
1 any error (bad flags, unreadable files, infeasible configuration).
Output files are written to a temporary sibling and renamed, so an error
never leaves a partial file behind.
"""
from __future__ import annotations

import argparse
import os
import sys
import tempfile
import time

import numpy as np

from . import dataio, metrics
from .consensus import consensus_solve
from .modelselect import lambda_path, support_size
from .solver import SolverConfig, solve
from .types import ParafitError, ProblemSpec

MODEL_FORMAT_VERSION = 1

LOSS_CHOICES = (
    "least_squares", "quantile", "huber", "svr", "hinge", "squared_hinge",
    "logistic",
)
REG_MAP = {"l1": "l1", "l2": "l2_squared", "group": "group_l21"}


class CliError(ParafitError):
    pass


class _Parser(argparse.ArgumentParser):
    # argument errors must exit 1, not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliError(message)


def _atomic_write(path, writer):
    """Write via ``writer(stream)`` to a temp file, then rename into place."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".parafit-")
    try:
        with os.fdopen(fd, "w") as stream:
            writer(stream)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_model(path, coefficients, spec, result):
    def writer(stream):
        stream.write(f"# parafit model v{MODEL_FORMAT_VERSION}\n")
        stream.write(
            f"# loss={spec.loss} reg={spec.regularizer} lambda={spec.lam!r} "
            f"mu={spec.mu!r} intercept={int(spec.intercept)} tau={spec.tau!r} "
            f"delta={spec.delta!r} epsilon={spec.epsilon!r}\n"
        )
        stream.write(
            f"# converged={int(result.converged)} iterations={result.iterations}\n"
        )
        for value in coefficients:
            stream.write(f"{float(value)!r}\n")

    _atomic_write(path, writer)


def load_model(path):
    """Returns (coefficients, metadata dict) from a model file."""
    meta = {}
    coefs = []
    with open(path) as stream:
        for line in stream:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for token in line[1:].split():
                    if "=" in token:
                        key, _, value = token.partition("=")
                        meta[key] = value
                continue
            coefs.append(float(line))
    return np.array(coefs), meta


def write_trace_csv(path, trace):
    def writer(stream):
        stream.write("iter,objective,rel_w_change,h_diff_sq,wall_ms\n")
        for rec in trace:
            stream.write(
                f"{rec.iteration},{float(rec.objective)!r},"
                f"{float(rec.rel_w_change)!r},{float(rec.h_diff_sq)!r},"
                f"{float(rec.wall_ms)!r}\n"
            )

    _atomic_write(path, writer)


def _add_problem_flags(p, with_lambda=True, data_required=True,
                       lambda_required=True):
    p.add_argument("--data", required=data_required, help="training data path")
    p.add_argument("--format", choices=("libsvm", "csv"), default="libsvm")
    p.add_argument("--label-column", type=int, default=0,
                   help="CSV label column (0-based)")
    p.add_argument("--loss", choices=LOSS_CHOICES, default="least_squares")
    p.add_argument("--reg", choices=tuple(REG_MAP), default="l1")
    p.add_argument("--groups", type=int, default=0,
                   help="number of equal contiguous groups for --reg group")
    if with_lambda:
        p.add_argument("--lambda", dest="lam", type=float,
                       required=lambda_required,
                       default=None if lambda_required else 0.1)
    p.add_argument("--mu", type=float, default=0.1)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--delta", type=float, default=1.345)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--intercept", action="store_true")
    p.add_argument("--workers", type=int, default=1, help="shard count D")
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--tol", type=float, default=1e-2)
    p.add_argument("--eta", type=float, default=None, help="override eta")
    p.add_argument("--init", type=float, default=0.0,
                   help="initial value for all x and u entries")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="model file output path")
    p.add_argument("--trace", help="per-iteration trace CSV path")
    p.add_argument("--time-trace", action="store_true",
                   help="record wall-clock times in the trace (non-reproducible)")
    p.add_argument("--solver", choices=("pip", "consensus"), default="pip")
    p.add_argument("--transport", choices=("inline", "thread", "socket"),
                   default="thread")


def _load_dataset(path, fmt, label_column=0):
    if fmt == "libsvm":
        return dataio.read_libsvm(path)
    return dataio.read_csv(path, has_header=False, label_column=label_column)


def _build_spec(args, n, lam=None):
    groups = None
    reg = REG_MAP[args.reg]
    if reg == "group_l21":
        count = args.groups or n
        bounds = np.array_split(np.arange(n), count)
        groups = tuple(g for g in bounds if g.size)
    return ProblemSpec(
        loss=args.loss,
        regularizer=reg,
        lam=lam if lam is not None else args.lam,
        mu=args.mu,
        intercept=args.intercept,
        tau=args.tau,
        delta=args.delta,
        epsilon=args.epsilon,
        groups=groups,
    )


def _build_config(args, **overrides):
    params = dict(
        max_iter=args.max_iter,
        tol=args.tol,
        init_value=args.init,
        eta_override=args.eta,
        record_timing=getattr(args, "time_trace", False),
        transport=args.transport,
    )
    params.update(overrides)
    return SolverConfig(**params)


def _prepare(args, lam=None):
    dataset = _load_dataset(args.data, args.format, args.label_column)
    if args.intercept:
        dataset = dataio.add_intercept(dataset)
    shards = dataio.partition(dataset, args.workers)
    spec = _build_spec(args, dataset.n, lam=lam)
    return dataset, shards, spec


def cmd_fit(args):
    dataset, shards, spec = _prepare(args)
    config = _build_config(args)
    if args.solver == "consensus":
        result = consensus_solve(spec, shards, config)
    else:
        result = solve(spec, shards, config)
    if args.out:
        write_model(args.out, result.coefficients, spec, result)
    if args.trace:
        write_trace_csv(args.trace, result.trace)
    mets = metrics.evaluate(result.coefficients, dataset, spec.task,
                            intercept=spec.intercept)
    print(
        f"converged={result.converged} iterations={result.iterations} "
        f"sparsity={mets.sparsity_pct:.2f}%"
    )
    return 0 if result.converged else 2


def cmd_select(args):
    dataset, shards, spec = _prepare(args, lam=1.0)
    config = _build_config(args)
    path = lambda_path(spec, shards, config, grid_size=args.grid,
                       ratio=args.ratio)
    best = path.selected
    if args.out:
        write_model(args.out, best.coefficients, spec.with_lambda(
            float(path.lambdas[path.selected_index])), best)
    path_out = args.path_out or (args.out + ".path.csv" if args.out else None)
    if path_out:
        def writer(stream):
            stream.write("lambda,hbic,support,objective\n")
            for lam, score, fit in zip(path.lambdas, path.hbic, path.fits):
                if fit is None:
                    stream.write(f"{float(lam)!r},nan,nan,nan\n")
                    continue
                supp = support_size(fit.coefficients, intercept=spec.intercept)
                obj = fit.trace[-1].objective if fit.trace else float("nan")
                stream.write(f"{float(lam)!r},{float(score)!r},{supp},"
                             f"{float(obj)!r}\n")

        _atomic_write(path_out, writer)
    print(
        f"selected lambda={float(path.lambdas[path.selected_index])!r} "
        f"support={support_size(best.coefficients, intercept=spec.intercept)} "
        f"iterations={best.iterations}"
    )
    return 0 if best.converged else 2


def cmd_bench(args):
    workers_list = [int(tok) for tok in args.workers_list.split(",")]
    losses = args.losses.split(",")
    if args.synthetic:
        m, p, seed = (int(tok) for tok in args.synthetic.split(","))
        dataset, true_support = dataio.gen_synthetic(seed, m, p)
    else:
        if not args.data:
            raise CliError("either --data or --synthetic is required")
        dataset = _load_dataset(args.data, args.format, args.label_column)
        true_support = None
    test_set = None
    if args.test_data:
        test_set = _load_dataset(args.test_data, args.format, args.label_column)
        if args.test_sample and args.test_sample < test_set.m:
            rng = np.random.default_rng(args.seed)
            rows = rng.choice(test_set.m, size=args.test_sample, replace=False)
            test_set = dataio.Dataset(matrix=test_set.matrix[rows],
                                      response=test_set.response[rows])

    rows_out = []
    solutions = {}  # (model, loss) -> {D: coefficients}
    for loss in losses:
        args.loss = loss
        lam = args.lam
        for model in ("pip", "consensus"):
            if model == "consensus" and loss != "least_squares":
                continue
            for D in workers_list:
                args.workers = D
                shards = dataio.partition(dataset, D)
                spec = _build_spec(args, dataset.n, lam=lam)
                config = _build_config(args, record_trace=False,
                                       record_timing=True)
                for _ in range(args.reps):
                    t0 = time.perf_counter()
                    if model == "consensus":
                        result = consensus_solve(spec, shards, config)
                    else:
                        result = solve(spec, shards, config)
                    ct_ms = (time.perf_counter() - t0) * 1e3
                solutions.setdefault((model, loss), {})[D] = result.coefficients
                mets = metrics.evaluate(result.coefficients, dataset, spec.task,
                                        true_support=true_support,
                                        intercept=spec.intercept)
                if spec.task == "classification":
                    test_acc = (
                        metrics.classification_accuracy(result.coefficients,
                                                        test_set)
                        if test_set is not None else float("nan")
                    )
                    rows_out.append(
                        f"{model},{D},{result.iterations},{ct_ms:.3f},"
                        f"{mets.sparsity_pct:.4f},{mets.train_accuracy:.4f},"
                        f"{test_acc:.4f}"
                    )
                else:
                    rows_out.append(
                        f"{model},{D},{result.iterations},{ct_ms:.3f},"
                        f"{mets.fn_count if mets.fn_count is not None else ''},"
                        f"{mets.fp_count if mets.fp_count is not None else ''},"
                        f"{mets.mae:.6f},{mets.mse:.6f}"
                    )

    task = _build_spec(args, dataset.n, lam=args.lam).task
    header = (
        "model,D,NI,CT_ms,Sparsity,Train,Test"
        if task == "classification"
        else "model,D,NI,CT_ms,FN,FP,MAE,MSE"
    )

    def writer(stream):
        stream.write(header + "\n")
        for row in rows_out:
            stream.write(row + "\n")

    if args.out:
        _atomic_write(args.out, writer)
    else:
        writer(sys.stdout)

    # cross-partition deviation summary
    for (model, loss), by_d in sorted(solutions.items()):
        coefs = list(by_d.values())
        dev = max(
            (float(np.max(np.abs(a - b))) for i, a in enumerate(coefs)
             for b in coefs[i + 1:]),
            default=0.0,
        )
        print(f"cross-D max deviation {model}/{loss}: {dev:.3e}")
    return 0


def cmd_gen(args):
    dataset, support = dataio.gen_synthetic(args.seed, args.m, args.p)
    if args.format == "libsvm":
        _atomic_write(args.out, lambda s: dataio.write_libsvm(dataset, s))
    else:
        _atomic_write(args.out, lambda s: dataio.write_csv(dataset, s))
    print(f"wrote {args.out} (m={dataset.m}, p={dataset.n}, "
          f"support={[int(j) for j in support]})")
    return 0


def build_parser():
    parser = _Parser(prog="parafit",
                     description="distributed regularized model fitting")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit one model at a fixed lambda")
    _add_problem_flags(p_fit)
    p_fit.set_defaults(func=cmd_fit)

    p_sel = sub.add_parser("select", help="lambda path + HBIC selection")
    _add_problem_flags(p_sel, with_lambda=False)
    p_sel.add_argument("--grid", type=int, default=50)
    p_sel.add_argument("--ratio", type=float, default=1e-3)
    p_sel.add_argument("--path-out", help="path CSV output")
    p_sel.set_defaults(func=cmd_select)

    p_bench = sub.add_parser("bench", help="benchmark table over D values")
    _add_problem_flags(p_bench, data_required=False, lambda_required=False)
    p_bench.add_argument("--synthetic", help="m,p,seed synthetic dataset")
    p_bench.add_argument("--losses", default="least_squares",
                         help="comma-separated loss list")
    p_bench.add_argument("--workers-list", default="1,5,10",
                         help="comma-separated D list")
    p_bench.add_argument("--reps", type=int, default=1)
    p_bench.add_argument("--test-data", help="held-out evaluation data")
    p_bench.add_argument("--test-sample", type=int, default=0)
    p_bench.set_defaults(func=cmd_bench)

    p_gen = sub.add_parser("gen", help="write a synthetic dataset")
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--m", type=int, required=True)
    p_gen.add_argument("--p", type=int, required=True)
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--format", choices=("csv", "libsvm"), default="csv")
    p_gen.set_defaults(func=cmd_gen)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (CliError, ParafitError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
