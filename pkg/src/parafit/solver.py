"""Row-split linearized ADMM driver.

The problem ``min_x sum_d L(A_d x, b_d) + R(x)`` is split with per-shard
residual constraints ``A_d x = r_d``.  Each iteration: the master forms

    x^{k+1} = prox_R( x^k - (mu/eta) * sum_d xi_d^k, gamma=eta )

from the aggregated shard vectors ``xi_d = A_d'(A_d x - r_d - u_d/mu)``,
broadcasts it, and every worker updates its residual block r_d (closed-form
prox or Newton per row), its dual block u_d, and its xi_d.  Because the
x-update depends on the shards only through the *sum* of the xi_d, the
iterates are identical for any row partition once the linearization constant
``eta`` is fixed -- the property the partition-insensitivity tests pin down.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np

from . import kernels
from .cluster import WorkerLogic, spawn_cluster
from .prox import prox_regularizer
from .types import (
    DimensionMismatch,
    FitResult,
    ProblemSpec,
    SolverState,
    TraceRecord,
    check_shards,
    loss_values,
    regularizer_value,
)

logger = logging.getLogger(__name__)

XI_DEFINITIONAL = "definitional"
XI_PRINTED = "printed"


@dataclass
class SolverConfig:
    """Knobs of one solve; defaults follow the benchmark settings."""

    max_iter: int = 500
    tol: float = 1e-2
    mu: float = None  # overrides ProblemSpec.mu when set
    init_value: float = 0.0
    eta_override: float = None
    eta_safety: float = 1.0 + 1e-6
    record_trace: bool = True
    record_iterates: bool = False
    record_timing: bool = True
    newton_tol: float = 1e-10
    newton_max: int = 50
    xi_formula: str = XI_DEFINITIONAL
    transport: str = "thread"
    timeout: float = 300.0

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.eta_safety < 1.0:
            raise ValueError("eta_safety must be >= 1")
        if self.xi_formula not in (XI_DEFINITIONAL, XI_PRINTED):
            raise ValueError(f"unknown xi formula {self.xi_formula!r}")

    def resolve_mu(self, spec):
        return self.mu if self.mu is not None else spec.mu


def power_method_eta(shard, mu, tol=1e-8, max_iter=1000, safety=1.0):
    """Largest eigenvalue of mu * A_d' A_d by power iteration, times safety.

    Deterministic: starts from the normalized all-ones vector and converges
    on the relative change of the Rayleigh quotient.  A zero matrix yields 0;
    non-convergence returns the last estimate with a 1.05 safety factor.
    """
    n = shard.cols
    if n == 0 or shard.rows == 0:
        return 0.0
    v = np.full(n, 1.0 / np.sqrt(n))
    lam_prev = None
    lam = 0.0
    for _ in range(max_iter):
        w = shard.rmatvec(shard.matvec(v))
        lam = float(v @ w)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        if lam_prev is not None and abs(lam - lam_prev) <= tol * max(1.0, abs(lam)):
            return mu * lam * safety
        lam_prev = lam
    logger.warning(
        "power method did not converge on shard %d; inflating estimate",
        shard.shard_index,
    )
    return mu * lam * 1.05


def aggregate_eta(eta_d, override=None):
    """eta = sum of per-shard eta_d (ascending order), or the explicit override."""
    if override is not None:
        return float(override)
    eta_d = list(eta_d)
    if not eta_d:
        raise ValueError("at least one eta_d is required")
    if any(e < 0 for e in eta_d):
        raise ValueError("eta_d must be nonnegative")
    total = 0.0
    for e in eta_d:
        total += float(e)
    return total


def compute_xi(shard, x, r_d, u_d, mu):
    """xi_d = A_d'(A_d x - r_d - u_d/mu)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != shard.cols:
        raise DimensionMismatch(
            f"x has length {x.shape[0]}, expected {shard.cols}",
            shard_index=shard.shard_index,
        )
    if len(r_d) != shard.rows or len(u_d) != shard.rows:
        raise DimensionMismatch(
            "r_d/u_d length does not match shard rows", shard_index=shard.shard_index
        )
    return shard.rmatvec(shard.matvec(x) - r_d - np.asarray(u_d) / mu)


def x_update(x_k, xi_sum, eta, mu, spec):
    """Linearized coefficient update: prox of R at x_k - (mu/eta) * xi_sum."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    anchor = np.asarray(x_k, dtype=np.float64) - (mu / eta) * np.asarray(xi_sum)
    return prox_regularizer(spec, anchor, eta)


def _update_r(spec, b, q, u, mu, r_warm, newton_tol, newton_max):
    if spec.loss == "logistic":
        return kernels.logistic_r(b, q, u, mu, r_warm, newton_tol, newton_max)
    loss_id, pfield = kernels.LOSS_IDS[spec.loss]
    p1 = getattr(spec, pfield) if pfield else 0.0
    if spec.task == "classification":
        return kernels.classification_r(loss_id, b, q, u, mu, p1)
    return kernels.regression_r(loss_id, b, q, u, mu, p1)


def worker_iteration(shard, x_next, r_d, u_d, spec, config=None):
    """One slave-node step: returns (r_next, u_next, xi_next).

    Computes q = A_d x_next once, updates r rowwise via the loss prox (or the
    logistic Newton solver warm-started at r_d), then
    u_next = u_d - mu (q - r_next) and the xi vector.  ``xi_formula`` selects
    the definitional form A_d'(q - r - u/mu) (default) or the compatibility
    form A_d'(r + u/mu).
    """
    config = config or SolverConfig()
    mu = config.resolve_mu(spec)
    q = shard.matvec(x_next)
    r_next = _update_r(
        spec, shard.response, q, u_d, mu, r_d, config.newton_tol, config.newton_max
    )
    u_next = u_d - mu * (q - r_next)
    if config.xi_formula == XI_PRINTED:
        xi_next = shard.rmatvec(r_next + u_next / mu)
    else:
        xi_next = shard.rmatvec(q - r_next - u_next / mu)
    return r_next, u_next, xi_next


def stopping_check(w_prev, w_curr, tol):
    """True iff ||w_curr - w_prev|| / max(1, ||w_curr||) <= tol."""
    if isinstance(w_prev, SolverState):
        w_prev = w_prev.concatenated()
    if isinstance(w_curr, SolverState):
        w_curr = w_curr.concatenated()
    w_prev = np.asarray(w_prev, dtype=np.float64)
    w_curr = np.asarray(w_curr, dtype=np.float64)
    diff = np.linalg.norm(w_curr - w_prev)
    return diff / max(1.0, np.linalg.norm(w_curr)) <= tol


class HSeminorm:
    """Weighted seminorm from the convergence analysis.

    ||v||_H^2 = eta ||v_x||^2 - mu ||A v_x||^2 + mu ||v_r||^2 + ||v_u||^2/mu,
    valid (nonnegative on the x-block) whenever eta dominates the spectral
    norm of mu A'A.  ||A v_x||^2 is accumulated shardwise; the matrix
    eta I - mu A'A is never materialized.
    """

    def __init__(self, eta, mu, shards):
        self.eta = float(eta)
        self.mu = float(mu)
        self.shards = sorted(shards, key=lambda s: s.shard_index)

    def of(self, v_x, v_r, v_u):
        v_x = np.asarray(v_x, dtype=np.float64)
        av_sq = sum(float(np.sum(s.matvec(v_x) ** 2)) for s in self.shards)
        value = (
            self.eta * float(v_x @ v_x)
            - self.mu * av_sq
            + self.mu * float(np.sum(np.square(v_r)))
            + float(np.sum(np.square(v_u))) / self.mu
        )
        if value < -1e-9:
            raise ArithmeticError(
                f"H-seminorm came out negative ({value}); eta too small"
            )
        return max(value, 0.0)


def h_seminorm_sq(h: HSeminorm, v_x, v_r, v_u):
    return h.of(v_x, v_r, v_u)


class _PipWorker(WorkerLogic):
    """Per-shard worker logic: owns (r_d, u_d), posts xi + diagnostics.

    The stats vector is [loss_sum, ||dr||^2 + ||du||^2, ||r||^2 + ||u||^2,
    mu ||dr||^2 + ||du||^2 / mu, ||A_d dx||^2] for the transition this
    broadcast triggered; master-side aggregation turns those into the
    objective, stopping and H-norm diagnostics.
    """

    def __init__(self, shard, spec, config, warm_r=None, warm_u=None):
        self.shard = shard
        self.shard_index = shard.shard_index
        self.spec = spec
        self.config = config
        self.mu = config.resolve_mu(spec)
        self.warm_r = warm_r
        self.warm_u = warm_u
        self.r = None
        self.u = None
        self.prev_q = None

    def setup(self, x0):
        shard, mu = self.shard, self.mu
        q = shard.matvec(x0)
        self.r = np.array(self.warm_r, dtype=np.float64) if self.warm_r is not None else q.copy()
        self.u = (
            np.array(self.warm_u, dtype=np.float64)
            if self.warm_u is not None
            else np.full(shard.rows, self.config.init_value)
        )
        self.prev_q = q
        if self.config.eta_override is not None:
            eta = 0.0  # unused downstream; skip the power iterations
        else:
            eta = power_method_eta(shard, mu, safety=self.config.eta_safety)
        xi = shard.rmatvec(q - self.r - self.u / mu)
        loss_sum = float(np.sum(loss_values(self.spec, q, shard.response)))
        stats = np.array(
            [loss_sum, 0.0, float(self.r @ self.r + self.u @ self.u), 0.0, 0.0]
        )
        return eta, xi, stats

    def step(self, k, x):
        shard, mu = self.shard, self.mu
        q = shard.matvec(x)
        r_new = _update_r(
            self.spec, shard.response, q, self.u, mu, self.r,
            self.config.newton_tol, self.config.newton_max,
        )
        u_new = self.u - mu * (q - r_new)
        if self.config.xi_formula == XI_PRINTED:
            xi = shard.rmatvec(r_new + u_new / mu)
        else:
            xi = shard.rmatvec(q - r_new - u_new / mu)
        dr = r_new - self.r
        du = u_new - self.u
        dq = q - self.prev_q
        loss_sum = float(np.sum(loss_values(self.spec, q, shard.response)))
        stats = np.array(
            [
                loss_sum,
                float(dr @ dr + du @ du),
                float(r_new @ r_new + u_new @ u_new),
                mu * float(dr @ dr) + float(du @ du) / mu,
                float(dq @ dq),
            ]
        )
        self.r, self.u, self.prev_q = r_new, u_new, q
        return xi, stats

    def final_state(self):
        return np.concatenate([self.r, self.u])


def _ordered_sum(vectors):
    # serial sum in ascending shard order: bitwise deterministic
    total = np.array(vectors[0], dtype=np.float64, copy=True)
    for v in vectors[1:]:
        total += v
    return total


def solve(spec: ProblemSpec, shards, config: SolverConfig = None, executor=None,
          warm_state=None):
    """Run the full master/worker loop and return a :class:`FitResult`.

    ``warm_state`` may be a (x, r, u) triple in global row order; segments
    are handed to the workers.  If ``executor`` is None one is spawned per
    ``config.transport`` (an executor is single-use).
    """
    config = config or SolverConfig()
    shards = sorted(shards, key=lambda s: s.shard_index)
    n = check_shards(shards, classification=spec.task == "classification")
    mu = config.resolve_mu(spec)
    row_counts = [s.rows for s in shards]
    offsets = np.concatenate([[0], np.cumsum(row_counts)])

    if warm_state is not None:
        x0, r_full, u_full = warm_state
        x0 = np.array(x0, dtype=np.float64)
        warm_r = [r_full[offsets[i]:offsets[i + 1]] for i in range(len(shards))]
        warm_u = [u_full[offsets[i]:offsets[i + 1]] for i in range(len(shards))]
    else:
        x0 = np.full(n, config.init_value)
        warm_r = warm_u = [None] * len(shards)

    if executor is None:
        executor = spawn_cluster(
            shards,
            lambda s: _PipWorker(s, spec, config, warm_r[s.shard_index],
                                 warm_u[s.shard_index]),
            transport=config.transport,
            timeout=config.timeout,
        )

    etas, xis, stats = executor.setup(x0)
    eta = aggregate_eta(etas, override=config.eta_override)
    if eta <= 0.0:
        eta = 1e-12  # all-zero design; any positive eta is valid

    x = x0
    trace = []
    x_history = [x.copy()] if config.record_iterates else None
    converged = False
    iterations = 0
    for k in range(1, config.max_iter + 1):
        t0 = time.perf_counter() if config.record_timing else 0.0
        xi_sum = _ordered_sum(xis)
        x_new = x_update(x, xi_sum, eta, mu, spec)
        xis, stats = executor.epoch(k, x_new)
        agg = _ordered_sum(stats)
        loss_sum, delta_ru, norm_ru, h_ru, adx_sq = agg
        dx = x - x_new
        delta_w_sq = float(dx @ dx) + delta_ru
        norm_w_sq = float(x_new @ x_new) + norm_ru
        rel_change = np.sqrt(delta_w_sq) / max(1.0, np.sqrt(norm_w_sq))
        iterations = k
        x = x_new
        if x_history is not None:
            x_history.append(x.copy())
        if config.record_trace or k % 10 == 0 or rel_change <= config.tol:
            wall_ms = (time.perf_counter() - t0) * 1e3 if config.record_timing else 0.0
            h_diff = eta * float(dx @ dx) - mu * adx_sq + h_ru
            trace.append(
                TraceRecord(
                    iteration=k,
                    objective=loss_sum + regularizer_value(spec, x),
                    rel_w_change=float(rel_change),
                    h_diff_sq=float(h_diff),
                    wall_ms=wall_ms,
                )
            )
        if rel_change <= config.tol:
            converged = True
            break

    final = executor.shutdown("converged" if converged else "max_iter")
    r_segs, u_segs = [], []
    if final is not None:
        for shard, payload in zip(shards, final):
            r_segs.append(payload[: shard.rows])
            u_segs.append(payload[shard.rows:])
    state = SolverState(
        x=x, r=r_segs, u=u_segs, eta=eta, eta_d=list(etas), k=iterations
    )
    return FitResult(
        coefficients=x,
        iterations=iterations,
        converged=converged,
        trace=trace,
        lambda_used=spec.lam,
        state=state,
        x_history=x_history,
        metadata={
            "eta": eta,
            "mu": mu,
            "solver": "pip",
            "variables_per_iteration": int(sum(row_counts)) + n,
            "kernel_backend": kernels.BACKEND,
        },
    )
