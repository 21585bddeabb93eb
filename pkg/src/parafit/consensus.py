"""Consensus-form parallel ADMM baseline for regularized least squares.

Each worker keeps a full local copy z_d of the coefficients constrained to a
shared x.  Per iteration the master computes

    x^{k+1} = prox_R( mean_d(z_d^k + u_d^k/mu), gamma = D*mu )

and every worker solves its ridge-regularized local least-squares problem

    (A_d'A_d + mu I) z_d = A_d'b_d + mu x^{k+1} - u_d,

then steps the dual u_d <- u_d - mu (x^{k+1} - z_d).  The baseline exists to
contrast with the row-split solver: it iterates (2D+1)*n variables and its
fixed point drifts with the partition count D.

The quadratic weight D*mu in the x-update comes from collapsing the D
penalty terms (mu/2)||x - z_d - u_d/mu||^2 at their mean; some write-ups
absorb the factor D into the display.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .cluster import WorkerLogic, spawn_cluster
from .prox import prox_regularizer
from .solver import SolverConfig, _ordered_sum
from .types import (
    FitResult,
    TraceRecord,
    UnsupportedFeature,
    check_shards,
    loss_values,
    regularizer_value,
)


@dataclass
class ConsensusState:
    x: np.ndarray
    z: list  # D vectors of length n
    u: list  # D dual vectors of length n
    k: int = 0


def consensus_x_update(z_d, u_d, mu, spec):
    """Coefficient update from the per-shard copies and duals."""
    if len(z_d) == 0:
        raise ValueError("at least one shard copy is required")
    D = len(z_d)
    zbar = _ordered_sum([np.asarray(z) for z in z_d]) / D
    ubar = _ordered_sum([np.asarray(u) for u in u_d]) / D
    return prox_regularizer(spec, zbar + ubar / mu, D * mu)


class _ZSolver:
    """Cached solver for (A'A + mu I) z = rhs on one shard.

    Uses the m_d x m_d system (mu I + A A') when the shard is wide
    (m_d < n), the n x n normal system otherwise; mu > 0 keeps either
    positive definite, so the Cholesky factor is reused across iterations.
    """

    def __init__(self, shard, mu):
        self.shard = shard
        self.mu = mu
        A = shard.matrix
        dense = A.toarray() if sp.issparse(A) else A
        m, n = dense.shape
        self.wide = m < n
        if self.wide:
            gram = dense @ dense.T + mu * np.eye(m)
        else:
            gram = dense.T @ dense + mu * np.eye(n)
        self.factor = scipy.linalg.cho_factor(gram)
        self.dense = dense

    def solve(self, rhs):
        if self.wide:
            # (A'A + mu I)^-1 = (I - A'(mu I + AA')^-1 A) / mu
            tmp = scipy.linalg.cho_solve(self.factor, self.dense @ rhs)
            return (rhs - self.dense.T @ tmp) / self.mu
        return scipy.linalg.cho_solve(self.factor, rhs)


def consensus_z_update_ls(shard, x_next, u_d, mu, zsolver=None):
    """Least-squares local update: solves (A'A + mu I) z = A'b + mu x - u."""
    if zsolver is None:
        zsolver = _ZSolver(shard, mu)
    rhs = shard.rmatvec(shard.response) + mu * np.asarray(x_next) - np.asarray(u_d)
    return zsolver.solve(rhs)


class _ConsensusWorker(WorkerLogic):
    """Owns (z_d, u_d); posts the payload z_d + u_d/mu each epoch.

    Stats: [loss_sum at A_d x, ||dz||^2 + ||du||^2, ||z||^2 + ||u||^2,
    ||x - z_d||, 0]; layout mirrors the row-split worker so the master loop
    aggregates both the same way.
    """

    def __init__(self, shard, spec, config):
        self.shard = shard
        self.shard_index = shard.shard_index
        self.spec = spec
        self.config = config
        self.mu = config.resolve_mu(spec)
        self.z = None
        self.u = None
        self.zsolver = None

    def setup(self, x0):
        self.z = np.array(x0, dtype=np.float64)
        self.u = np.full(len(x0), self.config.init_value)
        self.zsolver = _ZSolver(self.shard, self.mu)
        loss_sum = float(
            np.sum(loss_values(self.spec, self.shard.matvec(x0), self.shard.response))
        )
        stats = np.array(
            [loss_sum, 0.0, float(self.z @ self.z + self.u @ self.u), 0.0, 0.0]
        )
        return 0.0, self.z + self.u / self.mu, stats

    def step(self, k, x):
        mu = self.mu
        z_new = consensus_z_update_ls(self.shard, x, self.u, mu, self.zsolver)
        u_new = self.u - mu * (x - z_new)
        dz = z_new - self.z
        du = u_new - self.u
        loss_sum = float(
            np.sum(loss_values(self.spec, self.shard.matvec(x), self.shard.response))
        )
        stats = np.array(
            [
                loss_sum,
                float(dz @ dz + du @ du),
                float(z_new @ z_new + u_new @ u_new),
                float(np.linalg.norm(x - z_new)),
                0.0,
            ]
        )
        self.z, self.u = z_new, u_new
        return z_new + u_new / mu, stats

    def final_state(self):
        return np.concatenate([self.z, self.u])


def consensus_solve(spec, shards, config: SolverConfig = None, executor=None):
    """Fit with the consensus baseline; same stopping rule as the main solver.

    Restricted to the least-squares loss (other losses would need inner
    iterative z-solvers).  The stopping norm runs over the concatenated
    (x, z_1..z_D, u_1..u_D).
    """
    if spec.loss != "least_squares":
        raise UnsupportedFeature(
            "consensus baseline supports only the least_squares loss"
        )
    config = config or SolverConfig()
    shards = sorted(shards, key=lambda s: s.shard_index)
    n = check_shards(shards)
    D = len(shards)
    mu = config.resolve_mu(spec)
    x = np.full(n, config.init_value)

    if executor is None:
        executor = spawn_cluster(
            shards,
            lambda s: _ConsensusWorker(s, spec, config),
            transport=config.transport,
            timeout=config.timeout,
        )

    _, payloads, stats = executor.setup(x)
    trace = []
    x_history = [x.copy()] if config.record_iterates else None
    converged = False
    iterations = 0
    consensus_residual = None
    for k in range(1, config.max_iter + 1):
        t0 = time.perf_counter() if config.record_timing else 0.0
        zbar_plus = _ordered_sum(payloads) / D
        x_new = prox_regularizer(spec, zbar_plus, D * mu)
        payloads, stats = executor.epoch(k, x_new)
        agg = _ordered_sum(stats)
        loss_sum, delta_zu, norm_zu, cons_res, _ = agg
        dx = x - x_new
        rel_change = np.sqrt(float(dx @ dx) + delta_zu) / max(
            1.0, np.sqrt(float(x_new @ x_new) + norm_zu)
        )
        consensus_residual = float(cons_res)
        iterations = k
        x = x_new
        if x_history is not None:
            x_history.append(x.copy())
        if config.record_trace or k % 10 == 0 or rel_change <= config.tol:
            wall_ms = (time.perf_counter() - t0) * 1e3 if config.record_timing else 0.0
            trace.append(
                TraceRecord(
                    iteration=k,
                    objective=loss_sum + regularizer_value(spec, x),
                    rel_w_change=float(rel_change),
                    h_diff_sq=0.0,
                    wall_ms=wall_ms,
                )
            )
        if rel_change <= config.tol:
            converged = True
            break

    final = executor.shutdown("converged" if converged else "max_iter")
    z_segs, u_segs = [], []
    if final is not None:
        for payload in final:
            z_segs.append(payload[:n])
            u_segs.append(payload[n:])
    return FitResult(
        coefficients=x,
        iterations=iterations,
        converged=converged,
        trace=trace,
        lambda_used=spec.lam,
        state=ConsensusState(x=x, z=z_segs, u=u_segs, k=iterations),
        x_history=x_history,
        metadata={
            "mu": mu,
            "solver": "consensus",
            "variables_per_iteration": (2 * D + 1) * n,
            "consensus_residual": consensus_residual,
        },
    )
