"""Shared mathematical objects: partitioned data, problem description, solver state.

A fitting problem is ``min_x sum_i loss_i(a_i' x, b_i) + penalty(x)`` with the
rows of the design split into contiguous shards, one per worker.  All modules
agree on one global row order: the concatenation of shards by ascending
``shard_index``, which makes every reduction deterministic.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

CLASSIFICATION_LOSSES = ("hinge", "squared_hinge", "logistic")
REGRESSION_LOSSES = ("least_squares", "quantile", "huber", "svr")
LOSSES = REGRESSION_LOSSES + CLASSIFICATION_LOSSES
REGULARIZERS = ("l1", "l2_squared", "group_l21")


class ParafitError(Exception):
    """Base class for structured errors raised by this package."""


class DimensionMismatch(ParafitError):
    def __init__(self, message, shard_index=None):
        if shard_index is not None:
            message = f"shard {shard_index}: {message}"
        super().__init__(message)
        self.shard_index = shard_index


class UnsupportedFeature(ParafitError):
    pass


def _as_matrix(matrix):
    if sp.issparse(matrix):
        return sp.csr_matrix(matrix)
    arr = np.asarray(matrix, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("design matrix must be 2-dimensional")
    return arr


@dataclass(frozen=True)
class DesignShard:
    """One worker's row block (A_d, b_d).  Immutable once constructed."""

    shard_index: int
    matrix: object  # (m_d, n) ndarray or csr_matrix
    response: np.ndarray  # (m_d,)

    def __post_init__(self):
        object.__setattr__(self, "matrix", _as_matrix(self.matrix))
        object.__setattr__(
            self, "response", np.asarray(self.response, dtype=np.float64).ravel()
        )
        if self.response.shape[0] != self.matrix.shape[0]:
            raise DimensionMismatch(
                f"response length {self.response.shape[0]} != row count "
                f"{self.matrix.shape[0]}",
                shard_index=self.shard_index,
            )
        if sp.issparse(self.matrix):
            if self.matrix.shape[1] and self.matrix.indices.size:
                if self.matrix.indices.max() >= self.matrix.shape[1]:
                    raise DimensionMismatch(
                        "sparse column index out of bounds",
                        shard_index=self.shard_index,
                    )

    @property
    def rows(self):
        return self.matrix.shape[0]

    @property
    def cols(self):
        return self.matrix.shape[1]

    @property
    def is_sparse(self):
        return sp.issparse(self.matrix)

    def matvec(self, x):
        """A_d @ x as a dense vector."""
        return np.asarray(self.matrix @ x).ravel()

    def rmatvec(self, v):
        """A_d.T @ v as a dense vector."""
        return np.asarray(self.matrix.T @ v).ravel()


def check_shards(shards, classification=False):
    """Validate a shard sequence: common width, ascending indices, labels."""
    if not shards:
        raise ValueError("at least one shard is required")
    n = shards[0].cols
    for shard in shards:
        if shard.cols != n:
            raise DimensionMismatch(
                f"feature count {shard.cols} != {n}", shard_index=shard.shard_index
            )
        if classification and shard.rows:
            labels = np.unique(shard.response)
            if not np.all(np.isin(labels, (-1.0, 1.0))):
                raise ValueError(
                    f"shard {shard.shard_index}: classification responses must "
                    "be in {-1, +1}"
                )
    return n


@dataclass(frozen=True)
class ProblemSpec:
    """Loss + regularizer description shared by all workers.

    ``lam`` may be a scalar, a per-coordinate weight vector (l1/l2_squared) or
    a per-group weight vector (group_l21).  ``mu`` is the augmented-Lagrangian
    penalty.  With ``intercept`` enabled, coordinate 0 is the all-ones column
    and carries regularization weight 0.
    """

    loss: str
    regularizer: str = "l1"
    lam: object = 1.0
    mu: float = 0.1
    intercept: bool = False
    tau: float = 0.5
    delta: float = 1.345
    epsilon: float = 0.1
    groups: tuple = None

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise UnsupportedFeature(f"unknown loss {self.loss!r}")
        if self.regularizer not in REGULARIZERS:
            raise UnsupportedFeature(f"unknown regularizer {self.regularizer!r}")
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        if self.loss == "quantile" and not 0.0 < self.tau < 1.0:
            raise ValueError("tau must lie in (0, 1)")
        if self.loss == "huber" and self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.loss == "svr" and self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        lam = self.lam
        if np.any(np.asarray(lam) < 0):
            raise ValueError("lambda weights must be nonnegative")
        if self.regularizer == "group_l21":
            if self.groups is None:
                raise ValueError("group_l21 requires groups")
            object.__setattr__(
                self,
                "groups",
                tuple(np.asarray(g, dtype=np.intp) for g in self.groups),
            )

    @property
    def task(self):
        return "classification" if self.loss in CLASSIFICATION_LOSSES else "regression"

    def with_lambda(self, lam):
        return ProblemSpec(
            loss=self.loss,
            regularizer=self.regularizer,
            lam=lam,
            mu=self.mu,
            intercept=self.intercept,
            tau=self.tau,
            delta=self.delta,
            epsilon=self.epsilon,
            groups=self.groups,
        )

    def validate_groups(self, n):
        """Groups must partition {0..n-1} into disjoint nonempty sets."""
        seen = np.zeros(n, dtype=bool)
        for g in self.groups:
            if g.size == 0:
                raise ValueError("empty group")
            if np.any(g < 0) or np.any(g >= n):
                raise ValueError("group index out of range")
            if np.any(seen[g]):
                raise ValueError("overlapping groups")
            seen[g] = True
        if not seen.all():
            raise ValueError("groups do not cover all coordinates")

    def lambda_weights(self, n):
        """Per-coordinate (or per-group) nonnegative penalty weights."""
        if self.regularizer == "group_l21":
            lam = np.broadcast_to(
                np.asarray(self.lam, dtype=np.float64), (len(self.groups),)
            ).copy()
            if self.intercept:
                raise UnsupportedFeature("intercept with group_l21 is not supported")
            return lam
        lam = np.broadcast_to(np.asarray(self.lam, dtype=np.float64), (n,)).copy()
        if self.intercept:
            lam[0] = 0.0
        return lam


def loss_values(spec, pred, b):
    """Elementwise loss values at predictions ``pred`` for responses ``b``."""
    pred = np.asarray(pred, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if spec.loss == "least_squares":
        return 0.5 * (b - pred) ** 2
    if spec.loss == "quantile":
        c = b - pred
        return c * (spec.tau - (c < 0))
    if spec.loss == "huber":
        c = np.abs(b - pred)
        return np.where(c <= spec.delta, 0.5 * c**2, spec.delta * c - 0.5 * spec.delta**2)
    if spec.loss == "svr":
        return np.maximum(np.abs(b - pred) - spec.epsilon, 0.0)
    margin = b * pred
    if spec.loss == "hinge":
        return np.maximum(1.0 - margin, 0.0)
    if spec.loss == "squared_hinge":
        return 0.5 * np.maximum(1.0 - margin, 0.0) ** 2
    # logistic: log(1 + exp(-margin)), overflow-safe
    return np.logaddexp(0.0, -margin)


def regularizer_value(spec, x):
    x = np.asarray(x, dtype=np.float64)
    w = spec.lambda_weights(x.shape[0])
    if spec.regularizer == "l1":
        return float(np.sum(w * np.abs(x)))
    if spec.regularizer == "l2_squared":
        return float(np.sum(w * x**2))
    return float(sum(w[i] * np.linalg.norm(x[g]) for i, g in enumerate(spec.groups)))


def objective_value(spec, shards, x):
    """Total objective sum_i loss_i + penalty at ``x`` over all shards.

    Summation runs in ascending shard-index order so the floating-point
    result does not depend on how the rows were partitioned.
    """
    x = np.asarray(x, dtype=np.float64)
    total = 0.0
    for shard in sorted(shards, key=lambda s: s.shard_index):
        if shard.cols != x.shape[0]:
            raise DimensionMismatch(
                f"x has length {x.shape[0]}, expected {shard.cols}",
                shard_index=shard.shard_index,
            )
        total += float(np.sum(loss_values(spec, shard.matvec(x), shard.response)))
    return total + regularizer_value(spec, x)


@dataclass
class SolverState:
    """The ADMM triple w = (x, r, u) with r, u stored as per-shard segments."""

    x: np.ndarray
    r: list  # per-shard segments
    u: list
    eta: float = 0.0
    eta_d: list = field(default_factory=list)
    k: int = 0

    def r_full(self):
        return np.concatenate(self.r) if self.r else np.zeros(0)

    def u_full(self):
        return np.concatenate(self.u) if self.u else np.zeros(0)

    def concatenated(self):
        return np.concatenate([self.x, self.r_full(), self.u_full()])


@dataclass
class TraceRecord:
    iteration: int
    objective: float
    rel_w_change: float
    h_diff_sq: float
    wall_ms: float


@dataclass
class FitResult:
    """Outcome of one solve: coefficients, convergence info and trace."""

    coefficients: np.ndarray
    iterations: int
    converged: bool
    trace: list
    lambda_used: object = None
    state: SolverState = None
    x_history: list = None
    metadata: dict = field(default_factory=dict)
