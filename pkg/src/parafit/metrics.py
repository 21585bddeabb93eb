"""Model evaluation: accuracy, errors, sparsity, support recovery counts."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .types import DimensionMismatch

ZERO_TOL = 1e-6


@dataclass
class Metrics:
    sparsity_pct: float = None
    train_accuracy: float = None
    test_accuracy: float = None
    mae: float = None
    mse: float = None
    fn_count: int = None
    fp_count: int = None
    iterations: int = None
    wall_ms: float = None


def sparsity_pct(x, zero_tol=ZERO_TOL, intercept=False):
    """Percentage of (non-intercept) coefficients estimated as zero."""
    x = np.asarray(x)
    if intercept:
        x = x[1:]
    if x.size == 0:
        return 0.0
    return 100.0 * float(np.sum(np.abs(x) <= zero_tol)) / x.size


def classification_accuracy(x, dataset):
    """Percent of rows with sign(a_i' x) == b_i; sign(0) counts as +1."""
    pred = np.asarray(dataset.matrix @ x).ravel()
    signs = np.where(pred >= 0, 1.0, -1.0)
    return 100.0 * float(np.mean(signs == dataset.response))


def support_errors(x, true_support, zero_tol=ZERO_TOL, intercept=False):
    """(false negatives, false positives) of the estimated support."""
    x = np.asarray(x)
    offset = 1 if intercept else 0
    est = set(np.nonzero(np.abs(x[offset:]) > zero_tol)[0])
    truth = set(int(j) for j in true_support)
    fn = len(truth - est)
    fp = len(est - truth)
    return fn, fp


def evaluate(x, dataset, task, true_support=None, zero_tol=ZERO_TOL,
             intercept=False):
    """Compute the metric block for one fitted coefficient vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != dataset.n:
        raise DimensionMismatch(
            f"model has {x.shape[0]} coefficients, dataset has {dataset.n} features"
        )
    out = Metrics(sparsity_pct=sparsity_pct(x, zero_tol, intercept))
    if task == "classification":
        out.train_accuracy = classification_accuracy(x, dataset)
    else:
        residual = dataset.response - np.asarray(dataset.matrix @ x).ravel()
        out.mae = float(np.mean(np.abs(residual)))
        out.mse = float(np.mean(residual**2))
    if true_support is not None:
        out.fn_count, out.fp_count = support_errors(x, true_support, zero_tol,
                                                    intercept)
    return out
