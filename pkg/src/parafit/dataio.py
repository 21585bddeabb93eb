"""Dataset ingestion, the synthetic benchmark generator, and row partitioning.

Storage is picked at load time: datasets denser than ``FILL_THRESHOLD`` are
held as dense arrays, sparser ones as CSR.  Both expose the same mat-vec
contract through :class:`~parafit.types.DesignShard`.
"""
from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.special import ndtr

from .types import DesignShard, ParafitError

FILL_THRESHOLD = 0.25

#: 0-based columns carrying signal in the synthetic model (x6, x12, x15, x20)
SYNTHETIC_SUPPORT = (5, 11, 14, 19)


class ParseError(ParafitError):
    pass


@dataclass
class Dataset:
    matrix: object  # (m, n) ndarray or csr_matrix
    response: np.ndarray
    feature_names: list = None

    @property
    def m(self):
        return self.matrix.shape[0]

    @property
    def n(self):
        return self.matrix.shape[1]

    @property
    def is_sparse(self):
        return sp.issparse(self.matrix)


def _choose_storage(matrix):
    """Dense below/at the fill threshold boundary, sparse above it."""
    if sp.issparse(matrix):
        size = matrix.shape[0] * matrix.shape[1]
        fill = matrix.nnz / size if size else 1.0
        if fill > FILL_THRESHOLD:
            return matrix.toarray()
        return sp.csr_matrix(matrix)
    return np.asarray(matrix, dtype=np.float64)


def _open_text(source, mode="r"):
    if hasattr(source, "read") or hasattr(source, "write"):
        return source, False
    return open(source, mode), True


def read_libsvm(source, n_hint=None):
    """Parse 'label idx:val ...' lines (1-based, strictly increasing indices)."""
    stream, close = _open_text(source)
    labels = []
    data, indices, indptr = [], [], [0]
    n = n_hint or 0
    try:
        for lineno, line in enumerate(stream, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            tokens = line.split()
            try:
                labels.append(float(tokens[0]))
            except ValueError:
                raise ParseError(f"line {lineno}: bad label {tokens[0]!r}") from None
            prev = 0
            for tok in tokens[1:]:
                try:
                    idx_s, val_s = tok.split(":", 1)
                    idx = int(idx_s)
                    val = float(val_s)
                except ValueError:
                    raise ParseError(f"line {lineno}: bad feature {tok!r}") from None
                if idx < 1:
                    raise ParseError(f"line {lineno}: index {idx} must be >= 1")
                if idx <= prev:
                    raise ParseError(
                        f"line {lineno}: indices must be strictly increasing "
                        f"({idx} after {prev})"
                    )
                prev = idx
                indices.append(idx - 1)
                data.append(val)
                n = max(n, idx)
            indptr.append(len(data))
    finally:
        if close:
            stream.close()
    matrix = sp.csr_matrix(
        (np.array(data), np.array(indices, dtype=np.intp), np.array(indptr, dtype=np.intp)),
        shape=(len(labels), n),
    )
    return Dataset(matrix=_choose_storage(matrix), response=np.array(labels))


def write_libsvm(dataset, target):
    """Writer counterpart of :func:`read_libsvm` (1-based indices)."""
    stream, close = _open_text(target, "w")
    try:
        matrix = sp.csr_matrix(dataset.matrix)
        for i in range(dataset.m):
            row = matrix.getrow(i)
            feats = " ".join(
                f"{j + 1}:{float(v)!r}" for j, v in zip(row.indices, row.data)
            )
            label = float(dataset.response[i])
            stream.write(f"{label!r} {feats}".rstrip() + "\n")
    finally:
        if close:
            stream.close()


def read_csv(source, has_header=False, label_column=0):
    """Dense numeric table; the label column is extracted, the rest kept in order."""
    stream, close = _open_text(source)
    try:
        rows = []
        names = None
        for lineno, line in enumerate(stream, start=1):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            if has_header and names is None:
                names = [c.strip() for c in cells]
                continue
            try:
                rows.append([float(c) for c in cells])
            except ValueError as exc:
                bad = next(
                    i for i, c in enumerate(cells)
                    if not _is_number(c)
                )
                raise ParseError(
                    f"line {lineno}, column {bad + 1}: non-numeric cell "
                    f"{cells[bad]!r}"
                ) from exc
            if len(rows[-1]) != len(rows[0]):
                raise ParseError(
                    f"line {lineno}: ragged row ({len(rows[-1])} cells, "
                    f"expected {len(rows[0])})"
                )
    finally:
        if close:
            stream.close()
    if not rows:
        raise ParseError("empty table")
    table = np.array(rows)
    if not 0 <= label_column < table.shape[1]:
        raise ParseError(f"label column {label_column} out of range")
    response = table[:, label_column]
    matrix = np.delete(table, label_column, axis=1)
    if names is not None:
        names = [nm for i, nm in enumerate(names) if i != label_column]
    return Dataset(matrix=matrix, response=response, feature_names=names)


def _is_number(s):
    try:
        float(s)
        return True
    except ValueError:
        return False


def write_csv(dataset, target, label_column=0):
    stream, close = _open_text(target, "w")
    try:
        matrix = dataset.matrix.toarray() if dataset.is_sparse else dataset.matrix
        for i in range(dataset.m):
            cells = [repr(float(v)) for v in matrix[i]]
            cells.insert(label_column, repr(float(dataset.response[i])))
            stream.write(",".join(cells) + "\n")
    finally:
        if close:
            stream.close()


def gen_synthetic(seed, m, p):
    """Heteroscedastic sparse regression benchmark data.

    Covariates follow an AR(1) correlation 0.5^|i-j|, generated by the exact
    recursion xt_j = 0.5 xt_{j-1} + sqrt(0.75) z_j; the first column is
    mapped through the standard normal CDF.  Response:
    y = x6 + x12 + x15 + x20 + 0.7 * x1 * eps with eps ~ N(0,1) i.i.d. per
    observation.  Returns (Dataset, true_support) with 0-based support
    column positions.
    """
    if p < 20:
        raise ValueError("p must be >= 20 so the signal columns exist")
    if m < 1:
        raise ValueError("m must be >= 1")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((m, p))
    xt = np.empty((m, p))
    xt[:, 0] = z[:, 0]
    scale = np.sqrt(1.0 - 0.25)
    for j in range(1, p):
        xt[:, j] = 0.5 * xt[:, j - 1] + scale * z[:, j]
    x = xt.copy()
    x[:, 0] = ndtr(xt[:, 0])
    eps = rng.standard_normal(m)
    y = x[:, list(SYNTHETIC_SUPPORT)].sum(axis=1) + 0.7 * x[:, 0] * eps
    return Dataset(matrix=x, response=y), np.array(SYNTHETIC_SUPPORT, dtype=np.intp)


def add_intercept(dataset):
    """Prepend an all-ones column (regularization weight 0 by convention)."""
    if dataset.is_sparse:
        ones = sp.csr_matrix(np.ones((dataset.m, 1)))
        matrix = sp.hstack([ones, dataset.matrix], format="csr")
    else:
        matrix = np.column_stack([np.ones(dataset.m), dataset.matrix])
    return Dataset(matrix=matrix, response=dataset.response,
                   feature_names=dataset.feature_names)


def partition(dataset, D):
    """Contiguous order-preserving row blocks; the first m % D get one extra."""
    m = dataset.m
    if not 1 <= D <= m:
        raise ValueError(f"D must be in [1, {m}], got {D}")
    base, extra = divmod(m, D)
    shards = []
    start = 0
    for d in range(D):
        size = base + (1 if d < extra else 0)
        block = dataset.matrix[start:start + size]
        shards.append(
            DesignShard(
                shard_index=d,
                matrix=block,
                response=dataset.response[start:start + size],
            )
        )
        start += size
    return shards
