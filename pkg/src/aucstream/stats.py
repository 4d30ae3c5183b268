"""Per-class running statistics: count, mean, and covariance.

Two interchangeable covariance forms are provided.  DenseClassStats
carries the full covariance matrix forward with an incremental
recurrence; SparseClassStats keeps the running sum of instance outer
products (upper triangle only) and reconstructs the covariance action
on demand, which is the cheap option for high-dimensional sparse data.

All statistics are float64; the recurrences are subtraction-heavy and
do not survive single precision.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse as sp

from .data import SparseVector
from .exceptions import DataError

__all__ = [
    "SymmetricPairSum",
    "DenseClassStats",
    "SparseClassStats",
    "batch_stats_oracle",
]


class SymmetricPairSum:
    """Accumulated sum of sparse outer products, stored as a map from
    coordinate pairs (i <= j) to values.

    Recent outer products are buffered as the raw (indices, values) of
    their source vectors: the buffered part of a matrix-vector product is
    just sum_x x (x . w), which touches nnz(x) elements per vector rather
    than nnz(x)^2 pairs.  The buffer is periodically compacted into a CSR
    upper triangle (with transpose and diagonal caches for the symmetric
    action); the pair-keyed mapping interface is preserved via
    :meth:`entry` and :meth:`items`.
    """

    def __init__(self, dim: int, compact_threshold: int = 262_144):
        self.dim = dim
        self._threshold = compact_threshold
        self._buf_idx: list[np.ndarray] = []
        self._buf_val: list[np.ndarray] = []
        self._pending_pairs = 0
        self._matrix: sp.csr_matrix | None = None
        self._matrix_t: sp.csr_matrix | None = None
        self._diag: np.ndarray | None = None

    def add_outer(self, indices: np.ndarray, values: np.ndarray) -> None:
        """Add x x^T for a sparse vector given by (indices, values)."""
        k = indices.size
        if k == 0:
            return
        self._buf_idx.append(indices)
        self._buf_val.append(values)
        self._pending_pairs += k * (k + 1) // 2
        if self._pending_pairs >= self._threshold:
            self._compact()

    def _compact(self) -> None:
        if not self._buf_idx:
            return
        rows, cols, vals = [], [], []
        for idx, val in zip(self._buf_idx, self._buf_val):
            r, c = np.triu_indices(idx.size)
            rows.append(idx[r])
            cols.append(idx[c])
            vals.append(val[r] * val[c])
        m = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.dim, self.dim),
        ).tocsr()
        self._matrix = m if self._matrix is None else self._matrix + m
        self._matrix_t = self._matrix.T.tocsr()
        self._diag = self._matrix.diagonal()
        self._buf_idx, self._buf_val = [], []
        self._pending_pairs = 0

    def apply(self, w: np.ndarray) -> np.ndarray:
        """Matrix-vector product with the full symmetric matrix."""
        out = np.zeros(self.dim)
        if self._matrix is not None:
            out += self._matrix @ w
            out += self._matrix_t @ w
            out -= self._diag * w
        if self._buf_idx:
            idx = np.concatenate(self._buf_idx)
            vals = np.concatenate(self._buf_val)
            lengths = np.array([a.size for a in self._buf_idx])
            offsets = np.concatenate([[0], np.cumsum(lengths[:-1])])
            scores = np.add.reduceat(vals * w[idx], offsets)
            out += np.bincount(
                idx, weights=vals * np.repeat(scores, lengths), minlength=self.dim
            )
        return out

    def entry(self, i: int, j: int) -> float:
        """Value at coordinate pair (i, j); symmetric lookup."""
        if i > j:
            i, j = j, i
        self._compact()
        if self._matrix is None:
            return 0.0
        return float(self._matrix[i, j])

    def items(self):
        """Iterate ((i, j), value) over stored pairs, i <= j."""
        self._compact()
        if self._matrix is None:
            return
        coo = self._matrix.tocoo()
        for i, j, v in zip(coo.row, coo.col, coo.data):
            yield (int(i), int(j)), float(v)

    def __len__(self) -> int:
        self._compact()
        return 0 if self._matrix is None else int(self._matrix.nnz)

    def to_dict(self) -> dict:
        return {f"{i},{j}": v for (i, j), v in self.items()}


class _ClassStatsBase:
    """Shared count/mean bookkeeping."""

    def __init__(self, dim: int):
        self.dim = dim
        self.count = 0
        self.mean = np.zeros(dim)

    def _check_dim(self, x: SparseVector) -> None:
        if x.dim != self.dim:
            raise DataError(f"instance dimension {x.dim} != stats dimension {self.dim}")

    def update_mean(self, x: SparseVector) -> np.ndarray:
        """Advance count and mean; returns the pre-update mean.

        Uses the running-average recurrence c_t = c_{t-1} + (x - c_{t-1}) / T_t
        exactly as written.
        """
        self._check_dim(x)
        prev = self.mean.copy()
        self.count += 1
        self.mean = prev + (x.to_dense() - prev) / self.count
        return prev


class DenseClassStats(_ClassStatsBase):
    """Running mean plus full covariance matrix, updated incrementally."""

    def __init__(self, dim: int):
        super().__init__(dim)
        self.cov = np.zeros((dim, dim))

    def update(self, x: SparseVector) -> None:
        """Absorb one instance: advance the mean, then the covariance."""
        prev = self.update_mean(x)
        t = self.count
        xd = x.to_dense()
        outer_prev = np.outer(prev, prev)
        self.cov = (
            self.cov
            + outer_prev
            - np.outer(self.mean, self.mean)
            + (np.outer(xd, xd) - self.cov - outer_prev) / t
        )
        # the recurrence is symmetric only in exact arithmetic
        self.cov = (self.cov + self.cov.T) / 2.0

    def cov_apply(self, w: np.ndarray) -> np.ndarray:
        if self.count < 1:
            raise DataError("covariance undefined before any instance")
        return self.cov @ w

    def as_dict(self) -> dict:
        return {
            "count": self.count,
            "mean": self.mean.tolist(),
            "cov": self.cov.tolist(),
        }


class SparseClassStats(_ClassStatsBase):
    """Running mean plus the outer-product sum form of the covariance.

    The implied covariance is zsum / count - mean mean^T; it is never
    materialized, only applied to vectors.
    """

    def __init__(self, dim: int, compact_threshold: int = 262_144):
        super().__init__(dim)
        self.zsum = SymmetricPairSum(dim, compact_threshold=compact_threshold)
        self.touched = np.zeros(dim, dtype=bool)

    def update(self, x: SparseVector) -> None:
        self.update_mean(x)
        self.zsum.add_outer(x.indices, x.values)
        self.touched[x.indices] = True

    def cov_apply(self, w: np.ndarray) -> np.ndarray:
        if self.count < 1:
            raise DataError("covariance undefined before any instance")
        return self.zsum.apply(w) / self.count - self.mean * (self.mean @ w)

    def as_dict(self) -> dict:
        return {
            "count": self.count,
            "mean": self.mean.tolist(),
            "zsum": self.zsum.to_dict(),
        }


def batch_stats_oracle(vectors, dim: int | None = None):
    """Direct batch evaluation of mean and covariance.

    Test and verification oracle: mean = sum(x_i) / t and
    S = sum(x_i x_i^T) / t - mean mean^T, computed densely with no
    incremental shortcuts.
    """
    vectors = list(vectors)
    if not vectors:
        raise DataError("batch statistics need at least one instance")
    if dim is None:
        dim = vectors[0].dim
    x = np.stack([v.to_dense() for v in vectors])
    mean = x.sum(axis=0) / len(vectors)
    cov = (x.T @ x) / len(vectors) - np.outer(mean, mean)
    return mean, cov
