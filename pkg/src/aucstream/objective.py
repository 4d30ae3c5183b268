"""Pairwise square-surrogate loss, its per-round gradient, and the full
batch objective.

The per-round loss compares the incoming instance against all previously
seen instances of the opposite class; with running class statistics the
sum collapses to mean/covariance terms, which is what the learners use.
Buffer-based brute-force forms are provided as independent oracles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset, SparseVector
from .exceptions import ConfigError, DataError
from .stats import _ClassStatsBase

__all__ = [
    "HyperParams",
    "per_round_loss",
    "per_round_gradient",
    "gradient_oracle",
    "full_objective",
    "full_objective_gradient",
    "minimize_full_objective",
]


@dataclass(frozen=True)
class HyperParams:
    """Learner hyperparameters: learning rate eta, L2 weight lambda_,
    L1 weight theta, and the preconditioner smoothing delta."""

    eta: float
    lambda_: float
    theta: float = 0.0
    delta: float = 1e-8

    def __post_init__(self):
        for name in ("eta", "lambda_", "theta", "delta"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ConfigError(f"{name} must be finite, got {v!r}")
        if self.eta <= 0:
            raise ConfigError(f"eta must be > 0, got {self.eta}")
        if self.lambda_ < 0 or self.theta < 0 or self.delta < 0:
            raise ConfigError("lambda_, theta and delta must be >= 0")


def _opposite_count(opposite) -> int:
    if isinstance(opposite, _ClassStatsBase):
        return opposite.count
    return len(opposite)


def per_round_loss(w: np.ndarray, x: SparseVector, y: int, opposite, lambda_: float) -> float:
    """Regularized average square loss of (x, y) against every previously
    seen opposite-class instance.

    ``opposite`` is either a class-statistics object or a sequence of
    stored opposite-class SparseVectors (brute force).  With no
    opposite-class history the loss is defined as 0 and no gradient step
    is taken (the skip rule).
    """
    t_opp = _opposite_count(opposite)
    if t_opp == 0:
        return 0.0
    reg = 0.5 * lambda_ * float(w @ w)
    u = 1.0 - y * x.dot(w)
    if isinstance(opposite, _ClassStatsBase):
        cw = float(opposite.mean @ w)
        ws_w = float(w @ opposite.cov_apply(w))
        return reg + 0.5 * (u * u + 2.0 * u * y * cw + ws_w + cw * cw)
    total = 0.0
    for xi in opposite:
        m = u + y * xi.dot(w)
        total += m * m
    return reg + total / (2.0 * t_opp)


def per_round_gradient(
    w: np.ndarray, x: SparseVector, y: int, opposite: _ClassStatsBase, lambda_: float
) -> np.ndarray:
    """Gradient of :func:`per_round_loss` in mean/covariance form.

    For y = +1 with negative-class mean c and covariance S:
    lambda_ w - x + c + (x - c)((x - c) . w) + S w; the sign-flipped form
    for y = -1.  The rank-one term goes through the inner product, never
    a materialized outer product.
    """
    if opposite.count < 1:
        raise DataError("opposite-class statistics are empty; callers must skip")
    xd = x.to_dense()
    v = xd - opposite.mean
    g = lambda_ * w + opposite.cov_apply(w) + v * float(v @ w)
    if y == 1:
        g += opposite.mean - xd
    else:
        g += xd - opposite.mean
    return g


def gradient_oracle(w: np.ndarray, x: SparseVector, y: int, buffer, lambda_: float) -> np.ndarray:
    """Brute-force gradient over a stored opposite-class buffer
    (test oracle): lambda_ w + mean_i of -y (x - x_i)(1 - y (x - x_i) . w)."""
    buffer = list(buffer)
    if not buffer:
        raise DataError("gradient oracle needs a nonempty buffer")
    xd = x.to_dense()
    diffs = np.stack([xd - xi.to_dense() for xi in buffer])
    margins = 1.0 - y * (diffs @ w)
    return lambda_ * w - (y / len(buffer)) * (diffs.T @ margins)


def _class_matrices(dataset: Dataset):
    labels = dataset.labels
    pos = dataset.matrix[labels == 1]
    neg = dataset.matrix[labels == -1]
    return pos, neg


def full_objective(w: np.ndarray, dataset: Dataset, lambda_: float) -> float:
    """Batch objective: lambda_/2 ||w||^2 plus the average square loss
    over all positive-negative pairs, halved."""
    dataset.require_both_classes()
    pos, neg = _class_matrices(dataset)
    p = pos @ w
    q = neg @ w
    u = 1.0 - p
    n_pos, n_neg = p.size, q.size
    pair_sum = (
        n_neg * float(u @ u)
        + 2.0 * float(u.sum()) * float(q.sum())
        + n_pos * float(q @ q)
    )
    return 0.5 * lambda_ * float(w @ w) + pair_sum / (2.0 * n_pos * n_neg)


def full_objective_gradient(w: np.ndarray, dataset: Dataset, lambda_: float) -> np.ndarray:
    """Exact gradient of :func:`full_objective`, computed in O(nnz)."""
    dataset.require_both_classes()
    pos, neg = _class_matrices(dataset)
    p = pos @ w
    q = neg @ w
    n_pos, n_neg = p.size, q.size
    sum_pos = np.asarray(pos.sum(axis=0)).ravel()
    sum_neg = np.asarray(neg.sum(axis=0)).ravel()
    sum_d = n_neg * sum_pos - n_pos * sum_neg
    quad = (
        n_neg * (pos.T @ p)
        - float(p.sum()) * sum_neg
        - float(q.sum()) * sum_pos
        + n_pos * (neg.T @ q)
    )
    return lambda_ * w - (sum_d - quad) / (n_pos * n_neg)


def minimize_full_objective(
    dataset: Dataset,
    lambda_: float,
    tol: float = 1e-8,
    max_iter: int = 100_000,
):
    """Minimize the batch objective by projected gradient descent.

    Step size 1/(lambda_ + 4) (inverse Lipschitz bound for normalized
    instances); stops when the gradient norm drops below ``tol`` or after
    ``max_iter`` iterations.  Returns (w_star, achieved_gradient_norm);
    the gradient norm is the optimality certificate, callers decide
    whether it is good enough.
    """
    dataset.require_both_classes()
    radius = 1.0 / math.sqrt(lambda_) if lambda_ > 0 else None
    step = 1.0 / (lambda_ + 4.0)
    w = np.zeros(dataset.dim)
    for _ in range(max_iter):
        g = full_objective_gradient(w, dataset, lambda_)
        gnorm = float(np.linalg.norm(g))
        if gnorm <= tol:
            return w, gnorm
        w = w - step * g
        if radius is not None:
            n = float(np.linalg.norm(w))
            if n > radius:
                w *= radius / n
    gnorm = float(np.linalg.norm(full_objective_gradient(w, dataset, lambda_)))
    return w, gnorm
