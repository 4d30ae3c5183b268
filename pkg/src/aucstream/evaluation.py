"""Exact AUC scoring, model sparsity, convergence curves, and the
adaptive-learner regret-bound checker.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import Dataset, Instance
from .exceptions import ConfigError, DataError, NumericError
from .learners import ModelState, Snapshot, materialized_weights, train_single_pass
from .objective import HyperParams, minimize_full_objective, per_round_loss

__all__ = [
    "auc_from_scores",
    "auc_score",
    "model_sparsity",
    "RegretCheck",
    "regret_bound_check",
    "CurvePoint",
    "convergence_curve",
    "write_curve_csv",
]


def auc_from_scores(scores, labels) -> float:
    """Exact AUC of real-valued scores against labels in {-1, +1}.

    Strict wins count 1, score ties count 1/2 (tested with exact
    floating-point equality), normalized by n_pos * n_neg.  Computed in
    O(n log n) with midranks; the numerator is a sum of half-integers and
    therefore exact, so the result matches pairwise enumeration bit for
    bit.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos_mask = labels == 1
    n_pos = int(pos_mask.sum())
    n_neg = int(scores.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise DataError("AUC needs at least one positive and one negative")
    uniq, inverse, counts = np.unique(scores, return_inverse=True, return_counts=True)
    starts = np.cumsum(counts) - counts + 1
    midranks = starts + (counts - 1) / 2.0
    rank_sum_pos = float(midranks[inverse[pos_mask]].sum())
    u = rank_sum_pos - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def _weights_of(model_or_weights) -> np.ndarray:
    if isinstance(model_or_weights, ModelState):
        return materialized_weights(model_or_weights)
    if isinstance(model_or_weights, Snapshot):
        return model_or_weights.weights
    return np.asarray(model_or_weights, dtype=np.float64)


def auc_score(model_or_weights, test_set: Dataset) -> float:
    """AUC of a linear model's decision scores on a test dataset."""
    w = _weights_of(model_or_weights)
    scores = test_set.matrix @ w
    return auc_from_scores(scores, test_set.labels)


def model_sparsity(w: np.ndarray, dimension: int | None = None) -> float:
    """Fraction of exactly-zero coordinates in the weight vector."""
    w = np.asarray(w)
    if dimension is None:
        dimension = w.size
    zeros = dimension - np.count_nonzero(w)
    return zeros / dimension


@dataclass(frozen=True)
class RegretCheck:
    lhs: float
    rhs: float
    holds: bool
    wstar_grad_norm: float


def regret_bound_check(
    trajectory: Sequence[np.ndarray],
    stream: Sequence[Instance],
    lambda_: float,
    w_star: np.ndarray | None = None,
    slack: float = 1e-8,
    wstar_tol: float = 1e-8,
) -> RegretCheck:
    """Numerically check the adaptive learner's regret inequality.

    lhs is the cumulative per-round loss along the trajectory minus the
    loss of the fixed comparator w_star (the batch-objective minimizer,
    certified by its gradient norm).  rhs is
    2 D_inf sum_i sqrt(sum_t [(lambda_ w_t_i)^2 + C r_t_i^2]) with
    D_inf = 2 / sqrt(lambda_), C = (1 + 2 / sqrt(lambda_))^2, and r_t_i
    the largest coordinate gap between x_t and any earlier instance
    (all earlier instances, either class: the looser, safe reading).

    The stream must be normalized (||x|| <= 1); the constant C is derived
    under that assumption.  ``trajectory[t]`` is the weight vector in
    force when instance t arrived (pre-update).
    """
    if lambda_ <= 0:
        raise ConfigError("regret check requires lambda_ > 0")
    stream = list(stream)
    trajectory = list(trajectory)
    if len(trajectory) != len(stream):
        raise ConfigError("trajectory and stream lengths differ")
    if not stream:
        return RegretCheck(lhs=0.0, rhs=0.0, holds=True, wstar_grad_norm=0.0)
    for inst in stream:
        if inst.features.norm() > 1.0 + 1e-9:
            raise DataError("regret check refuses unnormalized streams (||x|| > 1)")

    dim = stream[0].features.dim
    if w_star is None:
        dataset = Dataset(stream, dim, name="regret-stream")
        w_star, gnorm = minimize_full_objective(dataset, lambda_, tol=wstar_tol)
        if gnorm > wstar_tol:
            raise NumericError(
                f"comparator not certified: gradient norm {gnorm:.3e} > {wstar_tol:.1e}"
            )
    else:
        gnorm = float("nan")

    d_inf = 2.0 / math.sqrt(lambda_)
    c = (1.0 + 2.0 / math.sqrt(lambda_)) ** 2

    lhs = 0.0
    buffers = {1: [], -1: []}
    running_min = np.full(dim, np.inf)
    running_max = np.full(dim, -np.inf)
    per_coord = np.zeros(dim)

    for t, (inst, w_t) in enumerate(zip(stream, trajectory)):
        x, y = inst.features, inst.label
        opposite = buffers[-y]
        lhs += per_round_loss(w_t, x, y, opposite, lambda_)
        lhs -= per_round_loss(w_star, x, y, opposite, lambda_)

        xd = x.to_dense()
        if t == 0:
            r = np.zeros(dim)
        else:
            r = np.maximum(running_max - xd, xd - running_min)
            np.maximum(r, 0.0, out=r)
        per_coord += (lambda_ * w_t) ** 2 + c * r * r

        buffers[y].append(x)
        np.minimum(running_min, xd, out=running_min)
        np.maximum(running_max, xd, out=running_max)

    rhs = 2.0 * d_inf * float(np.sqrt(per_coord).sum())
    return RegretCheck(lhs=lhs, rhs=rhs, holds=lhs <= rhs + slack, wstar_grad_norm=gnorm)


@dataclass(frozen=True)
class CurvePoint:
    """One sampled point of a convergence curve."""

    rounds_seen: int
    test_auc: float
    elapsed: float


def convergence_curve(
    train_set: Dataset,
    test_set: Dataset,
    algorithm: str,
    params: HyperParams,
    schedule: Sequence[int],
    seeds: Sequence[int],
    measure_time: bool = True,
):
    """Held-out AUC sampled at checkpoint rounds, per seed plus the mean.

    Returns (per_seed, mean_curve) where per_seed maps each seed to its
    list of CurvePoints and mean_curve averages across seeds pointwise.
    """
    schedule = [int(s) for s in schedule]
    if any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise ConfigError("checkpoint schedule must be strictly increasing")
    if not schedule:
        raise ConfigError("checkpoint schedule is empty")

    per_seed: dict[int, list[CurvePoint]] = {}
    for seed in seeds:
        points: list[CurvePoint] = []
        start = time.perf_counter()

        def hook(rounds_seen: int, weights: np.ndarray) -> None:
            elapsed = (time.perf_counter() - start) if measure_time else 0.0
            points.append(
                CurvePoint(
                    rounds_seen=rounds_seen,
                    test_auc=auc_score(weights, test_set),
                    elapsed=elapsed,
                )
            )

        train_single_pass(
            train_set, algorithm, params, seed=seed, checkpoints=schedule, hook=hook
        )
        per_seed[int(seed)] = points

    lengths = {len(pts) for pts in per_seed.values()}
    if len(lengths) != 1:
        raise NumericError("seeds produced curves of different lengths")
    mean_curve = []
    for k in range(lengths.pop()):
        rounds_seen = next(iter(per_seed.values()))[k].rounds_seen
        aucs = [pts[k].test_auc for pts in per_seed.values()]
        times = [pts[k].elapsed for pts in per_seed.values()]
        mean_curve.append(
            CurvePoint(
                rounds_seen=rounds_seen,
                test_auc=float(np.mean(aucs)),
                elapsed=float(np.mean(times)),
            )
        )
    return per_seed, mean_curve


def write_curve_csv(path, per_seed, mean_curve) -> None:
    """Emit curves as CSV: rounds,seed,auc,elapsed_ms; the mean curve uses
    'mean' in the seed column."""
    lines = ["rounds,seed,auc,elapsed_ms"]
    for seed in sorted(per_seed):
        for pt in per_seed[seed]:
            lines.append(
                f"{pt.rounds_seen},{seed},{pt.test_auc:.6f},{pt.elapsed * 1000.0:.6f}"
            )
    for pt in mean_curve:
        lines.append(
            f"{pt.rounds_seen},mean,{pt.test_auc:.6f},{pt.elapsed * 1000.0:.6f}"
        )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
