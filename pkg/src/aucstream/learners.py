"""Online update rules and the single-pass trainer.

Four families share the skip rule (no opposite-class history seen yet
means the round's loss is 0: statistics absorb the instance but weights
and accumulators stay untouched):

- adaoam: adaptive diagonal preconditioning with a Mahalanobis-ball
  projection after every step.
- sadaoam: the sparse variant; outer-product-sum covariance, composite
  soft-threshold updates, and lazy batch shrinkage for coordinates whose
  gradient stays zero.  No ball projection (an optional post-step clip
  reconciles bound checks that assume one).
- ogd_pairwise: the non-adaptive baseline; same pairwise gradient, plain
  Euclidean projection.
- uni_log / uni_exp: class-weighted univariate-loss SGD baselines.  Their
  exact form (opposite/own count weighting, exp-gradient clipping) is
  this toolkit's construction.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

from .adagrad import AdaGradState, project_euclidean_ball, project_mahalanobis_ball
from .data import Dataset, Instance
from .exceptions import ConfigError, DataError
from .objective import HyperParams, per_round_gradient
from .stats import DenseClassStats, SparseClassStats, _ClassStatsBase

__all__ = [
    "ALGORITHMS",
    "ModelState",
    "PassRecords",
    "init_model",
    "step",
    "adaoam_step",
    "sadaoam_step",
    "ogd_pairwise_step",
    "univariate_step",
    "sadaoam_prox_coordinate",
    "lazy_apply",
    "materialized_weights",
    "finalize_model",
    "train_single_pass",
    "save_snapshot",
    "load_snapshot",
    "Snapshot",
]

ALGORITHMS = ("adaoam", "sadaoam", "ogd_pairwise", "uni_log", "uni_exp")

_PROJECTED = ("adaoam", "ogd_pairwise", "uni_log", "uni_exp")


@dataclass
class ModelState:
    """Mutable state of one online learner over one stream."""

    algorithm: str
    dim: int
    params: HyperParams
    weights: np.ndarray
    round: int
    pos_stats: _ClassStatsBase
    neg_stats: _ClassStatsBase
    adagrad: AdaGradState | None = None
    # sadaoam lazy bookkeeping: number of gradient rounds executed, and
    # per coordinate the gradient-round index at which it was last updated
    prox_steps: int = 0
    last_touch: np.ndarray | None = None
    clip_to_ball: bool = False

    def radius(self) -> float:
        return 1.0 / math.sqrt(self.params.lambda_)


def init_model(
    algorithm: str,
    dim: int,
    params: HyperParams,
    clip_to_ball: bool = False,
) -> ModelState:
    """Fresh zero-weight model for the given algorithm tag."""
    if algorithm not in ALGORITHMS:
        raise ConfigError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")
    if algorithm in _PROJECTED and params.lambda_ <= 0:
        raise ConfigError(f"{algorithm} projects onto radius 1/sqrt(lambda); lambda_ must be > 0")
    if clip_to_ball and params.lambda_ <= 0:
        raise ConfigError("clip_to_ball requires lambda_ > 0")

    model = ModelState(
        algorithm=algorithm,
        dim=dim,
        params=params,
        weights=np.zeros(dim),
        round=0,
        pos_stats=None,  # type: ignore[arg-type]
        neg_stats=None,  # type: ignore[arg-type]
        clip_to_ball=clip_to_ball,
    )
    if algorithm in ("adaoam", "ogd_pairwise"):
        model.pos_stats = DenseClassStats(dim)
        model.neg_stats = DenseClassStats(dim)
    elif algorithm == "sadaoam":
        model.pos_stats = SparseClassStats(dim)
        model.neg_stats = SparseClassStats(dim)
        model.last_touch = np.zeros(dim, dtype=np.int64)
    else:
        model.pos_stats = _ClassStatsBase(dim)
        model.neg_stats = _ClassStatsBase(dim)
    if algorithm in ("adaoam", "sadaoam"):
        model.adagrad = AdaGradState(dim, delta=params.delta)
    return model


def _own_opposite(model: ModelState, label: int):
    if label == 1:
        return model.pos_stats, model.neg_stats
    return model.neg_stats, model.pos_stats


def adaoam_step(model: ModelState, instance: Instance) -> None:
    """One adaptive round: absorb the instance into its class statistics,
    then (unless skipping) take a preconditioned gradient step followed by
    the Mahalanobis-ball projection."""
    p = model.params
    own, opposite = _own_opposite(model, instance.label)
    own.update(instance.features)
    model.round += 1
    if opposite.count == 0:
        return
    g = per_round_gradient(model.weights, instance.features, instance.label, opposite, p.lambda_)
    model.adagrad.accumulate(g)
    u = model.weights - p.eta * model.adagrad.direction(g)
    model.weights = project_mahalanobis_ball(u, model.adagrad.h_diag(), model.radius())


def ogd_pairwise_step(model: ModelState, instance: Instance) -> None:
    """Non-adaptive round: same gradient, uniform step, Euclidean projection."""
    p = model.params
    own, opposite = _own_opposite(model, instance.label)
    own.update(instance.features)
    model.round += 1
    if opposite.count == 0:
        return
    g = per_round_gradient(model.weights, instance.features, instance.label, opposite, p.lambda_)
    model.weights = project_euclidean_ball(model.weights - p.eta * g, model.radius())


def sadaoam_prox_coordinate(w_i: float, g_i: float, h_ii: float, eta: float, theta: float) -> float:
    """Coordinate-wise composite update: soft threshold of the
    preconditioned step, sign(z) [|z| - eta theta / h]_+ with
    z = w_i - (eta / h_ii) g_i."""
    z = w_i - (eta / h_ii) * g_i
    return math.copysign(1.0, z) * max(abs(z) - eta * theta / h_ii, 0.0)


def lazy_apply(model: ModelState, coordinates: np.ndarray, current_step: int) -> None:
    """Apply the closed-form batch shrinkage owed to coordinates whose
    gradient was zero since they were last updated.

    Valid only because zero gradients leave the accumulator (hence the
    preconditioner diagonal) unchanged across the gap.  ``current_step``
    counts gradient rounds, not raw instances; skip-rule rounds apply no
    shrinkage anywhere and therefore must not widen the gap.
    """
    coords = np.asarray(coordinates, dtype=np.int64)
    if coords.size == 0:
        return
    pending = current_step - model.last_touch[coords]
    live = pending > 0
    if np.any(live):
        idx = coords[live]
        h = model.adagrad.h_diag()[idx]
        amount = (model.params.eta * model.params.theta / h) * pending[live]
        w = model.weights[idx]
        model.weights[idx] = np.sign(w) * np.maximum(np.abs(w) - amount, 0.0)
    model.last_touch[coords] = current_step


def sadaoam_step(model: ModelState, instance: Instance) -> None:
    """One sparse adaptive round with lazy L1 shrinkage.

    Coordinates with a nonzero gradient are first brought current
    (pending shrinkage from their zero-gradient gap), then soft-threshold
    updated with the refreshed preconditioner; all other coordinates are
    deferred.  No ball projection unless ``clip_to_ball`` is set.
    """
    p = model.params
    own, opposite = _own_opposite(model, instance.label)
    own.update(instance.features)
    model.round += 1
    if opposite.count == 0:
        return

    w = model.weights
    g = per_round_gradient(w, instance.features, instance.label, opposite, p.lambda_)
    active = np.flatnonzero(g != 0.0)

    lazy_apply(model, active, model.prox_steps)

    model.adagrad.accumulate(g)
    h = model.adagrad.h_diag()[active]
    z = w[active] - (p.eta / h) * g[active]
    w[active] = np.sign(z) * np.maximum(np.abs(z) - p.eta * p.theta / h, 0.0)

    model.prox_steps += 1
    model.last_touch[active] = model.prox_steps

    if model.clip_to_ball:
        lazy_apply(model, np.arange(model.dim), model.prox_steps)
        model.weights = project_euclidean_ball(model.weights, model.radius())


def univariate_step(model: ModelState, instance: Instance) -> None:
    """Class-weighted univariate-loss SGD round.

    Weight rho = opposite-class count / own-class count (counts include
    the current instance on the own side).  uni_log uses the logistic
    loss rho log(1 + exp(-y w.x)); uni_exp uses rho exp(-y w.x) with the
    gradient clipped to norm 10 to tame the exponential.
    """
    p = model.params
    own, opposite = _own_opposite(model, instance.label)
    own.update_mean(instance.features)
    model.round += 1
    if opposite.count == 0:
        return
    rho = opposite.count / max(own.count, 1)
    x = instance.features
    margin = instance.label * x.dot(model.weights)
    if model.algorithm == "uni_log":
        coeff = -instance.label * rho * float(expit(-margin))
    else:
        coeff = -instance.label * rho * math.exp(min(-margin, 50.0))
    g = np.zeros(model.dim)
    g[x.indices] = coeff * x.values
    if model.algorithm == "uni_exp":
        n = float(np.linalg.norm(g))
        if n > 10.0:
            g *= 10.0 / n
    model.weights = project_euclidean_ball(model.weights - p.eta * g, model.radius())


_STEPS: dict[str, Callable[[ModelState, Instance], None]] = {
    "adaoam": adaoam_step,
    "sadaoam": sadaoam_step,
    "ogd_pairwise": ogd_pairwise_step,
    "uni_log": univariate_step,
    "uni_exp": univariate_step,
}


def step(model: ModelState, instance: Instance) -> None:
    """Dispatch one online round by algorithm tag."""
    if instance.features.dim != model.dim:
        raise DataError(
            f"instance dimension {instance.features.dim} != model dimension {model.dim}"
        )
    _STEPS[model.algorithm](model, instance)


def materialized_weights(model: ModelState) -> np.ndarray:
    """Current true weight vector, with any deferred shrinkage applied to
    the returned copy (model state untouched)."""
    w = model.weights.copy()
    if model.algorithm != "sadaoam" or model.params.theta == 0.0:
        return w
    pending = model.prox_steps - model.last_touch
    stale = np.flatnonzero((pending > 0) & (w != 0.0))
    if stale.size:
        h = model.adagrad.h_diag()[stale]
        amount = (model.params.eta * model.params.theta / h) * pending[stale]
        w[stale] = np.sign(w[stale]) * np.maximum(np.abs(w[stale]) - amount, 0.0)
    return w


def finalize_model(model: ModelState) -> ModelState:
    """Flush deferred shrinkage into the stored weights (sadaoam)."""
    if model.algorithm == "sadaoam":
        lazy_apply(model, np.arange(model.dim), model.prox_steps)
    return model


@dataclass
class PassRecords:
    """Bookkeeping from one training pass."""

    visit_order: np.ndarray
    trajectory: list = field(default_factory=list)


def train_single_pass(
    dataset: Dataset,
    algorithm: str,
    params: HyperParams,
    seed: int,
    checkpoints: Sequence[int] | None = None,
    hook: Callable[[int, np.ndarray], None] | None = None,
    record_trajectory: bool = False,
    clip_to_ball: bool = False,
) -> tuple[ModelState, PassRecords]:
    """Consume every instance exactly once in a seeded-shuffled order.

    ``hook(round, weights)`` fires at each checkpoint round (checkpoints
    beyond the stream length are clipped to the final round, with a
    warning).  ``record_trajectory`` keeps the pre-step weights of every
    round, which is what regret accounting needs.  Deterministic for
    fixed (dataset, algorithm, params, seed).
    """
    n = len(dataset)
    if n == 0:
        raise DataError("cannot train on an empty dataset")
    if dataset.n_positive == 0 or dataset.n_negative == 0:
        warnings.warn(
            f"dataset {dataset.name!r} has a single class; the model will never step",
            stacklevel=2,
        )

    rounds = set()
    if checkpoints is not None:
        for c in checkpoints:
            if c > n:
                warnings.warn(
                    f"checkpoint {c} beyond stream length {n}; clipped to final round",
                    stacklevel=2,
                )
                c = n
            rounds.add(int(c))

    model = init_model(algorithm, dataset.dim, params, clip_to_ball=clip_to_ball)
    order = np.random.default_rng(seed).permutation(n)
    records = PassRecords(visit_order=order)
    for i in order:
        if record_trajectory:
            records.trajectory.append(materialized_weights(model))
        step(model, dataset[int(i)])
        if hook is not None and model.round in rounds:
            hook(model.round, materialized_weights(model))
    finalize_model(model)
    return model, records


@dataclass(frozen=True)
class Snapshot:
    """Deserialized model snapshot."""

    algorithm: str
    params: HyperParams
    round: int
    weights: np.ndarray
    dim: int


def snapshot_dict(model: ModelState) -> dict:
    w = materialized_weights(model)
    nz = np.flatnonzero(w)
    return {
        "algorithm": model.algorithm,
        "params": {
            "eta": model.params.eta,
            "lambda": model.params.lambda_,
            "theta": model.params.theta,
            "delta": model.params.delta,
        },
        "round": model.round,
        "weights": {str(int(i)): float(w[i]) for i in nz},
        "dimension": model.dim,
    }


def save_snapshot(model: ModelState, path) -> None:
    """Write the model snapshot JSON (weights as sparse index:value pairs)."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(snapshot_dict(model), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_snapshot(path) -> Snapshot:
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    try:
        dim = int(raw["dimension"])
        weights = np.zeros(dim)
        for k, v in raw["weights"].items():
            weights[int(k)] = float(v)
        params = HyperParams(
            eta=float(raw["params"]["eta"]),
            lambda_=float(raw["params"]["lambda"]),
            theta=float(raw["params"].get("theta", 0.0)),
            delta=float(raw["params"].get("delta", 1e-8)),
        )
        return Snapshot(
            algorithm=str(raw["algorithm"]),
            params=params,
            round=int(raw["round"]),
            weights=weights,
            dim=dim,
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise DataError(f"malformed model snapshot {path}: {exc}") from exc
