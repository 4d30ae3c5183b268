"""Experimental protocol: repeated-partition benchmarking with nested
cross-validated grid search, aggregation, significance testing, and
sparsity/AUC tradeoff sweeps.

Outer loop: ``repeats`` independent ``folds``-fold partitions; every
(repeat, fold) pair trains once on the training portion (with
hyperparameters chosen by an inner 5-fold CV on that portion alone) and
scores the held-out fold, so a 4 x 5 configuration yields 20 runs per
(dataset, algorithm) cell.  Cells fail independently: a broken cell
becomes an error entry, not an aborted benchmark.
"""

from __future__ import annotations

import concurrent.futures
import json
import math
import re
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats as sp_stats
from scipy.special import expit

from .data import Dataset, derive_seed, l2_normalize, load_libsvm, make_partitions
from .evaluation import auc_from_scores, auc_score, model_sparsity
from .exceptions import AucStreamError, ConfigError, DataError, NumericError
from .learners import ALGORITHMS, materialized_weights, train_single_pass
from .objective import HyperParams
from .stats import DenseClassStats, _ClassStatsBase

__all__ = [
    "ExperimentConfig",
    "RunRecord",
    "CellAggregate",
    "EvalReport",
    "parse_grid",
    "grid_points",
    "grid_search_cv",
    "run_benchmark",
    "paired_t_test",
    "TTestResult",
    "tradeoff_sweep",
    "write_report_csv",
    "write_aggregate_json",
]

INNER_FOLDS = 5

_GRID_RE = re.compile(
    r"^\s*(\d+(?:\.\d+)?)\s*\^\s*\[\s*(-?\d+)\s*:\s*(?:(-?\d+)\s*:\s*)?(-?\d+)\s*\]\s*$"
)


def parse_grid(value) -> list[float]:
    """Expand a grid spec: either a list of reals or a range string like
    "2^[-10:10]" / "10^[-8:-1]" (optionally "base^[lo:step:hi]")."""
    if isinstance(value, str):
        m = _GRID_RE.match(value)
        if not m:
            raise ConfigError(f"cannot parse grid spec {value!r}")
        base = float(m.group(1))
        lo = int(m.group(2))
        step = int(m.group(3)) if m.group(3) else 1
        hi = int(m.group(4))
        if step <= 0:
            raise ConfigError(f"grid step must be positive in {value!r}")
        exponents = range(lo, hi + 1, step)
        return [float(base) ** e for e in exponents]
    out = [float(v) for v in value]
    if any(not np.isfinite(v) for v in out):
        raise ConfigError("grid values must be finite")
    return out


@dataclass
class ExperimentConfig:
    """Benchmark configuration; JSON configs are flat dicts of these
    fields (grids may be arrays or range strings)."""

    datasets: list[str]
    algorithms: list[str]
    eta_grid: list[float]
    lambda_grid: list[float]
    theta_grid: list[float] = field(default_factory=list)
    delta: float = 1e-8
    folds: int = 5
    repeats: int = 4
    seed: int = 0
    normalize: bool = True
    output: str | None = None
    reference: str | None = None
    jobs: int = 1
    measure_time: bool = True

    def __post_init__(self):
        if not self.datasets:
            raise ConfigError("config needs at least one dataset")
        if not self.algorithms:
            raise ConfigError("config needs at least one algorithm")
        for algo in self.algorithms:
            if algo not in ALGORITHMS:
                raise ConfigError(f"unknown algorithm {algo!r}")
        if self.folds < 2:
            raise ConfigError("folds must be >= 2")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        if not self.eta_grid or not self.lambda_grid:
            raise ConfigError("eta_grid and lambda_grid must be nonempty")
        if "sadaoam" in self.algorithms and not self.theta_grid:
            raise ConfigError("sadaoam requires a nonempty theta_grid")
        if self.reference is None:
            self.reference = self.algorithms[0]
        elif self.reference not in self.algorithms:
            raise ConfigError(f"reference {self.reference!r} not in algorithms")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        data = dict(raw)
        for key in ("eta_grid", "lambda_grid", "theta_grid"):
            if key in data:
                data[key] = parse_grid(data[key])
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def grid_points(algorithm: str, config: ExperimentConfig) -> list[HyperParams]:
    """Deduplicated hyperparameter grid for one algorithm, ordered by the
    tie-break preference: larger lambda, then larger theta, then smaller
    eta."""
    etas = sorted(set(config.eta_grid))
    lambdas = sorted(set(config.lambda_grid))
    thetas = sorted(set(config.theta_grid)) if algorithm == "sadaoam" else [0.0]
    points = [
        HyperParams(eta=e, lambda_=l, theta=t, delta=config.delta)
        for l in lambdas
        for t in thetas
        for e in etas
    ]
    points.sort(key=lambda p: (-p.lambda_, -p.theta, p.eta))
    return points


def _stratified_assignment(labels: np.ndarray, folds: int, seed: int) -> np.ndarray:
    """Per-class round-robin fold assignment after a seeded shuffle."""
    rng = np.random.default_rng(seed)
    assignment = np.empty(labels.size, dtype=np.int64)
    offset = 0
    for cls in (1, -1):
        members = np.flatnonzero(labels == cls)
        rng.shuffle(members)
        assignment[members] = (np.arange(members.size) + offset) % folds
        offset += members.size
    return assignment


def _inner_assignment(train: Dataset, folds: int, seed: int) -> np.ndarray:
    """Fold assignment for inner CV; redraw up to 10 times until every
    fold holds both classes, then fall back to stratification."""
    labels = train.labels
    for attempt in range(10):
        plan = make_partitions(train, folds, 1, derive_seed(seed, "inner", attempt))
        ok = all(
            len(np.unique(labels[plan.assignments[0] == f])) == 2
            for f in range(folds)
        )
        if ok:
            return plan.assignments[0]
    return _stratified_assignment(labels, folds, derive_seed(seed, "stratified"))


def _project_rows_euclidean(u: np.ndarray, radius: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(u, axis=1)
    scale = np.where(norms > radius, radius / np.maximum(norms, 1e-300), 1.0)
    return u * scale[:, None]


def _project_rows_mahalanobis(
    u: np.ndarray, h: np.ndarray, radius: np.ndarray, tol: float = 1e-10
) -> np.ndarray:
    """Row-wise diagonal-metric ball projection, all rows bisected in
    lockstep; same bracket and stopping band as the scalar routine."""
    out = u.copy()
    norms = np.linalg.norm(u, axis=1)
    active = np.flatnonzero(norms > radius)
    if active.size == 0:
        return out
    ua = u[active]
    ha = h[active]
    ra = radius[active]
    lo = np.zeros(active.size)
    hi = ha.max(axis=1) * norms[active] / ra
    unfinished = np.ones(active.size, dtype=bool)
    for _ in range(200):
        nu = 0.5 * (lo + hi)
        wa = ha * ua / (ha + nu[:, None])
        na = np.linalg.norm(wa, axis=1)
        newly_done = unfinished & (na >= ra - tol) & (na <= ra)
        if np.any(newly_done):
            rows = np.flatnonzero(newly_done)
            out[active[rows]] = wa[rows]
            unfinished &= ~newly_done
        if not unfinished.any():
            return out
        high = na > ra
        lo = np.where(unfinished & high, nu, lo)
        hi = np.where(unfinished & ~high, nu, hi)
    raise NumericError("row-wise Mahalanobis projection did not converge")


def _batched_fold_aucs(
    fit_ds: Dataset,
    val_ds: Dataset,
    algorithm: str,
    points: list[HyperParams],
    seed: int,
) -> np.ndarray:
    """Validation AUC of every grid point from one shared pass.

    The class statistics do not depend on the hyperparameters, so a
    single seeded pass over the fit split can carry one weight row per
    grid point, turning the per-round update into matrix arithmetic.
    Semantically identical to training each point separately with the
    same seed (up to float summation order).
    """
    n, d = len(fit_ds), fit_ds.dim
    n_points = len(points)
    etas = np.array([p.eta for p in points])
    lams = np.array([p.lambda_ for p in points])
    delta = points[0].delta
    radius = 1.0 / np.sqrt(lams)
    weights = np.zeros((n_points, d))
    pairwise = algorithm in ("adaoam", "ogd_pairwise")
    if pairwise:
        stats = {1: DenseClassStats(d), -1: DenseClassStats(d)}
    else:
        stats = {1: _ClassStatsBase(d), -1: _ClassStatsBase(d)}
    if algorithm == "adaoam":
        sumsq = np.zeros((n_points, d))

    order = np.random.default_rng(seed).permutation(n)
    for i in order:
        inst = fit_ds[int(i)]
        x, y = inst.features, inst.label
        own, opposite = stats[y], stats[-y]
        if pairwise:
            own.update(x)
        else:
            own.update_mean(x)
        if opposite.count == 0:
            continue
        xd = x.to_dense()
        if pairwise:
            v = xd - opposite.mean
            grads = (
                lams[:, None] * weights
                + weights @ opposite.cov
                + (weights @ v)[:, None] * v[None, :]
            )
            grads += (opposite.mean - xd) if y == 1 else (xd - opposite.mean)
        else:
            rho = opposite.count / max(own.count, 1)
            margins = y * (weights @ xd)
            if algorithm == "uni_log":
                coeff = -y * rho * expit(-margins)
            else:
                coeff = -y * rho * np.exp(np.minimum(-margins, 50.0))
            grads = coeff[:, None] * xd[None, :]
            if algorithm == "uni_exp":
                gn = np.linalg.norm(grads, axis=1)
                clip = np.where(gn > 10.0, 10.0 / np.maximum(gn, 1e-300), 1.0)
                grads *= clip[:, None]
        if algorithm == "adaoam":
            sumsq += grads * grads
            h = delta + np.sqrt(sumsq)
            weights = _project_rows_mahalanobis(
                weights - etas[:, None] * (grads / h), h, radius
            )
        else:
            weights = _project_rows_euclidean(weights - etas[:, None] * grads, radius)

    scores = val_ds.matrix @ weights.T
    labels = val_ds.labels
    return np.array([auc_from_scores(scores[:, k], labels) for k in range(n_points)])


def grid_search_cv(
    train: Dataset, algorithm: str, config: ExperimentConfig, seed: int
) -> HyperParams:
    """Choose hyperparameters by mean inner-validation AUC.

    One seeded single pass per (grid point, inner fold); the argmax wins,
    with ties resolved toward stronger regularization then smaller step.
    Algorithms whose statistics are hyperparameter-independent replay the
    whole grid in one batched pass per fold.
    """
    train.require_both_classes()
    if len(train) < INNER_FOLDS:
        raise DataError(f"training portion too small for {INNER_FOLDS}-fold inner CV")
    assignment = _inner_assignment(train, INNER_FOLDS, seed)
    splits = []
    for f in range(INNER_FOLDS):
        fit_idx = np.flatnonzero(assignment != f)
        val_idx = np.flatnonzero(assignment == f)
        splits.append((train.subset(fit_idx), train.subset(val_idx)))

    points = grid_points(algorithm, config)
    if algorithm != "sadaoam":
        fold_aucs = []
        for f, (fit_ds, val_ds) in enumerate(splits):
            val_ds.require_both_classes()
            fold_aucs.append(
                _batched_fold_aucs(fit_ds, val_ds, algorithm, points,
                                   seed=derive_seed(seed, "fit", f))
            )
        mean_aucs = np.mean(np.stack(fold_aucs), axis=0)
        # a diverged grid point can score NaN; it must lose, not poison argmax
        mean_aucs = np.where(np.isnan(mean_aucs), -np.inf, mean_aucs)
        best = int(np.argmax(mean_aucs))  # first max wins: preference order
        return points[best]

    best: HyperParams | None = None
    best_auc = -np.inf
    any_succeeded = False
    for hp in points:
        aucs = []
        try:
            for f, (fit_ds, val_ds) in enumerate(splits):
                model, _ = train_single_pass(
                    fit_ds, algorithm, hp, seed=derive_seed(seed, "fit", f)
                )
                aucs.append(auc_score(model, val_ds))
        except AucStreamError:
            continue
        any_succeeded = True
        mean_auc = float(np.mean(aucs))
        if mean_auc > best_auc:
            best_auc = mean_auc
            best = hp
    if not any_succeeded or best is None:
        raise DataError(f"every grid point failed for {algorithm} on {train.name!r}")
    return best


@dataclass(frozen=True)
class RunRecord:
    dataset: str
    algorithm: str
    eta: float
    lambda_: float
    theta: float
    repeat: int
    fold: int
    auc: float
    sparsity: float
    train_ms: float


@dataclass
class CellAggregate:
    mean_auc: float
    std_auc: float
    mean_sparsity: float
    chosen_params: dict
    n_runs: int
    significant_vs_ref: bool | None = None
    direction: int | None = None
    error: str | None = None


@dataclass
class EvalReport:
    records: list[RunRecord]
    aggregates: dict
    errors: list[str]


def _outer_run(
    dataset: Dataset,
    algorithm: str,
    config: ExperimentConfig,
    repeat: int,
    fold: int,
    train_idx: np.ndarray,
    test_idx: np.ndarray,
) -> RunRecord:
    train_ds = dataset.subset(train_idx)
    test_ds = dataset.subset(test_idx)
    test_ds.require_both_classes()
    inner_seed = derive_seed(config.seed, dataset.name, algorithm, repeat, fold)
    hp = grid_search_cv(train_ds, algorithm, config, seed=inner_seed)
    t0 = time.perf_counter()
    model, _ = train_single_pass(
        train_ds, algorithm, hp, seed=derive_seed(inner_seed, "final")
    )
    train_ms = (time.perf_counter() - t0) * 1000.0 if config.measure_time else 0.0
    w = materialized_weights(model)
    return RunRecord(
        dataset=dataset.name,
        algorithm=algorithm,
        eta=hp.eta,
        lambda_=hp.lambda_,
        theta=hp.theta,
        repeat=repeat,
        fold=fold,
        auc=auc_score(w, test_ds),
        sparsity=model_sparsity(w, dataset.dim),
        train_ms=train_ms,
    )


def _run_task(args):
    dataset, algorithm, config, repeat, fold, train_idx, test_idx = args
    key = (dataset.name, algorithm, repeat, fold)
    try:
        return key, _outer_run(dataset, algorithm, config, repeat, fold, train_idx, test_idx), None
    except AucStreamError as exc:
        return key, None, f"{type(exc).__name__}: {exc}"


def load_benchmark_dataset(path: str, normalize: bool) -> Dataset:
    ds = load_libsvm(path)
    name = Path(path).stem
    instances = [l2_normalize(inst) for inst in ds] if normalize else ds.instances
    return Dataset(instances, ds.dim, name=name)


def run_benchmark(config: ExperimentConfig) -> EvalReport:
    """Execute the full protocol and aggregate mean/std AUC, sparsity,
    and paired significance flags against the reference algorithm."""
    datasets = [load_benchmark_dataset(p, config.normalize) for p in config.datasets]
    tasks = []
    for ds in datasets:
        ds.require_both_classes()
        plan = make_partitions(ds, config.folds, config.repeats, config.seed)
        for algorithm in config.algorithms:
            for repeat in range(config.repeats):
                for fold in range(config.folds):
                    tasks.append(
                        (
                            ds,
                            algorithm,
                            config,
                            repeat,
                            fold,
                            plan.train_indices(repeat, fold),
                            plan.test_indices(repeat, fold),
                        )
                    )

    results = {}
    errors = []
    if config.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=config.jobs) as pool:
            for key, record, err in pool.map(_run_task, tasks, chunksize=1):
                results[key] = (record, err)
    else:
        for task in tasks:
            key, record, err = _run_task(task)
            results[key] = (record, err)

    records = []
    cell_errors: dict[tuple, list[str]] = {}
    for key in sorted(results):
        record, err = results[key]
        if record is not None:
            records.append(record)
        else:
            cell = key[:2]
            msg = f"{key}: {err}"
            errors.append(msg)
            cell_errors.setdefault(cell, []).append(msg)

    aggregates = _aggregate(records, cell_errors, config)
    return EvalReport(records=records, aggregates=aggregates, errors=errors)


def _majority_params(cell_records: list[RunRecord]) -> dict:
    counts: dict[tuple, int] = {}
    for r in cell_records:
        key = (r.eta, r.lambda_, r.theta)
        counts[key] = counts.get(key, 0) + 1
    # most frequent choice; ties resolved toward stronger regularization
    best = max(counts.items(), key=lambda kv: (kv[1], kv[0][1], kv[0][2], -kv[0][0]))
    eta, lambda_, theta = best[0]
    return {"eta": eta, "lambda": lambda_, "theta": theta}


def _aggregate(records, cell_errors, config) -> dict:
    by_cell: dict[tuple, list[RunRecord]] = {}
    for r in records:
        by_cell.setdefault((r.dataset, r.algorithm), []).append(r)

    aggregates: dict = {}
    for (ds_name, algorithm), cell in sorted(by_cell.items()):
        aucs = np.array([r.auc for r in cell])
        agg = CellAggregate(
            mean_auc=float(aucs.mean()),
            std_auc=float(aucs.std(ddof=1)) if aucs.size > 1 else 0.0,
            mean_sparsity=float(np.mean([r.sparsity for r in cell])),
            chosen_params=_majority_params(cell),
            n_runs=len(cell),
        )
        errs = cell_errors.get((ds_name, algorithm))
        if errs:
            agg.error = "; ".join(errs)
        aggregates.setdefault(ds_name, {})[algorithm] = agg

    # cells whose every run failed still get an (error-only) entry
    for (ds_name, algorithm), errs in sorted(cell_errors.items()):
        if algorithm not in aggregates.get(ds_name, {}):
            aggregates.setdefault(ds_name, {})[algorithm] = CellAggregate(
                mean_auc=float("nan"),
                std_auc=float("nan"),
                mean_sparsity=float("nan"),
                chosen_params={},
                n_runs=0,
                error="; ".join(errs),
            )

    # paired significance vs the reference algorithm, matched by (repeat, fold)
    for ds_name, cells in aggregates.items():
        ref = config.reference
        if (ds_name, ref) not in by_cell:
            continue
        ref_runs = {(r.repeat, r.fold): r.auc for r in by_cell[(ds_name, ref)]}
        for algorithm, agg in cells.items():
            if algorithm == ref or (ds_name, algorithm) not in by_cell:
                continue
            pairs = [
                (r.auc, ref_runs[(r.repeat, r.fold)])
                for r in by_cell[(ds_name, algorithm)]
                if (r.repeat, r.fold) in ref_runs
            ]
            if len(pairs) >= 2:
                a = np.array([p[0] for p in pairs])
                b = np.array([p[1] for p in pairs])
                result = paired_t_test(a, b, alpha=0.05)
                agg.significant_vs_ref = result.significant
                agg.direction = result.direction
    return aggregates


@dataclass(frozen=True)
class TTestResult:
    t_stat: float
    significant: bool
    direction: int


def paired_t_test(a, b, alpha: float = 0.05) -> TTestResult:
    """Two-sided paired t-test on matched samples.

    Zero-variance differences with a nonzero mean are significant by
    convention (the t statistic diverges); all-zero differences are not.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise ConfigError("paired t-test needs two equal-length samples of size >= 2")
    if not 0.0 < alpha < 1.0:
        raise ConfigError("alpha must be in (0, 1)")
    d = a - b
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    direction = int(np.sign(mean))
    if sd == 0.0:
        if mean == 0.0:
            return TTestResult(t_stat=0.0, significant=False, direction=0)
        return TTestResult(
            t_stat=math.copysign(math.inf, mean), significant=True, direction=direction
        )
    t_stat = mean / (sd / math.sqrt(d.size))
    critical = float(sp_stats.t.ppf(1.0 - alpha / 2.0, d.size - 1))
    return TTestResult(t_stat=t_stat, significant=abs(t_stat) > critical, direction=direction)


def tradeoff_sweep(
    dataset: Dataset,
    thetas: Sequence[float],
    config: ExperimentConfig,
    eta: float | None = None,
    lambda_: float | None = None,
):
    """Sparsity/AUC tradeoff for the sparse learner across theta values.

    eta and lambda are fixed across the sweep; when not supplied they
    come from an inner CV at theta = 0 on the first repeat's training
    portion.  Per theta, results are averaged over ``repeats`` seeded
    train/test splits: the proportion of nonzero weights in the final
    model and the held-out AUC.  Rows come back in theta-ascending order.
    """
    dataset.require_both_classes()
    thetas = sorted(float(t) for t in thetas)
    if not thetas:
        raise ConfigError("sweep needs at least one theta")
    plan = make_partitions(dataset, config.folds, config.repeats, config.seed)

    if eta is None or lambda_ is None:
        base = replace(config, theta_grid=[0.0], algorithms=["sadaoam"])
        train0 = dataset.subset(plan.train_indices(0, 0))
        hp0 = grid_search_cv(
            train0, "sadaoam", base, seed=derive_seed(config.seed, dataset.name, "sweep")
        )
        eta = hp0.eta if eta is None else eta
        lambda_ = hp0.lambda_ if lambda_ is None else lambda_

    rows = []
    for theta in thetas:
        hp = HyperParams(eta=eta, lambda_=lambda_, theta=theta, delta=config.delta)
        props = []
        aucs = []
        for repeat in range(config.repeats):
            fold = repeat % config.folds
            train_ds = dataset.subset(plan.train_indices(repeat, fold))
            test_ds = dataset.subset(plan.test_indices(repeat, fold))
            model, _ = train_single_pass(
                train_ds,
                "sadaoam",
                hp,
                seed=derive_seed(config.seed, dataset.name, "sweep", repeat, theta),
            )
            w = materialized_weights(model)
            props.append(np.count_nonzero(w) / dataset.dim)
            aucs.append(auc_score(w, test_ds))
        rows.append((theta, float(np.mean(props)), float(np.mean(aucs))))
    return rows


def write_report_csv(report: EvalReport, path) -> None:
    """Per-run CSV: dataset,algorithm,eta,lambda,theta,repeat,fold,auc,
    sparsity,train_ms with fixed 6-decimal floats, canonically sorted."""
    lines = ["dataset,algorithm,eta,lambda,theta,repeat,fold,auc,sparsity,train_ms"]
    for r in sorted(report.records, key=lambda r: (r.dataset, r.algorithm, r.repeat, r.fold)):
        lines.append(
            f"{r.dataset},{r.algorithm},{r.eta:.6f},{r.lambda_:.6f},{r.theta:.6f},"
            f"{r.repeat},{r.fold},{r.auc:.6f},{r.sparsity:.6f},{r.train_ms:.6f}"
        )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def write_aggregate_json(report: EvalReport, path) -> None:
    def _num(v):
        return None if (isinstance(v, float) and math.isnan(v)) else v

    payload = {}
    for ds_name, cells in sorted(report.aggregates.items()):
        payload[ds_name] = {}
        for algorithm, agg in sorted(cells.items()):
            entry = {
                "mean_auc": _num(agg.mean_auc),
                "std_auc": _num(agg.std_auc),
                "mean_sparsity": _num(agg.mean_sparsity),
                "chosen_params": agg.chosen_params,
                "n_runs": agg.n_runs,
                "significant_vs_ref": agg.significant_vs_ref,
                "direction": agg.direction,
            }
            if agg.error:
                entry["error"] = agg.error
            payload[ds_name][algorithm] = entry
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
