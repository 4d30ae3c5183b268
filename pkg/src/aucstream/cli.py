"""Command-line front end.

Subcommands: train (single online pass, writes a model snapshot), eval
(score a snapshot on a LIBSVM file), bench (full benchmark from a JSON
config), curve (convergence CSV), sweep (sparsity/AUC tradeoff CSV), and
synth (synthetic LIBSVM data).

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .data import Dataset, l2_normalize, load_libsvm, make_partitions, save_libsvm
from .evaluation import auc_score, convergence_curve, write_curve_csv
from .exceptions import ConfigError, DataError, NumericError, ParseError
from .harness import (
    ExperimentConfig,
    parse_grid,
    run_benchmark,
    tradeoff_sweep,
    write_aggregate_json,
    write_report_csv,
)
from .learners import ALGORITHMS, load_snapshot, save_snapshot, train_single_pass
from .objective import HyperParams
from .synthetic import make_synthetic

__all__ = ["main", "build_parser"]


class _Parser(argparse.ArgumentParser):
    """argparse variant whose usage failures raise instead of exiting
    with argparse's own code, so main() controls the exit-code contract."""

    def error(self, message):
        raise ConfigError(f"{message}\n{self.format_usage()}")


def _add_common(p: argparse.ArgumentParser, *names: str) -> None:
    if "algorithm" in names:
        p.add_argument("--algorithm", choices=ALGORITHMS, default="adaoam")
    if "hyper" in names:
        p.add_argument("--eta", type=float, default=1.0, help="learning rate")
        p.add_argument("--lambda", dest="lambda_", type=float, default=0.01,
                       help="L2 regularization weight")
        p.add_argument("--theta", type=float, default=0.0, help="L1 weight (sadaoam)")
        p.add_argument("--delta", type=float, default=1e-8, help="preconditioner smoothing")
    if "seed" in names:
        p.add_argument("--seed", type=int, default=0)
    if "normalize" in names:
        p.add_argument("--normalize", action=argparse.BooleanOptionalAction, default=True,
                       help="L2-normalize each instance (default on)")
    if "folds" in names:
        p.add_argument("--folds", type=int, default=5)
    if "repeats" in names:
        p.add_argument("--repeats", type=int, default=4)
    if "timing" in names:
        p.add_argument("--timing", action=argparse.BooleanOptionalAction, default=True,
                       help="measure wall-clock durations (use --no-timing for "
                            "byte-reproducible outputs)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="aucstream", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[], help="train one model, write a snapshot")
    p.add_argument("--data", required=True, help="LIBSVM training file")
    p.add_argument("--model", required=True, help="output snapshot path (JSON)")
    _add_common(p, "algorithm", "hyper", "seed", "normalize")

    p = sub.add_parser("eval", help="score a snapshot against a LIBSVM file")
    p.add_argument("--model", required=True, help="snapshot path (JSON)")
    p.add_argument("--data", required=True, help="LIBSVM test file")
    _add_common(p, "normalize")

    p = sub.add_parser("bench", help="run the benchmark protocol from a config")
    p.add_argument("--config", required=True, help="JSON config file")
    p.add_argument("--output", help="report CSV path (overrides the config)")
    p.add_argument("--jobs", type=int, help="max concurrent outer runs")

    p = sub.add_parser("curve", help="convergence curve CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--output", required=True, help="curve CSV path")
    p.add_argument("--checkpoints", required=True,
                   help="comma-separated round checkpoints, e.g. 50,100,200")
    _add_common(p, "algorithm", "hyper", "seed", "normalize", "folds", "repeats", "timing")

    p = sub.add_parser("sweep", help="sparsity/AUC tradeoff CSV (sadaoam)")
    p.add_argument("--data", required=True)
    p.add_argument("--output", required=True, help="sweep CSV path")
    p.add_argument("--theta-grid", required=True,
                   help="theta values: range string like 10^[-8:-1] or comma list")
    p.add_argument("--eta", type=float, help="fixed eta (else chosen by CV at theta=0)")
    p.add_argument("--lambda", dest="lambda_", type=float,
                   help="fixed lambda (else chosen by CV at theta=0)")
    p.add_argument("--delta", type=float, default=1e-8)
    _add_common(p, "seed", "normalize", "folds", "repeats")

    p = sub.add_parser("synth", help="write a synthetic LIBSVM dataset")
    p.add_argument("--output", required=True)
    p.add_argument("--n", type=int, required=True, help="instance count")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--positive-fraction", type=float, default=0.25)
    p.add_argument("--density", type=float, default=0.1)
    p.add_argument("--informative", type=int, default=0,
                   help="number of rare informative coordinates")
    p.add_argument("--informative-rate", type=float, default=0.02)
    p.add_argument("--signal", type=float, default=1.0)
    p.add_argument("--background-shift", type=float, default=0.0)
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--profile", choices=("uniform", "zipf"), default="uniform",
                   help="background feature frequency profile")
    p.add_argument("--scale-spread", type=float, default=0.0,
                   help="log10 half-range of fixed per-coordinate scale factors")
    _add_common(p, "seed")

    return parser


def _load_data(path: str, normalize: bool) -> Dataset:
    ds = load_libsvm(path)
    name = Path(path).stem
    instances = [l2_normalize(inst) for inst in ds] if normalize else ds.instances
    return Dataset(instances, ds.dim, name=name)


def _parse_thetas(spec: str) -> list[float]:
    if "^" in spec:
        return parse_grid(spec)
    try:
        return [float(tok) for tok in spec.split(",") if tok.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse theta grid {spec!r}") from None


def _cmd_train(args) -> int:
    dataset = _load_data(args.data, args.normalize)
    params = HyperParams(eta=args.eta, lambda_=args.lambda_, theta=args.theta,
                         delta=args.delta)
    model, _ = train_single_pass(dataset, args.algorithm, params, seed=args.seed)
    save_snapshot(model, args.model)
    print(f"trained {args.algorithm} on {len(dataset)} instances "
          f"(dim {dataset.dim}); snapshot -> {args.model}")
    return 0


def _cmd_eval(args) -> int:
    snapshot = load_snapshot(args.model)
    raw = load_libsvm(args.data)
    if raw.dim > snapshot.dim:
        raise DataError(
            f"test data dimension {raw.dim} exceeds model dimension {snapshot.dim}"
        )
    if raw.dim < snapshot.dim:
        raw = load_libsvm(args.data, dimension=snapshot.dim)
    instances = [l2_normalize(inst) for inst in raw] if args.normalize else raw.instances
    dataset = Dataset(instances, raw.dim, name=Path(args.data).stem)
    print(f"{auc_score(snapshot, dataset):.6f}")
    return 0


def _cmd_bench(args) -> int:
    config = ExperimentConfig.from_json(args.config)
    if args.output is not None:
        config = replace(config, output=args.output)
    if args.jobs is not None:
        config = replace(config, jobs=args.jobs)
    if config.output is None:
        raise ConfigError("no output path: set 'output' in the config or pass --output")
    report = run_benchmark(config)
    write_report_csv(report, config.output)
    aggregate_path = str(Path(config.output).with_suffix("")) + ".aggregate.json"
    write_aggregate_json(report, aggregate_path)
    print(f"wrote {len(report.records)} run records -> {config.output}")
    print(f"wrote aggregates -> {aggregate_path}")
    for err in report.errors:
        print(f"cell error: {err}", file=sys.stderr)
    return 0


def _cmd_curve(args) -> int:
    dataset = _load_data(args.data, args.normalize)
    try:
        schedule = [int(tok) for tok in args.checkpoints.split(",") if tok.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse checkpoints {args.checkpoints!r}") from None
    plan = make_partitions(dataset, args.folds, 1, args.seed)
    train_ds = dataset.subset(plan.train_indices(0, 0))
    test_ds = dataset.subset(plan.test_indices(0, 0))
    params = HyperParams(eta=args.eta, lambda_=args.lambda_, theta=args.theta,
                         delta=args.delta)
    seeds = [args.seed + i for i in range(args.repeats)]
    per_seed, mean_curve = convergence_curve(
        train_ds, test_ds, args.algorithm, params, schedule, seeds,
        measure_time=args.timing,
    )
    write_curve_csv(args.output, per_seed, mean_curve)
    print(f"wrote curve ({len(seeds)} seeds x {len(mean_curve)} checkpoints) -> {args.output}")
    return 0


def _cmd_sweep(args) -> int:
    dataset = _load_data(args.data, args.normalize)
    thetas = _parse_thetas(args.theta_grid)
    config = ExperimentConfig(
        datasets=[args.data],
        algorithms=["sadaoam"],
        eta_grid=parse_grid("2^[-8:4]"),
        lambda_grid=[1e-6],
        theta_grid=[0.0],
        delta=args.delta,
        folds=args.folds,
        repeats=args.repeats,
        seed=args.seed,
        normalize=args.normalize,
    )
    rows = tradeoff_sweep(dataset, thetas, config, eta=args.eta, lambda_=args.lambda_)
    lines = ["theta,nonzero_prop,mean_auc"]
    for theta, prop, auc in rows:
        lines.append(f"{theta:.10g},{prop:.6f},{auc:.6f}")
    with open(args.output, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote {len(rows)} sweep rows -> {args.output}")
    return 0


def _cmd_synth(args) -> int:
    dataset = make_synthetic(
        n=args.n,
        dim=args.dim,
        seed=args.seed,
        positive_fraction=args.positive_fraction,
        density=args.density,
        n_informative=args.informative,
        informative_rate=args.informative_rate,
        signal=args.signal,
        background_shift=args.background_shift,
        noise_scale=args.noise,
        frequency_profile=args.profile,
        scale_spread=args.scale_spread,
    )
    save_libsvm(dataset, args.output)
    print(f"wrote {len(dataset)} instances (dim {dataset.dim}, "
          f"{dataset.n_positive} positive / {dataset.n_negative} negative) "
          f"-> {args.output}")
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "eval": _cmd_eval,
    "bench": _cmd_bench,
    "curve": _cmd_curve,
    "sweep": _cmd_sweep,
    "synth": _cmd_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except SystemExit as exc:  # argparse --help / --version
        return int(exc.code or 0)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ParseError, DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
