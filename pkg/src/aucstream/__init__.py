"""Streaming AUC maximization toolkit.

Online learners for the pairwise square surrogate of AUC -- an
adaptive-subgradient learner, a sparse L1 variant with lazy updates, and
non-adaptive baselines -- together with LIBSVM ingestion, exact AUC
evaluation, a regret-bound checker, and a cross-validated benchmark
harness.  Learners are also exposed as scikit-learn compatible
estimators.
"""

__version__ = "0.1.0"

from .data import (
    Dataset,
    Instance,
    PartitionPlan,
    SparseVector,
    binarize_labels,
    dump_libsvm,
    l2_normalize,
    load_libsvm,
    make_partitions,
    parse_libsvm,
    random_positive_set,
    save_libsvm,
)
from .estimators import (
    AdaOAMClassifier,
    PairwiseOGDClassifier,
    SparseAdaOAMClassifier,
    UnivariateLossClassifier,
)
from .evaluation import (
    CurvePoint,
    auc_from_scores,
    auc_score,
    convergence_curve,
    model_sparsity,
    regret_bound_check,
)
from .exceptions import (
    AucStreamError,
    ConfigError,
    DataError,
    NumericError,
    ParseError,
)
from .harness import (
    ExperimentConfig,
    EvalReport,
    grid_search_cv,
    paired_t_test,
    run_benchmark,
    tradeoff_sweep,
)
from .learners import (
    ALGORITHMS,
    ModelState,
    load_snapshot,
    save_snapshot,
    train_single_pass,
)
from .objective import (
    HyperParams,
    full_objective,
    gradient_oracle,
    minimize_full_objective,
    per_round_gradient,
    per_round_loss,
)
from .stats import DenseClassStats, SparseClassStats, batch_stats_oracle
from .synthetic import make_synthetic

__all__ = [
    "__version__",
    "ALGORITHMS",
    "AdaOAMClassifier",
    "AucStreamError",
    "ConfigError",
    "CurvePoint",
    "DataError",
    "Dataset",
    "DenseClassStats",
    "EvalReport",
    "ExperimentConfig",
    "HyperParams",
    "Instance",
    "ModelState",
    "NumericError",
    "PairwiseOGDClassifier",
    "ParseError",
    "PartitionPlan",
    "SparseAdaOAMClassifier",
    "SparseClassStats",
    "SparseVector",
    "UnivariateLossClassifier",
    "auc_from_scores",
    "auc_score",
    "batch_stats_oracle",
    "binarize_labels",
    "convergence_curve",
    "dump_libsvm",
    "full_objective",
    "gradient_oracle",
    "grid_search_cv",
    "l2_normalize",
    "load_libsvm",
    "load_snapshot",
    "make_partitions",
    "make_synthetic",
    "minimize_full_objective",
    "model_sparsity",
    "paired_t_test",
    "parse_libsvm",
    "per_round_gradient",
    "per_round_loss",
    "random_positive_set",
    "regret_bound_check",
    "run_benchmark",
    "save_libsvm",
    "save_snapshot",
    "train_single_pass",
    "tradeoff_sweep",
]
