"""Sparse instances, LIBSVM ingestion, normalization and partitioning.

Datasets are immutable after construction and safe to share read-only
across concurrently running experiments.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse as sp

from .exceptions import ConfigError, DataError, ParseError

__all__ = [
    "SparseVector",
    "Instance",
    "Dataset",
    "PartitionPlan",
    "parse_libsvm",
    "load_libsvm",
    "dump_libsvm",
    "save_libsvm",
    "l2_normalize",
    "binarize_labels",
    "random_positive_set",
    "make_partitions",
    "derive_seed",
]


@dataclass(frozen=True, eq=False)
class SparseVector:
    """Sparse feature vector: strictly increasing 0-based indices paired
    with nonzero finite values, plus the ambient dimension."""

    indices: np.ndarray
    values: np.ndarray
    dim: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        val = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)
        if idx.ndim != 1 or val.ndim != 1 or idx.shape != val.shape:
            raise DataError("indices and values must be 1-d and equal length")
        if self.dim <= 0:
            raise DataError("dimension must be positive")
        if idx.size:
            if idx[0] < 0 or idx[-1] >= self.dim:
                raise DataError("index out of range for dimension %d" % self.dim)
            if np.any(np.diff(idx) <= 0):
                raise DataError("indices must be strictly increasing")
            if not np.all(np.isfinite(val)):
                raise DataError("values must be finite")
            if np.any(val == 0.0):
                raise DataError("explicit zero values are not allowed")

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    def dot(self, w: np.ndarray) -> float:
        """Inner product with a dense vector."""
        return float(w[self.indices] @ self.values)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.indices] = self.values
        return out

    def scaled(self, factor: float) -> "SparseVector":
        return SparseVector(self.indices, self.values * factor, self.dim)


@dataclass(frozen=True, eq=False)
class Instance:
    """A feature vector paired with a label in {-1, +1}."""

    features: SparseVector
    label: int

    def __post_init__(self):
        if self.label not in (-1, 1):
            raise DataError(f"label must be -1 or +1, got {self.label!r}")


class Dataset:
    """An ordered collection of instances over a common dimension."""

    def __init__(self, instances: Sequence[Instance], dim: int, name: str = ""):
        instances = list(instances)
        for inst in instances:
            if inst.features.dim != dim:
                raise DataError(
                    f"instance dimension {inst.features.dim} != dataset dimension {dim}"
                )
        self.instances = instances
        self.dim = dim
        self.name = name

    def __len__(self) -> int:
        return len(self.instances)

    def __iter__(self):
        return iter(self.instances)

    def __getitem__(self, i: int) -> Instance:
        return self.instances[i]

    @property
    def labels(self) -> np.ndarray:
        return np.array([inst.label for inst in self.instances], dtype=np.int64)

    @property
    def n_positive(self) -> int:
        return int(np.sum(self.labels == 1))

    @property
    def n_negative(self) -> int:
        return int(np.sum(self.labels == -1))

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        """CSR view of the feature rows (rows in dataset order)."""
        indptr = np.zeros(len(self) + 1, dtype=np.int64)
        for i, inst in enumerate(self.instances):
            indptr[i + 1] = indptr[i] + inst.features.nnz
        if len(self) == 0:
            return sp.csr_matrix((0, self.dim))
        indices = np.concatenate([inst.features.indices for inst in self.instances])
        values = np.concatenate([inst.features.values for inst in self.instances])
        return sp.csr_matrix((values, indices, indptr), shape=(len(self), self.dim))

    def subset(self, indices: Iterable[int], name: str | None = None) -> "Dataset":
        picked = [self.instances[i] for i in indices]
        return Dataset(picked, self.dim, name if name is not None else self.name)

    def require_both_classes(self) -> None:
        if self.n_positive == 0 or self.n_negative == 0:
            raise DataError(f"dataset {self.name!r} does not contain both classes")


@dataclass(frozen=True)
class PartitionPlan:
    """Fold assignments for repeated k-fold splitting.

    ``assignments`` has shape (repeats, n_instances); entry (r, i) is the
    fold index of instance i in repeat r.
    """

    repeats: int
    folds: int
    seed: int
    assignments: np.ndarray

    def test_indices(self, repeat: int, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments[repeat] == fold)

    def train_indices(self, repeat: int, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments[repeat] != fold)


def _parse_line(line: str, lineno: int, want_raw_label: bool):
    """Parse one LIBSVM line into (label, indices, values)."""
    comment = line.find("#")
    if comment >= 0:
        line = line[:comment]
    tokens = line.split()
    if not tokens:
        return None
    try:
        raw_label = float(tokens[0])
    except ValueError:
        raise ParseError(f"non-numeric label {tokens[0]!r}", line=lineno) from None
    if not np.isfinite(raw_label):
        raise ParseError(f"non-finite label {tokens[0]!r}", line=lineno)

    indices: list[int] = []
    values: list[float] = []
    prev = 0
    for tok in tokens[1:]:
        idx_s, sep, val_s = tok.partition(":")
        if not sep:
            raise ParseError(f"malformed token {tok!r}", line=lineno)
        try:
            idx = int(idx_s)
        except ValueError:
            raise ParseError(f"non-integer index in {tok!r}", line=lineno) from None
        try:
            val = float(val_s)
        except ValueError:
            raise ParseError(f"non-numeric value in {tok!r}", line=lineno) from None
        if idx < 1:
            raise ParseError(f"index {idx} < 1 (LIBSVM indices are 1-based)", line=lineno)
        if idx == prev:
            raise ParseError(f"duplicate index {idx}", line=lineno)
        if idx < prev:
            raise ParseError(f"non-ascending index {idx}", line=lineno)
        if not np.isfinite(val):
            raise ParseError(f"non-finite value in {tok!r}", line=lineno)
        prev = idx
        if val != 0.0:
            indices.append(idx - 1)
            values.append(val)

    if want_raw_label:
        label = raw_label
    else:
        label = 1 if raw_label > 0 else -1
    return label, np.array(indices, dtype=np.int64), np.array(values)


def parse_libsvm(
    text: str | Iterable[str],
    dimension: int | None = None,
    name: str = "",
    raw_labels: bool = False,
):
    """Parse LIBSVM-format text into a Dataset.

    Accepts a string or an iterable of lines.  Indices are converted from
    1-based to 0-based.  The dimension defaults to the maximum observed
    index but can be overridden (larger than observed) so that train and
    test files with differing maxima align.  Labels are mapped by sign
    (value > 0 becomes +1, else -1) unless ``raw_labels`` is set, in which
    case ``(dataset, raw_label_list)`` is returned and binarization is
    deferred to :func:`binarize_labels`.

    '#' starts a comment; blank lines are skipped; LF and CRLF both work.
    """
    if isinstance(text, str):
        lines = text.splitlines()
    else:
        lines = text

    parsed = []
    max_index = -1
    for lineno, line in enumerate(lines, start=1):
        row = _parse_line(line.rstrip("\r\n"), lineno, raw_labels)
        if row is None:
            continue
        label, idx, val = row
        if idx.size:
            max_index = max(max_index, int(idx[-1]))
        parsed.append((label, idx, val))

    dim = max_index + 1
    if dimension is not None:
        if dimension < dim:
            raise ParseError(
                f"dimension override {dimension} too small; data needs at least {dim}"
            )
        dim = dimension
    if dim == 0:
        dim = 1  # empty or all-empty rows; any positive dimension works

    if raw_labels:
        instances = [
            Instance(SparseVector(idx, val, dim), 1) for (_, idx, val) in parsed
        ]
        raws = [label for (label, _, _) in parsed]
        return Dataset(instances, dim, name), raws

    instances = [
        Instance(SparseVector(idx, val, dim), label) for (label, idx, val) in parsed
    ]
    return Dataset(instances, dim, name)


def load_libsvm(path, dimension=None, raw_labels=False):
    """Parse a LIBSVM file from disk (UTF-8)."""
    with open(path, "r", encoding="utf-8") as fh:
        return parse_libsvm(fh, dimension=dimension, name=str(path), raw_labels=raw_labels)


def _format_value(v: float) -> str:
    return repr(v) if v != int(v) else str(int(v))


def dump_libsvm(dataset: Dataset) -> str:
    """Serialize a Dataset back to LIBSVM text (1-based indices).

    Round-trips exactly: parsing the output yields an identical dataset
    (values are written with full float precision).
    """
    lines = []
    for inst in dataset:
        parts = [f"{inst.label:+d}"]
        for i, v in zip(inst.features.indices, inst.features.values):
            parts.append(f"{i + 1}:{_format_value(float(v))}")
        lines.append(" ".join(parts))
    return "\n".join(lines) + ("\n" if lines else "")


def save_libsvm(dataset: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_libsvm(dataset))


def l2_normalize(instance: Instance) -> Instance:
    """Scale the features to unit Euclidean norm.

    Zero vectors pass through unchanged; there is no principled way to
    normalize them and they still contribute to class statistics.
    """
    n = instance.features.norm()
    if n == 0.0:
        return instance
    return Instance(instance.features.scaled(1.0 / n), instance.label)


def random_positive_set(labels: Iterable, seed: int) -> set:
    """Pick half of the distinct raw labels (seeded) as the positive
    meta-class; with an odd count the extra label goes to the negative
    side."""
    distinct = sorted(set(labels))
    if len(distinct) < 2:
        raise ConfigError("need at least two distinct labels to binarize")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(distinct))
    half = len(distinct) // 2
    return {distinct[i] for i in order[:half]}


def binarize_labels(dataset: Dataset, raw_labels: Sequence, positive_set: set) -> Dataset:
    """Relabel a multiclass dataset: raw labels in ``positive_set`` become
    +1, all others -1."""
    if not positive_set:
        raise ConfigError("positive_set must be nonempty")
    observed = set(raw_labels)
    if not set(positive_set) < observed:
        raise ConfigError(
            "positive_set must be a strict subset of the observed labels"
        )
    if len(raw_labels) != len(dataset):
        raise ConfigError("raw_labels length must match the dataset")
    instances = [
        Instance(inst.features, 1 if raw in positive_set else -1)
        for inst, raw in zip(dataset, raw_labels)
    ]
    return Dataset(instances, dataset.dim, dataset.name)


def make_partitions(dataset: Dataset, folds: int, repeats: int, seed: int) -> PartitionPlan:
    """Repeated k-fold assignments from seeded permutations.

    Repeat r permutes the instances with seed ``seed + r`` and deals them
    into folds of near-equal size (the first ``n % folds`` folds get one
    extra instance).  Identical inputs give identical plans.
    """
    n = len(dataset)
    if folds < 2:
        raise ConfigError(f"folds must be >= 2, got {folds}")
    if n < folds:
        raise ConfigError(f"dataset has {n} instances, fewer than {folds} folds")
    if repeats < 1:
        raise ConfigError("repeats must be >= 1")

    assignments = np.empty((repeats, n), dtype=np.int64)
    base, extra = divmod(n, folds)
    sizes = [base + 1 if f < extra else base for f in range(folds)]
    fold_of_position = np.repeat(np.arange(folds), sizes)
    for r in range(repeats):
        perm = np.random.default_rng(seed + r).permutation(n)
        assignments[r, perm] = fold_of_position
    return PartitionPlan(repeats=repeats, folds=folds, seed=seed, assignments=assignments)


def derive_seed(*parts) -> int:
    """Stable seed derivation from heterogeneous parts (unlike ``hash``,
    identical across processes and runs)."""
    import hashlib

    h = hashlib.blake2b(digest_size=8)
    for p in parts:
        h.update(repr(p).encode())
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "big") % (2**63)
