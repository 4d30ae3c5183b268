"""Scikit-learn style estimators wrapping the online learners.

These follow the standard estimator contract (parameters stored verbatim
in __init__, work done in fit, fitted attributes with trailing
underscores, get_params/set_params via BaseEstimator) so the learners
compose with pipelines, model selection, and cloning.  fit consumes the
rows as one seeded-shuffled online pass; partial_fit consumes them in
the given order, preserving learner state across calls.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse as sp
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .data import Dataset, Instance, SparseVector, l2_normalize
from .exceptions import DataError
from .learners import init_model, materialized_weights, step, train_single_pass
from .objective import HyperParams

__all__ = [
    "AdaOAMClassifier",
    "SparseAdaOAMClassifier",
    "PairwiseOGDClassifier",
    "UnivariateLossClassifier",
]


def _rows_to_instances(X, y_signed, normalize: bool) -> list[Instance]:
    dim = X.shape[1]
    instances = []
    if sp.issparse(X):
        X = X.tocsr()
        X.sort_indices()
        X.eliminate_zeros()
        for i in range(X.shape[0]):
            sl = slice(X.indptr[i], X.indptr[i + 1])
            vec = SparseVector(X.indices[sl].astype(np.int64), X.data[sl], dim)
            instances.append(Instance(vec, int(y_signed[i])))
    else:
        for i in range(X.shape[0]):
            row = np.asarray(X[i], dtype=np.float64)
            idx = np.flatnonzero(row)
            instances.append(Instance(SparseVector(idx, row[idx], dim), int(y_signed[i])))
    if normalize:
        instances = [l2_normalize(inst) for inst in instances]
    return instances


class _BaseOnlineAUCClassifier(ClassifierMixin, BaseEstimator):
    """Shared fit/predict machinery; subclasses pin the algorithm tag."""

    _algorithm: str = ""

    def _hyper_params(self) -> HyperParams:
        return HyperParams(
            eta=self.eta,
            lambda_=self.lambda_,
            theta=getattr(self, "theta", 0.0),
            delta=getattr(self, "delta", 1e-8),
        )

    def _encode_labels(self, y) -> np.ndarray:
        y = np.asarray(y)
        if not hasattr(self, "classes_"):
            classes = np.unique(y)
            if classes.size != 2:
                raise DataError(
                    "binary classification requires exactly 2 classes up front "
                    f"(got {classes.size}; pass classes= to partial_fit for "
                    "single-class batches)"
                )
            self.classes_ = classes
        else:
            extra = np.setdiff1d(np.unique(y), self.classes_)
            if extra.size:
                raise DataError(f"labels {extra.tolist()} outside classes_ seen first")
        return np.where(y == self.classes_[1], 1, -1)

    def fit(self, X, y):
        """Train from scratch with one shuffled online pass over (X, y)."""
        X, y = check_X_y(X, y, accept_sparse="csr")
        for attr in ("classes_", "_model"):
            if hasattr(self, attr):
                delattr(self, attr)
        y_signed = self._encode_labels(y)
        instances = _rows_to_instances(X, y_signed, self.normalize)
        dataset = Dataset(instances, X.shape[1])
        model, _ = train_single_pass(
            dataset,
            self._algorithm,
            self._hyper_params(),
            seed=self.random_state,
            clip_to_ball=getattr(self, "clip_to_ball", False),
        )
        self._model = model
        self.coef_ = materialized_weights(model)
        self.n_features_in_ = X.shape[1]
        self.n_rounds_ = model.round
        return self

    def partial_fit(self, X, y, classes=None):
        """Consume rows in order, keeping online state across calls."""
        X, y = check_X_y(X, y, accept_sparse="csr")
        if not hasattr(self, "_model"):
            if classes is not None:
                classes = np.unique(np.asarray(classes))
                if classes.size != 2:
                    raise DataError("classes must list exactly 2 labels")
                self.classes_ = classes
            self._model = init_model(
                self._algorithm,
                X.shape[1],
                self._hyper_params(),
                clip_to_ball=getattr(self, "clip_to_ball", False),
            )
            self.n_features_in_ = X.shape[1]
        y_signed = self._encode_labels(y)
        for inst in _rows_to_instances(X, y_signed, self.normalize):
            step(self._model, inst)
        self.coef_ = materialized_weights(self._model)
        self.n_rounds_ = self._model.round
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, accept_sparse="csr")
        if X.shape[1] != self.coef_.size:
            raise DataError(f"X has {X.shape[1]} features, model has {self.coef_.size}")
        scores = X @ self.coef_
        return np.asarray(scores).ravel()

    def predict(self, X):
        scores = self.decision_function(X)
        return self.classes_[(scores > 0).astype(int)]


class AdaOAMClassifier(_BaseOnlineAUCClassifier):
    """Online AUC maximizer with per-coordinate adaptive learning rates
    (diagonal preconditioning) and a Mahalanobis-ball projection."""

    _algorithm = "adaoam"

    def __init__(self, eta=1.0, lambda_=0.01, delta=1e-8, normalize=True, random_state=0):
        self.eta = eta
        self.lambda_ = lambda_
        self.delta = delta
        self.normalize = normalize
        self.random_state = random_state


class SparseAdaOAMClassifier(_BaseOnlineAUCClassifier):
    """Sparse variant: adaptive soft-threshold updates with lazy L1
    shrinkage; produces exact zeros in coef_."""

    _algorithm = "sadaoam"

    def __init__(
        self,
        eta=1.0,
        lambda_=1e-6,
        theta=1e-4,
        delta=1e-8,
        clip_to_ball=False,
        normalize=True,
        random_state=0,
    ):
        self.eta = eta
        self.lambda_ = lambda_
        self.theta = theta
        self.delta = delta
        self.clip_to_ball = clip_to_ball
        self.normalize = normalize
        self.random_state = random_state


class PairwiseOGDClassifier(_BaseOnlineAUCClassifier):
    """Non-adaptive pairwise baseline: uniform learning rate, Euclidean
    projection."""

    _algorithm = "ogd_pairwise"

    def __init__(self, eta=0.1, lambda_=0.01, normalize=True, random_state=0):
        self.eta = eta
        self.lambda_ = lambda_
        self.normalize = normalize
        self.random_state = random_state


class UnivariateLossClassifier(_BaseOnlineAUCClassifier):
    """Class-weighted univariate-loss SGD baseline (logistic or
    exponential loss)."""

    def __init__(self, loss="log", eta=0.1, lambda_=0.01, normalize=True, random_state=0):
        self.loss = loss
        self.eta = eta
        self.lambda_ = lambda_
        self.normalize = normalize
        self.random_state = random_state

    @property
    def _algorithm(self) -> str:
        if self.loss not in ("log", "exp"):
            raise DataError(f"loss must be 'log' or 'exp', got {self.loss!r}")
        return f"uni_{self.loss}"
