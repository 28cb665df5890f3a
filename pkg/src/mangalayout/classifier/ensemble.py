"""Plurality voting over the five cross-validation fold models."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, clone
from sklearn.exceptions import NotFittedError

from ..exceptions import ModelTaskMismatchError
from .estimator import LayoutClassifier


@dataclass(frozen=True, eq=False)
class EnsemblePrediction:
    votes: Tuple[int, ...]
    probabilities: np.ndarray  # (n_models, n_classes)
    final: int
    tie_broken: bool


def vote(probabilities) -> EnsemblePrediction:
    """Combine per-model class probabilities for a single item.

    Each model votes for its argmax class and the plurality wins. A tie is
    broken by the largest probability summed over all models among the tied
    classes, then by the lowest class id.
    """
    p = np.asarray(probabilities, dtype=np.float64)
    if p.ndim != 2 or p.shape[0] == 0:
        raise ValueError(f"expected (n_models, n_classes) probabilities, got shape {p.shape}")
    votes = p.argmax(axis=1)
    counts = np.bincount(votes, minlength=p.shape[1])
    tied = np.flatnonzero(counts == counts.max())
    if len(tied) == 1:
        return EnsemblePrediction(tuple(int(v) for v in votes), p, int(tied[0]), False)
    sums = p[:, tied].sum(axis=0)
    # argmax returns the first maximum, i.e. the lowest class id among ties
    final = int(tied[int(np.argmax(sums))])
    return EnsemblePrediction(tuple(int(v) for v in votes), p, final, True)


def vote_batch(probabilities) -> List[EnsemblePrediction]:
    """``probabilities`` shaped ``(n_models, n_items, n_classes)``."""
    p = np.asarray(probabilities)
    return [vote(p[:, i, :]) for i in range(p.shape[1])]


class FoldEnsembleClassifier(ClassifierMixin, BaseEstimator):
    """Train one clone of ``estimator`` per cross-validation fold and vote.

    ``fit`` takes ``fold_ids``: the fold index of every training sample. Model
    ``k`` is trained on samples with ``fold_ids != k`` and validated on the
    rest.
    """

    def __init__(self, estimator=None, n_folds=5):
        self.estimator = estimator
        self.n_folds = n_folds

    def fit(self, X, y, fold_ids, X_dev=None, y_dev=None):
        base = self.estimator if self.estimator is not None else LayoutClassifier()
        X = np.asarray(X, dtype=np.float32)
        y = np.asarray(y)
        fold_ids = np.asarray(fold_ids)
        if fold_ids.shape != y.shape:
            raise ValueError("fold_ids must have one entry per sample")
        n_classes = base.get_params().get("n_classes") or int(y.max()) + 1
        self.estimators_ = []
        for k in range(self.n_folds):
            held = fold_ids == k
            est = clone(base).set_params(n_classes=n_classes)
            if held.any():
                est.fit(X[~held], y[~held], X[held], y[held], X_dev, y_dev)
            else:
                est.fit(X[~held], y[~held], X_dev=X_dev, y_dev=y_dev)
            self.estimators_.append(est)
        self.classes_ = np.arange(n_classes)
        return self

    def _check_fitted(self):
        if not hasattr(self, "estimators_"):
            raise NotFittedError("FoldEnsembleClassifier is not fitted yet")

    def member_probabilities(self, X) -> np.ndarray:
        self._check_fitted()
        return np.stack([est.predict_proba(X) for est in self.estimators_])

    def predict_ensemble(self, X) -> List[EnsemblePrediction]:
        return vote_batch(self.member_probabilities(X))

    def predict(self, X) -> np.ndarray:
        return np.array([p.final for p in self.predict_ensemble(X)], dtype=np.int64)

    def predict_proba(self, X) -> np.ndarray:
        """Mean member probability; not what :meth:`predict` votes on."""
        return self.member_probabilities(X).mean(axis=0)


def check_same_task(models: Sequence) -> None:
    """Raise :class:`ModelTaskMismatchError` unless all fold models agree."""
    keys = {(m.task, m.n_classes, m.ablation) for m in models}
    if len(keys) != 1:
        raise ModelTaskMismatchError(f"fold models disagree on (task, n_classes, ablation): {sorted(map(str, keys))}")


def predict_ensemble(models: Sequence, image) -> EnsemblePrediction:
    """Vote the fold models' predictions for one rendered image."""
    if not models:
        raise ValueError("no models given")
    check_same_task(models)
    probs = [m.predict_proba_image(image) for m in models]
    return vote(np.stack(probs))
