"""Euclidean classifiers for projected embeddings.

Once points live in a flat k-dimensional space any ordinary classifier
applies.  Two are provided: majority-vote nearest neighbours and a
one-vs-rest linear max-margin model trained by seeded stochastic
subgradient descent.  Both are deterministic given their inputs (and
seed), with explicit tie rules so repeated runs agree bitwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spd_core import DimensionMismatchError

DEFAULT_PENALTY = 1.0
DEFAULT_EPOCHS = 50


@dataclass(frozen=True)
class LabeledSet:
    """Training vectors with integer class labels in [0, class_count)."""

    vectors: np.ndarray
    labels: np.ndarray
    class_count: int

    def __post_init__(self) -> None:
        vectors = np.ascontiguousarray(np.asarray(self.vectors, dtype=np.float64))
        labels = np.asarray(self.labels, dtype=np.int64)
        if vectors.ndim != 2:
            raise ValueError("vectors must be a 2-d array of row vectors")
        if labels.ndim != 1 or labels.shape[0] != vectors.shape[0]:
            raise ValueError("labels must align with vectors")
        if not np.all(np.isfinite(vectors)):
            raise ValueError("vectors must be finite")
        if int(self.class_count) < 1:
            raise ValueError("class_count must be positive")
        if labels.size and (labels.min() < 0 or labels.max() >= self.class_count):
            raise ValueError("labels must lie in [0, class_count)")
        vectors.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "class_count", int(self.class_count))

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


@dataclass(frozen=True)
class LinearSvmModel:
    """One-vs-rest linear scorers: class score = weights[c] @ x + biases[c]."""

    weights: np.ndarray
    biases: np.ndarray
    penalty: float
    training_history: np.ndarray

    def __post_init__(self) -> None:
        weights = np.asarray(self.weights, dtype=np.float64)
        biases = np.asarray(self.biases, dtype=np.float64)
        history = np.asarray(self.training_history, dtype=np.float64)
        if weights.ndim != 2 or biases.shape != (weights.shape[0],):
            raise ValueError("need one weight row and one bias per class")
        if float(self.penalty) <= 0.0:
            raise ValueError("penalty must be positive")
        if history.size and np.any(np.diff(history) > 1e-9):
            raise ValueError("training history must be non-increasing")
        for arr in (weights, biases, history):
            arr.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "biases", biases)
        object.__setattr__(self, "penalty", float(self.penalty))
        object.__setattr__(self, "training_history", history)

    @property
    def class_count(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]


def _query_vector(query, dim: int) -> np.ndarray:
    vec = np.asarray(getattr(query, "vector", query), dtype=np.float64).ravel()
    if vec.shape[0] != dim:
        raise DimensionMismatchError(f"query has {vec.shape[0]} entries, expected {dim}")
    return vec


def knn_classify(query, train: LabeledSet, k_neighbors: int) -> int:
    """Majority vote over the Euclidean nearest training vectors.

    Vote ties go to the smallest class id; distance ties go to the
    lower training index, so the answer does not depend on storage
    order beyond the documented rules.
    """
    if train.n == 0:
        raise ValueError("training set is empty")
    if not 1 <= k_neighbors <= train.n:
        raise ValueError("k_neighbors must lie in [1, n]")
    vec = _query_vector(query, train.dim)
    dist = np.linalg.norm(train.vectors - vec[None, :], axis=1)
    order = np.argsort(dist, kind="stable")[:k_neighbors]
    votes = np.bincount(train.labels[order], minlength=train.class_count)
    return int(np.argmax(votes))


def _ovr_objective(augmented, signs, stacked, lam):
    # signs is classes x n of +-1; hinge averaged over samples per class.
    margins = signs * (stacked @ augmented.T)
    hinge = np.maximum(0.0, 1.0 - margins).mean(axis=1)
    reg = 0.5 * lam * np.sum(stacked * stacked, axis=1)
    return float(np.sum(reg + hinge))


def linear_svm_train(
    train: LabeledSet,
    penalty: float = DEFAULT_PENALTY,
    epochs: int = DEFAULT_EPOCHS,
    seed: int = 0,
) -> LinearSvmModel:
    """Train one-vs-rest hinge-loss linear classifiers by seeded SGD.

    Each class c solves min_w lam/2 ||w||^2 + mean_i hinge(y_i, w.x_i)
    with y_i = +-1 against the rest and lam = 1 / (penalty * n), via the
    classic 1/(lam*t) step schedule with projection onto the 1/sqrt(lam)
    ball.  Features are standardized internally (subgradient descent is
    hopeless when coordinates carry a large common offset) and the shift
    and scale are folded back into the returned weights and biases, so
    the model scores raw vectors.  The bias rides along as an appended
    constant feature.  All classes share the same epoch sample order, so
    relabelling classes only permutes the weight rows.  The recorded
    history is the best full objective seen after each epoch and the
    returned model is the iterate achieving it, which makes the history
    non-increasing by construction.
    """
    if train.class_count < 2:
        raise ValueError("need at least 2 classes")
    if train.n == 0:
        raise ValueError("training set is empty")
    if penalty <= 0.0:
        raise ValueError("penalty must be positive")
    if epochs < 0:
        raise ValueError("epochs must be non-negative")
    n, dim = train.vectors.shape
    classes = train.class_count
    shift = train.vectors.mean(axis=0)
    scale = train.vectors.std(axis=0)
    scale[scale <= 0.0] = 1.0
    augmented = np.hstack([(train.vectors - shift) / scale, np.ones((n, 1))])
    signs = np.where(train.labels[None, :] == np.arange(classes)[:, None], 1.0, -1.0)
    lam = 1.0 / (penalty * n)
    radius = 1.0 / np.sqrt(lam)
    stacked = np.zeros((classes, dim + 1))
    best = stacked.copy()
    best_objective = _ovr_objective(augmented, signs, stacked, lam)
    rng = np.random.default_rng(seed)
    history = []
    step = 0
    for _ in range(epochs):
        for idx in rng.permutation(n):
            step += 1
            eta = 1.0 / (lam * step)
            margins = signs[:, idx] * (stacked @ augmented[idx])
            stacked *= 1.0 - eta * lam
            hit = margins < 1.0
            if np.any(hit):
                coef = eta * signs[hit, idx]
                stacked[hit] += coef[:, None] * augmented[idx][None, :]
            norms = np.linalg.norm(stacked, axis=1)
            over = norms > radius
            if np.any(over):
                stacked[over] *= radius / norms[over, None]
        objective = _ovr_objective(augmented, signs, stacked, lam)
        if objective < best_objective:
            best_objective = objective
            best = stacked.copy()
        history.append(best_objective)
    raw_weights = best[:, :dim] / scale[None, :]
    raw_biases = best[:, dim] - raw_weights @ shift
    return LinearSvmModel(
        weights=raw_weights,
        biases=raw_biases,
        penalty=penalty,
        training_history=np.asarray(history),
    )


def linear_svm_predict(query, model: LinearSvmModel) -> int:
    """Highest-scoring class; score ties go to the smallest class id."""
    vec = _query_vector(query, model.dim)
    scores = model.weights @ vec + model.biases
    return int(np.argmax(scores))
