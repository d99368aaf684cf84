"""Brute-force k-nearest-neighbour classifier used as a reference on the circle task."""

from __future__ import annotations

import numpy as np

from .data import Dataset
from .exceptions import ShapeError

_CHUNK = 256


def _check_k(train: Dataset, k: int):
    if len(train) == 0:
        raise ValueError("training set is empty")
    if train.task not in ("binary", "multiclass"):
        raise ValueError(f"k-NN needs a classification dataset, got task {train.task!r}")
    if k < 1:
        raise ValueError("k must be positive")
    if k > len(train):
        raise ValueError(f"k={k} exceeds the {len(train)} training samples")


def _vote(neighbour_labels):
    """Most frequent label per row; equal counts go to the smaller label."""
    labels = np.asarray(neighbour_labels)
    top = int(labels.max()) + 1 if labels.size else 1
    counts = np.zeros((labels.shape[0], top), dtype=np.intp)
    np.add.at(counts, (np.arange(labels.shape[0])[:, None], labels), 1)
    return counts.argmax(axis=1)


def knn_predict_batch(train: Dataset, queries, k: int = 3):
    """Labels for every query row.

    Squared Euclidean distances are computed directly from differences, so
    equal distances compare equal; a stable sort then prefers the lower
    training index among ties.
    """
    _check_k(train, k)
    Q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    if Q.shape[1] != train.n:
        raise ShapeError(f"queries have {Q.shape[1]} features, training data has {train.n}")
    X = train.inputs
    labels = train.labels()
    out = np.empty(Q.shape[0], dtype=np.intp)
    for start in range(0, Q.shape[0], _CHUNK):
        block = Q[start:start + _CHUNK]
        dist = ((block[:, None, :] - X[None, :, :]) ** 2).sum(axis=2)
        nearest = np.argsort(dist, axis=1, kind="stable")[:, :k]
        out[start:start + _CHUNK] = _vote(labels[nearest])
    return out


def knn_predict(train: Dataset, query, k: int = 3) -> int:
    query = np.asarray(query, dtype=np.float64)
    if query.ndim != 1:
        raise ShapeError("query must be a single vector")
    return int(knn_predict_batch(train, query[None, :], k)[0])


def knn_evaluate(train: Dataset, test: Dataset, k: int = 3):
    """``(loss, accuracy)`` on ``test``.

    The loss is the halved mean squared error of the hard predictions
    against the targets (one-hot rows for multiclass).
    """
    pred = knn_predict_batch(train, test.inputs, k)
    truth = test.labels()
    if test.task == "binary":
        outputs = pred[:, None].astype(np.float64)
    else:
        outputs = np.zeros_like(test.targets)
        outputs[np.arange(len(pred)), pred] = 1.0
    loss = float(((outputs - test.targets) ** 2).sum() / (2 * len(test)))
    return loss, float(np.mean(pred == truth))
