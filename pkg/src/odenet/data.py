"""Datasets: the sinusoid, circle and MNIST experiments plus CSV ingestion."""

from __future__ import annotations

import csv
import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import ShapeError

TASKS = ("regression", "binary", "multiclass")

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

CIRCLE_CENTER = (0.5, 0.5)
CIRCLE_RADIUS = 0.3

SINUSOID_TRAIN_SIZE = 1000
SINUSOID_VAL_SIZE = 3333


def make_rng(seed):
    """PCG64 generator; every seeded draw in the package goes through here."""
    return np.random.Generator(np.random.PCG64(int(seed)))


@dataclass(frozen=True, eq=False)
class Dataset:
    inputs: np.ndarray
    targets: np.ndarray
    task: str = "regression"

    def __post_init__(self):
        X = np.asarray(self.inputs, dtype=np.float64)
        Y = np.asarray(self.targets, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        if Y.ndim == 1:
            Y = Y[:, None]
        if X.shape[0] != Y.shape[0]:
            raise ShapeError(f"{X.shape[0]} inputs but {Y.shape[0]} targets")
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise ValueError("dataset contains non-finite values")
        if self.task == "binary" and not np.all((Y == 0) | (Y == 1)):
            raise ValueError("binary targets must be 0 or 1")
        if self.task == "multiclass" and Y.size and not (
            np.all((Y == 0) | (Y == 1)) and np.all(Y.sum(axis=1) == 1)
        ):
            raise ValueError("multiclass targets must be one-hot rows")
        X.setflags(write=False)
        Y.setflags(write=False)
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "targets", Y)

    def __len__(self):
        return self.inputs.shape[0]

    @property
    def n(self) -> int:
        return self.inputs.shape[1]

    @property
    def m(self) -> int:
        return self.targets.shape[1]

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.intp)
        return Dataset(self.inputs[idx], self.targets[idx], self.task)

    def labels(self):
        """Integer class labels for classification tasks."""
        return classify(self.targets, self.task)


def gen_sinusoid(K: int) -> Dataset:
    """Grid ``(k-1)/K`` for k = 1..K with targets ``sin(4 pi xi)``."""
    if K < 1:
        raise ValueError("K must be positive")
    xi = np.arange(K, dtype=np.float64) / K
    return Dataset(xi[:, None], np.sin(4.0 * np.pi * xi)[:, None], "regression")


def circle_label(inputs):
    """0 strictly inside the circle of radius 0.3 around (0.5, 0.5), else 1."""
    X = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    dist = np.sqrt((X[:, 0] - CIRCLE_CENTER[0]) ** 2 + (X[:, 1] - CIRCLE_CENTER[1]) ** 2)
    return np.where(dist < CIRCLE_RADIUS, 0.0, 1.0)


def gen_circle(K: int, seed: int) -> Dataset:
    if K < 1:
        raise ValueError("K must be positive")
    X = make_rng(seed).random((K, 2))
    return Dataset(X, circle_label(X)[:, None], "binary")


def _open(path):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_idx(path, expected_magic, what):
    with _open(path) as fh:
        raw = fh.read()
    if len(raw) < 8:
        raise ValueError(f"{what} file {path} is truncated")
    magic, count = struct.unpack(">II", raw[:8])
    if magic != expected_magic:
        raise ValueError(f"bad magic 0x{magic:08x} in {what} file {path}, expected 0x{expected_magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    size = int(np.prod(dims))
    if len(raw) - header != size:
        raise ValueError(f"{what} file {path} holds {len(raw) - header} bytes of data, header says {size}")
    data = np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(dims)
    return data


def load_mnist_idx(images_path, labels_path, limit=None) -> Dataset:
    """Read an IDX image/label pair into a multiclass dataset.

    Pixels are flattened row-major and divided by 255; labels become
    10-dimensional one-hot rows.
    """
    images = _read_idx(images_path, IDX_IMAGES_MAGIC, "image")
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC, "label")
    if images.shape[0] != labels.shape[0]:
        raise ValueError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    if limit is not None:
        images = images[:limit]
        labels = labels[:limit]
    X = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return Dataset(X, one_hot(labels, 10), "multiclass")


def write_idx(path, array) -> None:
    """Write an unsigned-byte array in IDX format (magic 0x0000 08 <ndim>)."""
    arr = np.asarray(array)
    if arr.dtype != np.uint8:
        raise ValueError("IDX writer only supports uint8 data")
    header = struct.pack(">I", 0x0800 | arr.ndim) + struct.pack(f">{arr.ndim}I", *arr.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(arr).tobytes())


def one_hot(labels, num_classes: int):
    labels = np.asarray(labels, dtype=np.intp)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ValueError(f"labels must lie in [0, {num_classes})")
    out = np.zeros((labels.shape[0], num_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def minmax_scale(inputs, lo=None, hi=None):
    """Scale each column to [0, 1]; returns ``(scaled, lo, hi)`` for reuse on other data."""
    X = np.asarray(inputs, dtype=np.float64)
    lo = X.min(axis=0) if lo is None else np.asarray(lo, dtype=np.float64)
    hi = X.max(axis=0) if hi is None else np.asarray(hi, dtype=np.float64)
    span = np.where(hi > lo, hi - lo, 1.0)
    return (X - lo) / span, lo, hi


def split(dataset: Dataset, fraction: float, seed: int):
    """Seeded shuffle, then the first ``round(fraction * K)`` samples train."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie strictly between 0 and 1")
    K = len(dataset)
    n_train = int(round(fraction * K))
    if n_train == 0 or n_train == K:
        raise ValueError(f"split of {K} samples at fraction {fraction} leaves one side empty")
    perm = make_rng(seed).permutation(K)
    return dataset.subset(perm[:n_train]), dataset.subset(perm[n_train:])


def classify(outputs, task: str):
    """Hard labels: threshold 0.5 (ties go to 1) or argmax (ties go to the lowest index)."""
    Y = np.atleast_2d(np.asarray(outputs, dtype=np.float64))
    if task == "binary":
        return np.where(Y[:, 0] >= 0.5, 1, 0)
    if task == "multiclass":
        return np.argmax(Y, axis=1)
    raise ValueError(f"classification is undefined for task {task!r}")


def accuracy(predictions, targets, task: str) -> float:
    if task not in ("binary", "multiclass"):
        raise ValueError(f"accuracy is unsupported for task {task!r}")
    P = np.atleast_2d(np.asarray(predictions, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if P.shape[0] == 1 and P.shape[1] != Y.shape[1] and task == "binary":
        P, Y = P.T, Y.T
    if P.shape[0] == 0:
        raise ValueError("accuracy needs at least one sample")
    if P.shape[0] != Y.shape[0]:
        raise ShapeError("predictions and targets differ in length")
    if task == "binary":
        truth = Y[:, 0].astype(int)
    else:
        truth = np.argmax(Y, axis=1)
    return float(np.mean(classify(P, task) == truth))


def load_csv_dataset(path, task: str = "regression") -> Dataset:
    """Read a CSV whose header names columns ``x0..x{n-1}, y0..y{m-1}``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    xcols = [i for i, h in enumerate(header) if h.startswith("x")]
    ycols = [i for i, h in enumerate(header) if h.startswith("y")]
    if not xcols or not ycols:
        raise ValueError(f"{path} header must name x0.. and y0.. columns")
    if [header[i] for i in xcols] != [f"x{j}" for j in range(len(xcols))] or [
        header[i] for i in ycols
    ] != [f"y{j}" for j in range(len(ycols))]:
        raise ValueError(f"{path} columns must be numbered consecutively from 0")
    body = np.array([[float(v) for v in row] for row in rows[1:] if row], dtype=np.float64)
    body = body.reshape(-1, len(header))
    return Dataset(body[:, xcols], body[:, ycols], task)


def load_csv_inputs(path):
    """Input-only CSV (``x0..`` columns); extra columns are ignored."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    xcols = [i for i, h in enumerate(header) if h.startswith("x")]
    if not xcols:
        raise ValueError(f"{path} has no x columns")
    return np.array([[float(row[i]) for i in xcols] for row in rows[1:] if row], dtype=np.float64).reshape(
        -1, len(xcols)
    )


def save_csv_dataset(dataset: Dataset, path) -> None:
    header = [f"x{j}" for j in range(dataset.n)] + [f"y{j}" for j in range(dataset.m)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for x, y in zip(dataset.inputs, dataset.targets):
            writer.writerow([repr(float(v)) for v in np.concatenate([x, y])])
