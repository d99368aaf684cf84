"""Minibatch SGD and momentum SGD over ODENet parameter paths.

Each epoch partitions the training indices into shuffled batches, and for
every batch runs forward, adjoint and gradient assembly and then updates the
parameters in place of the previous ones (no gradient staleness).  Training
stops once an entire epoch moves every parameter family by less than
``eta_stop`` in Frobenius norm, or after ``max_epochs``.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .adjoint import loss_and_gradients, minibatch_loss
from .core import Gradients, ODENetSpec, ParamPath
from .data import Dataset, accuracy, make_rng
from .exceptions import DivergenceError, ShapeError
from .forward import predict

log = logging.getLogger(__name__)

METHODS = ("sgd", "momentum")
METRICS_HEADER = ("epoch", "train_loss", "val_loss", "train_acc", "val_acc")


@dataclass(frozen=True)
class OptimizerConfig:
    tau: float = 0.01
    tau1: float = 0.0
    eta_stop: float = 0.0
    max_epochs: int = 100
    batch_size: int = 32
    seed: int = 0
    method: str = "sgd"
    scheme: str = "exact"

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not 0.0 <= self.tau1 < 1.0:
            raise ValueError("tau1 must lie in [0, 1)")
        if self.eta_stop < 0:
            raise ValueError("eta_stop must be non-negative (0 disables the stopping rule)")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: Optional[float] = None
    train_acc: Optional[float] = None
    val_acc: Optional[float] = None

    def row(self):
        def fmt(v):
            return "" if v is None else repr(float(v))

        return [str(self.epoch)] + [fmt(v) for v in (self.train_loss, self.val_loss, self.train_acc, self.val_acc)]


@dataclass
class TrainState:
    params: ParamPath
    prev_params: ParamPath
    epoch: int = 0
    history: list = field(default_factory=list)
    initial: Optional[EpochRecord] = None
    converged: bool = False


def partition_batches(K: int, batch_size: int, rng):
    """Shuffle ``0..K-1`` and cut it into consecutive batches of ``batch_size``.

    The last batch holds the remainder when ``batch_size`` does not divide K.
    """
    if K < 1:
        raise ValueError("K must be positive")
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    perm = rng.permutation(K)
    return [perm[i:i + batch_size] for i in range(0, K, batch_size)]


def _check_same(params, other, what):
    for a, b in zip(params.arrays(), other.arrays()):
        if a.shape != b.shape:
            raise ShapeError(f"{what} shape {b.shape} does not match parameters {a.shape}")


def sgd_step(params: ParamPath, grads: Gradients, tau: float) -> ParamPath:
    _check_same(params, grads, "gradient")
    return ParamPath(*(p - tau * g for p, g in zip(params.arrays(), grads.arrays())))


def momentum_step(params: ParamPath, prev_params: ParamPath, grads: Gradients, tau: float, tau1: float) -> ParamPath:
    _check_same(params, grads, "gradient")
    _check_same(params, prev_params, "previous parameters")
    return ParamPath(
        *(
            p - tau * g + tau1 * (p - q)
            for p, q, g in zip(params.arrays(), prev_params.arrays(), grads.arrays())
        )
    )


def parameter_change(new: ParamPath, old: ParamPath) -> float:
    """Largest Frobenius norm of the change across the three families."""
    return max(float(np.linalg.norm(a - b)) for a, b in zip(new.arrays(), old.arrays()))


def evaluate(spec: ODENetSpec, params: ParamPath, dataset: Dataset):
    """``(loss, accuracy)`` over a dataset; accuracy is None for regression."""
    preds = predict(spec, params, dataset.inputs)
    loss = minibatch_loss(preds, dataset.targets)
    acc = None if dataset.task == "regression" else accuracy(preds, dataset.targets, dataset.task)
    return loss, acc


def _record(spec, params, epoch, dataset, valset):
    train_loss, train_acc = evaluate(spec, params, dataset)
    val_loss = val_acc = None
    if valset is not None and len(valset):
        val_loss, val_acc = evaluate(spec, params, valset)
    return EpochRecord(epoch, train_loss, val_loss, train_acc, val_acc)


def train(
    spec: ODENetSpec,
    init: ParamPath,
    dataset: Dataset,
    valset: Optional[Dataset],
    cfg: OptimizerConfig,
    on_epoch: Optional[Callable[[EpochRecord, TrainState], None]] = None,
) -> TrainState:
    """Run minibatch training from ``init``; returns the final state with its history.

    ``on_epoch`` is called after each epoch's metrics are recorded (used for
    incremental CSV output and progress logging).
    """
    if len(dataset) == 0:
        raise ValueError("training set is empty")
    if dataset.n != spec.n or dataset.m != spec.m:
        raise ShapeError(f"dataset is {dataset.n} -> {dataset.m}, spec is {spec.n} -> {spec.m}")
    init.check(spec)
    rng = make_rng(cfg.seed)
    X, F = dataset.inputs, dataset.targets
    K = len(dataset)

    state = TrainState(params=init, prev_params=init)
    state.initial = _record(spec, init, 0, dataset, valset)

    while state.epoch < cfg.max_epochs:
        epoch = state.epoch + 1
        start = state.params
        params, prev = state.params, state.prev_params
        for b, idx in enumerate(partition_batches(K, cfg.batch_size, rng)):
            try:
                _, grads, _ = loss_and_gradients(spec, params, X[idx], F[idx], cfg.scheme)
            except DivergenceError as exc:
                sample = None if exc.sample is None else int(idx[exc.sample])
                raise exc.with_context(epoch=epoch, batch=b, sample=sample) from None
            if not all(np.all(np.isfinite(g)) for g in grads.arrays()):
                raise DivergenceError("gradients diverged", epoch=epoch, batch=b)
            try:
                if cfg.method == "momentum":
                    params, prev = momentum_step(params, prev, grads, cfg.tau, cfg.tau1), params
                else:
                    params, prev = sgd_step(params, grads, cfg.tau), params
            except ValueError as exc:
                # ParamPath refuses non-finite entries; an overflowing update lands here
                raise DivergenceError(f"parameter update failed: {exc}", epoch=epoch, batch=b) from None
        state.params, state.prev_params, state.epoch = params, prev, epoch
        try:
            record = _record(spec, params, epoch, dataset, valset)
        except DivergenceError as exc:
            raise exc.with_context(epoch=epoch) from None
        state.history.append(record)
        if on_epoch is not None:
            on_epoch(record, state)
        change = parameter_change(params, start)
        log.debug("epoch %d loss %.6g change %.3g", epoch, record.train_loss, change)
        if change < cfg.eta_stop:
            state.converged = True
            break
    return state


class MetricsWriter:
    """Writes one CSV row per epoch and flushes it immediately."""

    def __init__(self, path):
        self.path = path
        self._fh = open(path, "w", newline="")
        self._writer = csv.writer(self._fh, lineterminator="\n")
        self._writer.writerow(METRICS_HEADER)
        self._fh.flush()

    def __call__(self, record: EpochRecord, state=None):
        self._writer.writerow(record.row())
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_metrics(path):
    """Parse a metrics CSV back into EpochRecords (empty fields become None)."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            vals = {k: (None if row[k] == "" else float(row[k])) for k in METRICS_HEADER[1:]}
            out.append(EpochRecord(int(row["epoch"]), **vals))
    return out


def init_params(spec: ODENetSpec, preset: str = "zeros") -> ParamPath:
    """Initial parameter presets: ``zeros`` or ``eps`` (every entry 1e-8)."""
    if preset == "zeros":
        return ParamPath.zeros(spec)
    if preset == "eps":
        return ParamPath.constant(spec, 1e-8)
    raise ValueError(f"unknown init preset {preset!r}; expected 'zeros' or 'eps'")


__all__ = [
    "EpochRecord",
    "MetricsWriter",
    "OptimizerConfig",
    "TrainState",
    "evaluate",
    "init_params",
    "momentum_step",
    "parameter_change",
    "partition_batches",
    "read_metrics",
    "sgd_step",
    "train",
]
