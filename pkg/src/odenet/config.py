"""Experiment configuration files.

An INI-style file with sections ``[model]``, ``[train]`` and ``[data]``::

    [model]
    T = 30
    L = 40
    activation = tanh
    A = 6                       # row-major floats, or random_orthogonal:SEED

    [train]
    tau = 0.01
    batch_size = 10
    max_epochs = 200

    [data]
    dataset = sin               # sin | circle | mnist | csv:PATH

Relative paths are resolved against the config file's directory and
environment variables in paths are expanded.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .activations import ActivationKind
from .core import ODENetSpec
from .data import (
    SINUSOID_TRAIN_SIZE,
    SINUSOID_VAL_SIZE,
    Dataset,
    gen_circle,
    gen_sinusoid,
    load_csv_dataset,
    load_mnist_idx,
    make_rng,
    split,
)
from .exceptions import ConfigError
from .optimizer import OptimizerConfig

REQUIRED = {
    "model": ("T", "L"),
    "train": ("tau", "batch_size", "max_epochs"),
    "data": ("dataset",),
}

CIRCLE_TRAIN_SIZE = 10000
CIRCLE_VAL_SIZE = 2500


def random_orthogonal(m: int, n: int, seed: int):
    """``m x n`` matrix with orthonormal rows from a seeded QR factorisation."""
    G = make_rng(seed).standard_normal((n, m))
    Q, R = np.linalg.qr(G)
    Q = Q * np.where(np.diag(R) < 0, -1.0, 1.0)
    return Q.T.copy()


def parse_matrix(text: str, m: int, n: int):
    text = text.strip()
    if text.startswith("random_orthogonal"):
        _, _, seed = text.partition(":")
        try:
            return random_orthogonal(m, n, int(seed or 0))
        except ValueError:
            raise ConfigError(f"bad random_orthogonal seed {seed!r}") from None
    try:
        values = [float(v) for v in text.replace(",", " ").replace(";", " ").split()]
    except ValueError:
        raise ConfigError(f"A must be numbers or random_orthogonal:SEED, got {text!r}") from None
    if len(values) != m * n:
        raise ConfigError(f"A has {len(values)} entries, expected m*n = {m * n}")
    return np.array(values).reshape(m, n)


def read_matrix_file(path):
    """Whitespace-separated rows, one matrix row per line."""
    with open(path) as fh:
        rows = [[float(v) for v in ln.replace(",", " ").split()] for ln in fh if ln.strip() and not ln.startswith("#")]
    if not rows or len({len(r) for r in rows}) != 1:
        raise ConfigError(f"{path}: matrix rows must be non-empty and equally long")
    return np.array(rows)


class Section:
    """Typed getters over one config section that name the key on failure."""

    def __init__(self, parser, name, source):
        self.name = name
        self.source = source
        self.items = dict(parser.items(name)) if parser.has_section(name) else {}

    def has(self, key):
        value = self.items.get(key.lower())
        return value is not None and value.strip() != ""

    def raw(self, key, default=None):
        if not self.has(key):
            if default is None:
                raise ConfigError(f"{self.source}: missing key '{key}' in section [{self.name}]")
            return default
        return self.items[key.lower()].strip()

    def _typed(self, key, cast, default):
        value = self.raw(key, None if default is None else str(default))
        try:
            return cast(value)
        except ValueError:
            raise ConfigError(f"{self.source}: key '{key}' in [{self.name}] has invalid value {value!r}") from None

    def int(self, key, default=None):
        return self._typed(key, int, default)

    def float(self, key, default=None):
        return self._typed(key, float, default)

    def str(self, key, default=None):
        return self.raw(key, default)

    def path(self, key, base: Path):
        return base / os.path.expandvars(self.raw(key))


def read_config(path):
    path = Path(path)
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str.lower
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parser


@dataclass(frozen=True, eq=False)
class Experiment:
    spec: ODENetSpec
    optimizer: OptimizerConfig
    init: str
    train: Dataset
    val: Optional[Dataset]


def _check_required(parser, source):
    for section, keys in REQUIRED.items():
        sec = Section(parser, section, source)
        for key in keys:
            sec.raw(key)


def load_data(sec: Section, base: Path, seed: int):
    """``(train, validation)`` for the configured dataset."""
    name = sec.str("dataset")
    if name == "sin":
        train = gen_sinusoid(sec.int("train_size", SINUSOID_TRAIN_SIZE))
        return train, gen_sinusoid(sec.int("val_size", SINUSOID_VAL_SIZE))
    if name == "circle":
        data_seed = sec.int("data_seed", seed)
        train = gen_circle(sec.int("train_size", CIRCLE_TRAIN_SIZE), data_seed)
        # validation points come from an independent stream
        return train, gen_circle(sec.int("val_size", CIRCLE_VAL_SIZE), data_seed + 1)
    limit = sec.int("limit", 0) or None
    if name == "mnist":
        full = load_mnist_idx(sec.path("images", base), sec.path("labels", base), limit)
    elif name.startswith("csv:"):
        target = base / os.path.expandvars(name[4:])
        full = load_csv_dataset(target, sec.str("task", "regression"))
        if limit:
            full = full.subset(np.arange(min(limit, len(full))))
    else:
        raise ConfigError(f"unknown dataset {name!r}; expected sin, circle, mnist or csv:PATH")
    fraction = sec.float("split_fraction", 0.8)
    if fraction >= 1.0:
        return full, None
    return split(full, fraction, sec.int("split_seed", seed))


def load_experiment(path) -> Experiment:
    path = Path(path)
    source = str(path)
    parser = read_config(path)
    _check_required(parser, source)
    model = Section(parser, "model", source)
    train = Section(parser, "train", source)
    data = Section(parser, "data", source)
    base = path.parent

    try:
        opt = OptimizerConfig(
            tau=train.float("tau"),
            tau1=train.float("tau1", 0.0),
            eta_stop=train.float("eta_stop", 0.0),
            max_epochs=train.int("max_epochs"),
            batch_size=train.int("batch_size"),
            seed=train.int("seed", 0),
            method=train.str("method", "sgd"),
            scheme=train.str("scheme", "exact"),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{source}: [train] {exc}") from None
    init = train.str("init", "zeros")
    if init not in ("zeros", "eps"):
        raise ConfigError(f"{source}: key 'init' must be zeros or eps, got {init!r}")

    try:
        trainset, valset = load_data(data, base, opt.seed)
    except (OSError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{source}: cannot load data: {exc}") from None
    if data.has("task") and data.str("task") != trainset.task:
        raise ConfigError(f"{source}: task {data.str('task')!r} does not match dataset task {trainset.task!r}")

    n = model.int("n", trainset.n)
    m = model.int("m", trainset.m)
    if (n, m) != (trainset.n, trainset.m):
        raise ConfigError(f"{source}: model is {n} -> {m} but the data is {trainset.n} -> {trainset.m}")
    try:
        A = parse_matrix(model.str("A", f"random_orthogonal:{opt.seed}"), m, n)
        spec = ODENetSpec(
            n, m, A, model.float("T"), model.int("L"), ActivationKind.parse(model.str("activation", "tanh"))
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{source}: [model] {exc}") from None
    return Experiment(spec, opt, init, trainset, valset)


@dataclass(frozen=True)
class GradcheckConfig:
    n: int
    m: int
    T: float
    L: int
    activation: ActivationKind
    A: Optional[str]
    K: int
    seed: int
    step: float
    rel_tol: float
    abs_tol: float
    scale: float
    scheme: str


def load_gradcheck(path) -> GradcheckConfig:
    source = str(path)
    parser = read_config(path)
    model = Section(parser, "model", source)
    gc = Section(parser, "gradcheck", source)
    try:
        return GradcheckConfig(
            n=model.int("n"),
            m=model.int("m"),
            T=model.float("T"),
            L=model.int("L"),
            activation=ActivationKind.parse(model.str("activation", "tanh")),
            A=model.str("A") if model.has("A") else None,
            K=gc.int("K", 3),
            seed=gc.int("seed"),
            step=gc.float("step", 1e-5),
            rel_tol=gc.float("rel_tol", 1e-4),
            abs_tol=gc.float("abs_tol", 1e-7),
            scale=gc.float("scale", 0.5),
            scheme=gc.str("scheme", "exact"),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{source}: {exc}") from None
