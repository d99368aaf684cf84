"""Binary checkpoint files for ODENet and ResNet parameters.

Layout (little-endian)::

    b"ODNT"  u32 version=1  u32 n  u32 m  u32 L  f64 T  u8 tag
    A (m*n f64, row-major)  alpha  beta (row-major per step)  gamma

The low seven bits of ``tag`` hold the activation code; bit 7 is set for
ResNet files.  ODENet files carry L+1 samples per family, ResNet files L
layers and T = 0.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .activations import ActivationKind
from .core import ODENetSpec, ParamPath
from .exceptions import CheckpointError
from .resnet import ResNetParams

MAGIC = b"ODNT"
VERSION = 1
RESNET_BIT = 0x80
_HEADER = struct.Struct("<4sIIIIdB")


@dataclass(frozen=True, eq=False)
class Checkpoint:
    kind: str  # "odenet" or "resnet"
    spec: Optional[ODENetSpec] = None
    params: Optional[ParamPath] = None
    resnet: Optional[ResNetParams] = None


def _pack(*arrays) -> bytes:
    return b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays)


def encode(model: Union[ResNetParams, ODENetSpec], params: Optional[ParamPath] = None) -> bytes:
    if isinstance(model, ResNetParams):
        header = _HEADER.pack(MAGIC, VERSION, model.n, model.m, model.L, 0.0, model.activation.code | RESNET_BIT)
        return header + _pack(model.A, model.alpha, model.beta, model.gamma)
    if params is None:
        raise ValueError("an ODENet checkpoint needs its parameters")
    params.check(model)
    header = _HEADER.pack(MAGIC, VERSION, model.n, model.m, model.L, model.T, model.activation.code)
    return header + _pack(model.A, params.alpha, params.beta, params.gamma)


def decode(raw: bytes) -> Checkpoint:
    if len(raw) < 4 or raw[:4] != MAGIC:
        raise CheckpointError("bad checkpoint magic")
    if len(raw) < _HEADER.size:
        raise CheckpointError("checkpoint header is truncated")
    _, version, n, m, L, T, tag = _HEADER.unpack_from(raw)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    resnet = bool(tag & RESNET_BIT)
    try:
        act = ActivationKind.from_code(tag & ~RESNET_BIT)
    except ValueError as exc:
        raise CheckpointError(str(exc)) from None
    steps = L if resnet else L + 1
    sizes = (m * n, steps * m, steps * n * n, steps * n)
    need = _HEADER.size + 8 * sum(sizes)
    if len(raw) != need:
        raise CheckpointError(f"checkpoint holds {len(raw)} bytes, header implies {need}")
    flat = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).astype(np.float64)
    parts = np.split(flat, np.cumsum(sizes)[:-1])
    A = parts[0].reshape(m, n)
    alpha = parts[1].reshape(steps, m)
    beta = parts[2].reshape(steps, n, n)
    gamma = parts[3].reshape(steps, n)
    try:
        if resnet:
            return Checkpoint("resnet", resnet=ResNetParams(A, alpha, beta, gamma, act))
        spec = ODENetSpec(n, m, A, T, L, act)
        return Checkpoint("odenet", spec=spec, params=ParamPath(alpha, beta, gamma))
    except ValueError as exc:
        raise CheckpointError(f"invalid checkpoint contents: {exc}") from None


def save_checkpoint(path, model, params=None) -> None:
    with open(path, "wb") as fh:
        fh.write(encode(model, params))


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        return decode(fh.read())
