"""Scalar activation functions, applied componentwise, with hand-coded derivatives.

Derivatives at non-differentiable points follow the usual subgradient choice:
``relu'(0) = 0``, the unit step has derivative 0 everywhere, and the same
holds for ``truncated_power`` with ``k = 0``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

_SQRT_2PI = math.sqrt(2.0 * math.pi)

_NAMES = (
    "sigmoid",
    "tanh",
    "relu",
    "softplus",
    "truncated_power",
    "unit_step",
    "gaussian_rbf",
    "identity",
)

# One-byte codes used in checkpoint files. truncated_power(k) is stored as
# 16 + k so that k fits alongside the tag; bit 7 is reserved for the model kind.
_CODES = {
    "sigmoid": 1,
    "tanh": 2,
    "relu": 3,
    "softplus": 4,
    "unit_step": 5,
    "gaussian_rbf": 6,
    "identity": 7,
}
_TRUNCATED_POWER_BASE = 16
_MAX_POWER = 127 - _TRUNCATED_POWER_BASE


def _sigmoid(x):
    # exp of a non-positive argument never overflows
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


@dataclass(frozen=True)
class ActivationKind:
    """A scalar activation ``sigma`` together with its derivative.

    ``power`` is only meaningful for ``truncated_power``.
    """

    name: str
    power: int = 0

    def __post_init__(self):
        if self.name not in _NAMES:
            raise ValueError(f"unknown activation {self.name!r}; expected one of {', '.join(_NAMES)}")
        if self.name == "truncated_power":
            if not isinstance(self.power, (int, np.integer)) or not 0 <= self.power <= _MAX_POWER:
                raise ValueError(f"truncated_power exponent must be an integer in [0, {_MAX_POWER}]")
        elif self.power != 0:
            raise ValueError(f"activation {self.name!r} takes no exponent")

    @classmethod
    def parse(cls, text: str) -> "ActivationKind":
        """Accepts ``tanh``, ``truncated_power:3`` or ``truncated_power(3)``."""
        text = text.strip().lower()
        match = re.fullmatch(r"truncated_power\s*[:(]\s*(\d+)\s*\)?", text)
        if match:
            return cls("truncated_power", int(match.group(1)))
        return cls(text)

    def __str__(self):
        if self.name == "truncated_power":
            return f"truncated_power:{self.power}"
        return self.name

    @property
    def code(self) -> int:
        if self.name == "truncated_power":
            return _TRUNCATED_POWER_BASE + self.power
        return _CODES[self.name]

    @classmethod
    def from_code(cls, code: int) -> "ActivationKind":
        if _TRUNCATED_POWER_BASE <= code <= _TRUNCATED_POWER_BASE + _MAX_POWER:
            return cls("truncated_power", code - _TRUNCATED_POWER_BASE)
        for name, value in _CODES.items():
            if value == code:
                return cls(name)
        raise ValueError(f"unknown activation code {code}")

    @property
    def smooth(self) -> bool:
        """True when sigma is continuously differentiable everywhere."""
        if self.name == "truncated_power":
            return self.power >= 2
        return self.name in ("sigmoid", "tanh", "softplus", "gaussian_rbf", "identity")

    @property
    def has_uap(self) -> bool:
        # polynomials lack the universal approximation property
        return self.name != "identity"

    def __call__(self, x):
        return self.eval(x)

    def eval(self, x):
        x = np.asarray(x, dtype=np.float64)
        name = self.name
        if name == "sigmoid":
            return _sigmoid(x)
        if name == "tanh":
            return np.tanh(x)
        if name == "relu":
            return np.maximum(x, 0.0)
        if name == "softplus":
            return np.logaddexp(0.0, x)
        if name == "unit_step":
            return np.where(x > 0, 1.0, 0.0)
        if name == "truncated_power":
            if self.power == 0:
                return np.where(x > 0, 1.0, 0.0)
            return np.where(x > 0, np.maximum(x, 0.0) ** self.power, 0.0)
        if name == "gaussian_rbf":
            with np.errstate(over="ignore"):
                return np.exp(-0.5 * x * x) / _SQRT_2PI
        return x.copy()

    def deriv(self, x):
        x = np.asarray(x, dtype=np.float64)
        name = self.name
        if name == "sigmoid":
            s = _sigmoid(x)
            return s * (1.0 - s)
        if name == "tanh":
            t = np.tanh(x)
            return 1.0 - t * t
        if name == "relu":
            return np.where(x > 0, 1.0, 0.0)
        if name == "softplus":
            return _sigmoid(x)
        if name == "unit_step":
            return np.zeros_like(x)
        if name == "truncated_power":
            k = self.power
            if k == 0:
                return np.zeros_like(x)
            if k == 1:
                return np.where(x > 0, 1.0, 0.0)
            return np.where(x > 0, k * np.maximum(x, 0.0) ** (k - 1), 0.0)
        if name == "gaussian_rbf":
            with np.errstate(over="ignore", invalid="ignore"):
                out = -x * np.exp(-0.5 * x * x) / _SQRT_2PI
            return np.where(np.isfinite(out), out, 0.0)
        return np.ones_like(x)


def as_activation(value) -> ActivationKind:
    if isinstance(value, ActivationKind):
        return value
    return ActivationKind.parse(str(value))


def activation_eval(kind, x: float) -> float:
    """sigma(x) for a single finite real ``x``."""
    return float(as_activation(kind).eval(x))


def activation_deriv(kind, x: float) -> float:
    return float(as_activation(kind).deriv(x))
