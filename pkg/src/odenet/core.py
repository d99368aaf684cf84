"""Architecture description and parameter containers for the ODENet.

The network is the coupled system

    x' = beta(t) x + gamma(t),        x(0) = xi
    y' = alpha(t) * sigma(A x),       y(0) = 0

with output y(T).  Time is discretised on L uniform Euler steps of size
h = T / L and every design parameter is sampled at the L + 1 grid points
t_l = l h, including t_L = T even though the forward recursion never reads
index L.  Keeping the extra sample makes gradients index-aligned with the
parameters they differentiate.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .activations import ActivationKind, as_activation
from .exceptions import RankError, ShapeError
from .linalg import DEFAULT_RANK_TOL, check_rank

FAMILIES = ("alpha", "beta", "gamma")


def _frozen(array, name, shape=None):
    out = np.array(array, dtype=np.float64)
    if shape is not None and out.shape != shape:
        raise ShapeError(f"{name} has shape {out.shape}, expected {shape}")
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class ODENetSpec:
    """Static architecture: dimensions, readout matrix ``A``, horizon and grid."""

    n: int
    m: int
    A: np.ndarray
    T: float
    L: int
    activation: ActivationKind = field(default_factory=lambda: ActivationKind("tanh"))
    rank_tol: float = DEFAULT_RANK_TOL

    def __post_init__(self):
        n, m, L = int(self.n), int(self.m), int(self.L)
        if n < 1 or m < 1:
            raise ShapeError("n and m must be positive")
        if m > n:
            raise ShapeError(f"output dimension m={m} exceeds input dimension n={n}")
        if L < 1:
            raise ValueError("L must be at least 1")
        T = float(self.T)
        if not (T > 0 and np.isfinite(T)):
            raise ValueError("T must be positive and finite")
        A = _frozen(np.atleast_2d(self.A), "A", (m, n))
        if not np.all(np.isfinite(A)):
            raise ValueError("A has non-finite entries")
        rank = check_rank(A, self.rank_tol)
        if rank != m:
            raise RankError(f"A must have rank m={m}, numerical rank is {rank}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "activation", as_activation(self.activation))

    @property
    def h(self) -> float:
        return self.T / self.L

    @property
    def times(self):
        return np.arange(self.L + 1) * self.h

    def with_steps(self, L: int) -> "ODENetSpec":
        return replace(self, L=L)

    def __repr__(self):
        return (
            f"ODENetSpec(n={self.n}, m={self.m}, T={self.T}, L={self.L}, "
            f"activation={self.activation})"
        )


@dataclass(frozen=True, eq=False)
class ParamPath:
    """Design parameters sampled on the time grid.

    ``alpha`` is ``(L+1, m)``, ``beta`` is ``(L+1, n, n)`` and ``gamma`` is
    ``(L+1, n)``.  Arrays are read-only; derive new paths instead of mutating.
    """

    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        alpha = np.array(self.alpha, dtype=np.float64)
        beta = np.array(self.beta, dtype=np.float64)
        gamma = np.array(self.gamma, dtype=np.float64)
        if alpha.ndim != 2 or beta.ndim != 3 or gamma.ndim != 2:
            raise ShapeError("alpha, gamma must be 2-D and beta 3-D (leading axis = grid index)")
        steps = alpha.shape[0]
        n = gamma.shape[1]
        if beta.shape != (steps, n, n) or gamma.shape[0] != steps:
            raise ShapeError(
                f"inconsistent parameter shapes alpha={alpha.shape}, beta={beta.shape}, gamma={gamma.shape}"
            )
        for name, arr in (("alpha", alpha), ("beta", beta), ("gamma", gamma)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite entries")
            object.__setattr__(self, name, _frozen(arr, name))

    @property
    def L(self) -> int:
        return self.alpha.shape[0] - 1

    @property
    def n(self) -> int:
        return self.gamma.shape[1]

    @property
    def m(self) -> int:
        return self.alpha.shape[1]

    @classmethod
    def zeros(cls, spec: ODENetSpec) -> "ParamPath":
        return cls.constant(spec, 0.0)

    @classmethod
    def constant(cls, spec: ODENetSpec, value: float) -> "ParamPath":
        L, n, m = spec.L, spec.n, spec.m
        return cls(
            np.full((L + 1, m), value),
            np.full((L + 1, n, n), value),
            np.full((L + 1, n), value),
        )

    @classmethod
    def random(cls, spec: ODENetSpec, rng, scale: float = 1.0) -> "ParamPath":
        L, n, m = spec.L, spec.n, spec.m
        return cls(
            scale * rng.standard_normal((L + 1, m)),
            scale * rng.standard_normal((L + 1, n, n)),
            scale * rng.standard_normal((L + 1, n)),
        )

    def check(self, spec: ODENetSpec) -> None:
        expected = (spec.L + 1, spec.m, spec.n)
        if (self.L + 1, self.m, self.n) != expected:
            raise ShapeError(
                f"parameters (L={self.L}, m={self.m}, n={self.n}) do not match "
                f"spec (L={spec.L}, m={spec.m}, n={spec.n})"
            )

    def arrays(self):
        return self.alpha, self.beta, self.gamma

    def replace(self, **changes) -> "ParamPath":
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class Gradients:
    """Gradients with respect to alpha, beta, gamma; same layout as ParamPath.

    These are L^2(0, T) gradients: the directional derivative of the loss
    along a perturbation ``eta`` is approximately ``h * sum_l <G_l, eta_l>``,
    so the derivative with respect to a single grid sample equals ``h * G_l``.
    """

    g_alpha: np.ndarray
    g_beta: np.ndarray
    g_gamma: np.ndarray

    def __post_init__(self):
        for name in ("g_alpha", "g_beta", "g_gamma"):
            object.__setattr__(self, name, _frozen(getattr(self, name), name))
        steps = self.g_alpha.shape[0]
        if self.g_beta.shape[0] != steps or self.g_gamma.shape[0] != steps:
            raise ShapeError("gradient families have different lengths")

    @property
    def L(self) -> int:
        return self.g_alpha.shape[0] - 1

    @classmethod
    def zeros_like(cls, params: ParamPath) -> "Gradients":
        return cls(*(np.zeros_like(a) for a in params.arrays()))

    def arrays(self):
        return self.g_alpha, self.g_beta, self.g_gamma

    def scaled(self, factor: float) -> "Gradients":
        return Gradients(*(factor * a for a in self.arrays()))

    def check(self, params: ParamPath) -> None:
        for fam, g, p in zip(FAMILIES, self.arrays(), params.arrays()):
            if g.shape != p.shape:
                raise ShapeError(f"gradient for {fam} has shape {g.shape}, parameters have {p.shape}")
