"""Discrete residual network and its backpropagation.

The architecture is::

    x^(l) = x^(l-1) + beta^(l) x^(l-1) + gamma^(l)
    y^(l) = y^(l-1) + alpha^(l) * sigma(A x^(l))        l = 1 .. L

with x^(0) = xi and y^(0) = 0.  Unlike the ODENet discretisation the
activation reads the *updated* state x^(l).  Layers are numbered 1..L in the
formulas above and stored 0-based, so ``beta[k]`` is beta^(k+1).

Backpropagation is written for the generic residual recursion
``x^(l+1) = x^(l) + f_l(x^(l), omega_l)`` with output ``P x^(L)`` and input
``Q xi``; the architecture above is one instance of it on the stacked
state ``(x, y)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .activations import ActivationKind, as_activation
from .core import ODENetSpec, ParamPath
from .exceptions import DivergenceError, ShapeError
from .forward import DIVERGENCE_LIMIT, batched_matvec


@dataclass(frozen=True, eq=False)
class ResNetParams:
    """Per-layer weights: ``alpha (L, m)``, ``beta (L, n, n)``, ``gamma (L, n)``."""

    A: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    activation: ActivationKind = field(default_factory=lambda: ActivationKind("tanh"))

    def __post_init__(self):
        A = np.atleast_2d(np.array(self.A, dtype=np.float64))
        m, n = A.shape
        alpha = np.array(self.alpha, dtype=np.float64).reshape(-1, m)
        L = alpha.shape[0]
        beta = np.array(self.beta, dtype=np.float64).reshape(L, n, n) if L else np.zeros((0, n, n))
        gamma = np.array(self.gamma, dtype=np.float64).reshape(L, n) if L else np.zeros((0, n))
        for name, arr in (("A", A), ("alpha", alpha), ("beta", beta), ("gamma", gamma)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite entries")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "activation", as_activation(self.activation))

    @property
    def L(self) -> int:
        return self.alpha.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @classmethod
    def from_odenet(cls, spec: ODENetSpec, params: ParamPath) -> "ResNetParams":
        """Layer l+1 takes ``h * (alpha_l, beta_l, gamma_l)`` for l = 0 .. L-1."""
        h = spec.h
        L = spec.L
        return cls(spec.A, h * params.alpha[:L], h * params.beta[:L], h * params.gamma[:L], spec.activation)


def resnet_simulate(params: ResNetParams, X):
    """Batched forward pass; returns ``(xs, ys)`` of shapes ``(L+1, B, n)`` and ``(L+1, B, m)``."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != params.n:
        raise ShapeError(f"inputs must have {params.n} features, got shape {X.shape}")
    L, B = params.L, X.shape[0]
    act, A = params.activation, params.A
    xs = np.empty((L + 1, B, params.n))
    ys = np.empty((L + 1, B, params.m))
    xs[0] = X
    ys[0] = 0.0
    with np.errstate(over="ignore", invalid="ignore"):
        for l in range(L):
            x = xs[l]
            xs[l + 1] = x + batched_matvec(params.beta[l], x) + params.gamma[l]
            ys[l + 1] = ys[l] + params.alpha[l] * act.eval(batched_matvec(A, xs[l + 1]))
    for name, arr in (("state", xs), ("output", ys)):
        bad = ~(np.abs(arr).reshape(L + 1, B, -1).max(axis=2) <= DIVERGENCE_LIMIT)
        if bad.any():
            layer = int(np.flatnonzero(bad.any(axis=1))[0])
            raise DivergenceError(f"{name} diverged", step=layer, sample=int(np.flatnonzero(bad[layer])[0]))
    return xs, ys


def resnet_forward(params: ResNetParams, xi):
    """States ``x^(0..L)`` and outputs ``y^(0..L)`` for a single input."""
    xi = np.asarray(xi, dtype=np.float64)
    if xi.shape != (params.n,):
        raise ShapeError(f"input must have shape ({params.n},), got {xi.shape}")
    xs, ys = resnet_simulate(params, xi[None, :])
    return xs[:, 0, :], ys[:, 0, :]


def resnet_predict(params: ResNetParams, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        return resnet_forward(params, X)[1][-1]
    return resnet_simulate(params, X)[1][-1]


@dataclass(frozen=True, eq=False)
class GeneralResNetProblem:
    """``x^(l+1) = x^(l) + f(l, x^(l), omega[l])`` for l = 0 .. L-1.

    ``jac_x(l, x, w)`` is ``(N, N)`` and ``jac_omega(l, x, w)`` is
    ``(N, r_l)``; ``omega`` is a sequence of L per-layer vectors whose
    lengths may differ.
    """

    L: int
    f: Callable
    jac_x: Callable
    jac_omega: Callable
    P: np.ndarray
    Q: np.ndarray
    omega: tuple

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.P, dtype=np.float64))
        Q = np.atleast_2d(np.asarray(self.Q, dtype=np.float64))
        if P.shape[1] != Q.shape[0]:
            raise ShapeError(f"P is {P.shape} but Q is {Q.shape}; state dimensions differ")
        omega = tuple(np.asarray(w, dtype=np.float64).ravel() for w in self.omega)
        if len(omega) != self.L:
            raise ShapeError(f"omega has {len(omega)} layers, expected L={self.L}")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "omega", omega)

    @property
    def N(self) -> int:
        return self.P.shape[1]

    def replace_omega(self, omega) -> "GeneralResNetProblem":
        return GeneralResNetProblem(self.L, self.f, self.jac_x, self.jac_omega, self.P, self.Q, tuple(omega))


def _checked(fn, name, shape, *args):
    out = np.asarray(fn(*args), dtype=np.float64)
    if out.shape != shape:
        raise ShapeError(f"{name} returned shape {out.shape}, expected {shape}")
    return out


def _general_states(problem: GeneralResNetProblem, xi):
    N = problem.N
    xs = [problem.Q @ xi]
    for l in range(problem.L):
        step = _checked(problem.f, "f", (N,), l, xs[-1], problem.omega[l])
        xs.append(xs[-1] + step)
        if not np.all(np.abs(xs[-1]) <= DIVERGENCE_LIMIT):
            raise DivergenceError("state diverged", step=l + 1)
    return xs


def _as_pairs(xi, target):
    X = np.atleast_2d(np.asarray(xi, dtype=np.float64))
    F = np.atleast_2d(np.asarray(target, dtype=np.float64))
    if X.shape[0] != F.shape[0]:
        raise ShapeError(f"{X.shape[0]} inputs but {F.shape[0]} targets")
    return X, F


def general_resnet_loss(problem: GeneralResNetProblem, xi, target) -> float:
    """``1 / (2B) * sum_k |P x^(L,k) - F_k|^2``."""
    X, F = _as_pairs(xi, target)
    total = 0.0
    for x, f in zip(X, F):
        r = problem.P @ _general_states(problem, x)[-1] - f
        total += float(r @ r)
    return total / (2 * X.shape[0])


def resnet_backprop(problem: GeneralResNetProblem, xi, target, batch_size=None):
    """Per-layer gradients of :func:`general_resnet_loss`.

    ``xi`` and ``target`` may be single vectors or one row per sample.
    Returns a list of L arrays, one per ``omega[l]``.
    """
    X, F = _as_pairs(xi, target)
    B = X.shape[0] if batch_size is None else int(batch_size)
    if B < 1:
        raise ValueError("batch_size must be positive")
    N = problem.N
    grads = [np.zeros_like(w) for w in problem.omega]
    for x0, f in zip(X, F):
        xs = _general_states(problem, x0)
        lam = problem.P.T @ (problem.P @ xs[-1] - f) / B
        for l in range(problem.L - 1, -1, -1):
            r = problem.omega[l].size
            Jw = _checked(problem.jac_omega, "jac_omega", (N, r), l, xs[l], problem.omega[l])
            grads[l] += Jw.T @ lam
            Jx = _checked(problem.jac_x, "jac_x", (N, N), l, xs[l], problem.omega[l])
            lam = lam + Jx.T @ lam
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise DivergenceError("backpropagated gradient diverged")
    return grads


def pack_layers(params: ResNetParams):
    """Per-layer vectors ``(alpha^(l), vec(beta^(l)), gamma^(l))``."""
    return tuple(
        np.concatenate([params.alpha[l], params.beta[l].ravel(), params.gamma[l]]) for l in range(params.L)
    )


def unpack_layers(vectors, n: int, m: int):
    """Inverse of :func:`pack_layers`: ``(alpha, beta, gamma)`` arrays."""
    V = np.array(vectors, dtype=np.float64).reshape(len(vectors), m + n * n + n)
    L = V.shape[0]
    return V[:, :m], V[:, m:m + n * n].reshape(L, n, n), V[:, m + n * n:]


def resnet_as_general(params: ResNetParams) -> GeneralResNetProblem:
    """Stacked state ``(x, y)`` with ``f = (beta x + gamma, alpha * sigma(A((I + beta) x + gamma)))``."""
    n, m, A, act = params.n, params.m, params.A, params.activation
    N = n + m
    r = m + n * n + n
    eye = np.eye(n)

    def split(w):
        return w[:m], w[m:m + n * n].reshape(n, n), w[m + n * n:]

    def f(l, state, w):
        alpha, beta, gamma = split(w)
        x = state[:n]
        dx = beta @ x + gamma
        return np.concatenate([dx, alpha * act.eval(A @ (x + dx))])

    def jac_x(l, state, w):
        alpha, beta, gamma = split(w)
        x = state[:n]
        s = alpha * act.deriv(A @ (x + beta @ x + gamma))
        J = np.zeros((N, N))
        J[:n, :n] = beta
        J[n:, :n] = (s[:, None] * A) @ (eye + beta)
        return J

    def jac_omega(l, state, w):
        alpha, beta, gamma = split(w)
        x = state[:n]
        z = A @ (x + beta @ x + gamma)
        SA = (alpha * act.deriv(z))[:, None] * A
        J = np.zeros((N, r))
        J[n:, :m] = np.diag(act.eval(z))
        for i in range(n):
            J[i, m + i * n:m + (i + 1) * n] = x
            # d y / d beta_ij = (alpha * sigma'(z)) * A[:, i] x_j
            J[n:, m + i * n:m + (i + 1) * n] = np.outer(SA[:, i], x)
        J[:n, m + n * n:] = eye
        J[n:, m + n * n:] = SA
        return J

    P = np.hstack([np.zeros((m, n)), np.eye(m)])
    Q = np.vstack([eye, np.zeros((m, n))])
    return GeneralResNetProblem(params.L, f, jac_x, jac_omega, P, Q, pack_layers(params))


def resnet_gradients(params: ResNetParams, X, F):
    """``(g_alpha, g_beta, g_gamma)`` of the halved minibatch loss, per layer."""
    grads = resnet_backprop(resnet_as_general(params), X, F)
    if params.L == 0:
        return np.zeros((0, params.m)), np.zeros((0, params.n, params.n)), np.zeros((0, params.n))
    return unpack_layers(grads, params.n, params.m)
