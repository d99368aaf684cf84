"""Backward adjoint recursion and loss gradients for the ODENet.

Loss convention: the minibatch loss is the *halved* mean squared error

    e = 1 / (2 B) * sum_k |y_L^(k) - F(xi^(k))|^2,

for which the gradient formulas below are exact.

Two backward schemes are available.

``"full"`` runs the recursion over all steps l = L .. 1::

    lam_L = 0
    lam_{l-1} = lam_l + h beta_l^T lam_l + (h / B) A^T (r * alpha_l * sigma'(A x_l))

``"exact"`` (the default) drops the l = L step, whose source term involves
alpha_L and x_L even though y_L depends on neither.  What remains is the
exact transpose of :func:`odenet.forward.simulate`, so ``h * G`` equals the
derivative of the discrete loss with respect to each grid sample up to
rounding.  The two schemes differ by O(h).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import Gradients, ODENetSpec, ParamPath
from .exceptions import DivergenceError, ShapeError
from .forward import Trajectory, batched_matvec, check_finite, simulate

SCHEMES = ("exact", "full")


def _check_scheme(scheme):
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {SCHEMES}, got {scheme!r}")


@dataclass(frozen=True, eq=False)
class AdjointPath:
    """Adjoint states ``lam`` of one sample, shape ``(L+1, n)``."""

    lam: np.ndarray


def minibatch_loss(predictions, targets) -> float:
    """Halved mean squared error ``sum |pred - target|^2 / (2 B)``."""
    P = np.atleast_2d(np.asarray(predictions, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if np.asarray(predictions).ndim == 1 and np.asarray(targets).ndim == 1 and P.shape[0] == 1:
        # a flat pair of equal-length lists means scalar outputs, one per sample
        P, Y = P.T, Y.T
    if P.shape != Y.shape:
        raise ShapeError(f"predictions {P.shape} and targets {Y.shape} differ")
    if P.shape[0] == 0:
        raise ValueError("minibatch_loss needs at least one sample")
    diff = P - Y
    return float(np.sum(diff * diff) / (2.0 * P.shape[0]))


def adjoint_batch(spec: ODENetSpec, params: ParamPath, xs, residuals, batch_size, scheme="exact", zs=None):
    """Adjoint states for a whole batch; returns ``(L+1, B, n)``.

    ``xs`` is the ``(L+1, B, n)`` state array from :func:`simulate`,
    ``residuals`` is ``(B, m)`` holding ``y_L - F(xi)`` and ``zs`` optionally
    supplies the cached pre-activations ``A x_l``.
    """
    _check_scheme(scheme)
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    L, h, A, act = spec.L, spec.h, spec.A, spec.activation
    R = np.asarray(residuals, dtype=np.float64)
    if xs.ndim != 3 or xs.shape[0] != L + 1 or xs.shape[2] != spec.n:
        raise ShapeError(f"trajectory shape {xs.shape} does not match spec")
    if R.shape != (xs.shape[1], spec.m):
        raise ShapeError(f"residuals have shape {R.shape}, expected {(xs.shape[1], spec.m)}")
    if zs is None:
        zs = np.einsum("ij,lbj->lbi", A, xs)
    # source_l = (h / B) A^T (r * alpha_l * sigma'(A x_l)), all l at once
    weights = (h / batch_size) * (R[None, :, :] * params.alpha[:, None, :] * act.deriv(zs))
    sources = np.einsum("lbi,ij->lbj", weights, A)
    lam = np.empty_like(xs)
    lam[L] = 0.0
    top = L if scheme == "full" else L - 1
    if scheme == "exact":
        lam[L - 1] = 0.0
    beta_t = np.swapaxes(params.beta, 1, 2)
    with np.errstate(over="ignore", invalid="ignore"):
        for l in range(top, 0, -1):
            cur = lam[l]
            lam[l - 1] = cur + h * batched_matvec(beta_t[l], cur) + sources[l]
    check_finite(lam, None, "adjoint")
    return lam


def adjoint_backward(
    spec: ODENetSpec,
    params: ParamPath,
    traj: Trajectory,
    residual,
    batch_size: int,
    scheme: str = "exact",
) -> AdjointPath:
    params.check(spec)
    residual = np.asarray(residual, dtype=np.float64).reshape(-1)
    if residual.shape != (spec.m,):
        raise ShapeError(f"residual must have length {spec.m}")
    xs = np.asarray(traj.x)[:, None, :]
    lam = adjoint_batch(spec, params, xs, residual[None, :], batch_size, scheme)
    return AdjointPath(lam[:, 0, :])


def gradients_from_states(spec, params, xs, lam, residuals, batch_size, scheme="exact", zs=None) -> Gradients:
    """Gradient assembly on stacked arrays; samples are reduced in index order."""
    if zs is None:
        zs = np.einsum("ij,lbj->lbi", spec.A, xs)
    residuals = np.asarray(residuals, dtype=np.float64)
    g_alpha = np.einsum("bi,lbi->li", residuals, spec.activation.eval(zs)) / batch_size
    if scheme == "exact":
        g_alpha[spec.L] = 0.0
    g_beta = np.einsum("lki,lkj->lij", lam, xs)
    g_gamma = lam.sum(axis=1)
    return Gradients(g_alpha, g_beta, g_gamma)


def assemble_gradients(
    spec: ODENetSpec,
    params: ParamPath,
    trajs: Sequence[Trajectory],
    adjoints: Sequence[AdjointPath],
    residuals,
    batch_size: int,
    scheme: str = "exact",
) -> Gradients:
    _check_scheme(scheme)
    residuals = np.asarray(residuals, dtype=np.float64).reshape(len(residuals), -1)
    if not (len(trajs) == len(adjoints) == residuals.shape[0]):
        raise ShapeError("trajectories, adjoints and residuals must have the same length")
    if len(trajs) == 0:
        return Gradients.zeros_like(params)
    xs = np.stack([t.x for t in trajs], axis=1)
    lam = np.stack([a.lam for a in adjoints], axis=1)
    return gradients_from_states(spec, params, xs, lam, residuals, batch_size, scheme)


def loss_and_gradients(spec: ODENetSpec, params: ParamPath, X, F, scheme: str = "exact"):
    """Forward, adjoint and gradient assembly over one minibatch.

    Returns ``(loss, gradients, predictions)``; the loss is the halved one.
    """
    xs, ys, zs = simulate(spec, params, X, return_preactivations=True)
    F = np.asarray(F, dtype=np.float64).reshape(ys.shape[1], spec.m)
    residuals = ys[-1] - F
    B = xs.shape[1]
    lam = adjoint_batch(spec, params, xs, residuals, B, scheme, zs)
    grads = gradients_from_states(spec, params, xs, lam, residuals, B, scheme, zs)
    return minibatch_loss(ys[-1], F), grads, ys[-1]


@dataclass(frozen=True, eq=False)
class GeneralODEProblem:
    """Generic model ``x' = f(t, x, omega(t))``, ``x(0) = Q xi``, output ``P x(T)``.

    ``jac_x`` returns the ``(N, N)`` Jacobian of ``f`` in ``x`` and
    ``jac_omega`` the ``(N, r)`` Jacobian in ``omega``; ``omega`` holds the
    parameter samples on the grid, shape ``(L+1, r)``.
    """

    N: int
    r: int
    f: Callable
    jac_x: Callable
    jac_omega: Callable
    P: np.ndarray
    Q: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.P, dtype=np.float64))
        Q = np.atleast_2d(np.asarray(self.Q, dtype=np.float64))
        omega = np.asarray(self.omega, dtype=np.float64)
        if P.shape[1] != self.N or Q.shape[0] != self.N:
            raise ShapeError(f"P must be m x {self.N} and Q must be {self.N} x n")
        if omega.ndim != 2 or omega.shape[1] != self.r:
            raise ShapeError(f"omega must be (L+1, {self.r}), got {omega.shape}")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "omega", omega)


def _call_checked(fn, name, shape, *args):
    out = np.asarray(fn(*args), dtype=np.float64)
    if out.shape != shape:
        raise ShapeError(f"{name} returned shape {out.shape}, expected {shape}")
    return out


def general_adjoint_gradient(problem: GeneralODEProblem, xi, target, T: float, L: int, scheme="exact"):
    """Gradient samples ``g_l = (d f / d omega)^T lam`` for the loss ``|P x_L - target|^2 / 2``.

    Returns an ``(L+1, r)`` array; like :class:`Gradients` these are L^2
    densities, so the derivative with respect to ``omega_l`` is ``h * g_l``.
    """
    _check_scheme(scheme)
    if problem.omega.shape[0] != L + 1:
        raise ShapeError(f"omega has {problem.omega.shape[0]} samples, expected L+1={L + 1}")
    N, r = problem.N, problem.r
    h = T / L
    xs = np.empty((L + 1, N))
    xs[0] = problem.Q @ np.asarray(xi, dtype=np.float64)
    for l in range(L):
        step = _call_checked(problem.f, "f", (N,), l * h, xs[l], problem.omega[l])
        xs[l + 1] = xs[l] + h * step
        if not np.all(np.abs(xs[l + 1]) <= 1e100):
            raise DivergenceError("state diverged", step=l + 1)
    terminal = problem.P.T @ (problem.P @ xs[L] - np.asarray(target, dtype=np.float64))
    grads = np.zeros((L + 1, r))
    lam = terminal
    if scheme == "full":
        for l in range(L, -1, -1):
            t = l * h
            grads[l] = _call_checked(problem.jac_omega, "jac_omega", (N, r), t, xs[l], problem.omega[l]).T @ lam
            if l > 0:
                J = _call_checked(problem.jac_x, "jac_x", (N, N), t, xs[l], problem.omega[l])
                lam = lam + h * (J.T @ lam)
    else:
        for l in range(L - 1, -1, -1):
            t = l * h
            grads[l] = _call_checked(problem.jac_omega, "jac_omega", (N, r), t, xs[l], problem.omega[l]).T @ lam
            J = _call_checked(problem.jac_x, "jac_x", (N, N), t, xs[l], problem.omega[l])
            lam = lam + h * (J.T @ lam)
    if not np.all(np.isfinite(grads)):
        raise DivergenceError("adjoint diverged")
    return grads


def pack_parameters(params: ParamPath):
    """Stack ``(alpha_l, vec(beta_l), gamma_l)`` into an ``(L+1, m + n^2 + n)`` array."""
    steps = params.L + 1
    return np.concatenate(
        [params.alpha, params.beta.reshape(steps, -1), params.gamma], axis=1
    )


def unpack_gradient(packed, n: int, m: int) -> Gradients:
    packed = np.asarray(packed)
    steps = packed.shape[0]
    return Gradients(
        packed[:, :m],
        packed[:, m:m + n * n].reshape(steps, n, n),
        packed[:, m + n * n:],
    )


def odenet_as_general(spec: ODENetSpec, params: ParamPath) -> GeneralODEProblem:
    """Express the ODENet as a generic problem on the stacked state ``(x, y)``."""
    n, m, A, act = spec.n, spec.m, spec.A, spec.activation
    N = n + m
    r = m + n * n + n

    def split(w):
        return w[:m], w[m:m + n * n].reshape(n, n), w[m + n * n:]

    def f(t, state, w):
        alpha, beta, gamma = split(w)
        x = state[:n]
        return np.concatenate([beta @ x + gamma, alpha * act.eval(A @ x)])

    def jac_x(t, state, w):
        alpha, beta, _ = split(w)
        x = state[:n]
        J = np.zeros((N, N))
        J[:n, :n] = beta
        J[n:, :n] = (alpha * act.deriv(A @ x))[:, None] * A
        return J

    def jac_omega(t, state, w):
        x = state[:n]
        J = np.zeros((N, r))
        J[n:, :m] = np.diag(act.eval(A @ x))
        for i in range(n):
            J[i, m + i * n:m + (i + 1) * n] = x
        J[:n, m + n * n:] = np.eye(n)
        return J

    P = np.hstack([np.zeros((m, n)), np.eye(m)])
    Q = np.vstack([np.eye(n), np.zeros((m, n))])
    return GeneralODEProblem(N, r, f, jac_x, jac_omega, P, Q, pack_parameters(params))
