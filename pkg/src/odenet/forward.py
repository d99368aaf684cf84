"""Explicit-Euler simulation of the ODENet.

For l = 0 .. L-1::

    x_{l+1} = x_l + h (beta_l x_l + gamma_l)
    y_{l+1} = y_l + h alpha_l * sigma(A x_l)

The activation is evaluated at the left endpoint x_l, so the backward pass in
:mod:`odenet.adjoint` is the exact transpose of this recursion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ODENetSpec, ParamPath
from .exceptions import DivergenceError, ShapeError

DIVERGENCE_LIMIT = 1e100

# einsum reduces every row with the same loop regardless of how many rows are
# stacked, which keeps batched results bitwise equal to solo runs. BLAS matmul
# does not, but above this width it is an order of magnitude faster.
_BITWISE_MAX_DIM = 64


def batched_matvec(M, X):
    """Rows of ``X`` multiplied by ``M``, i.e. ``X @ M.T``."""
    if M.shape[1] <= _BITWISE_MAX_DIM:
        return np.einsum("ij,bj->bi", M, X)
    return X @ M.T


def check_finite(values, step, what="state"):
    """Raise DivergenceError naming the first offending sample.

    ``values`` is either one step ``(B, ...)`` or a stacked run ``(steps, B, ...)``
    when ``step`` is None; in the latter case the first bad step is located.
    """
    if step is None:
        peak = np.abs(values).reshape(values.shape[0], values.shape[1], -1).max(axis=2)
        bad = ~(peak <= DIVERGENCE_LIMIT)
        if bad.any():
            first = int(np.flatnonzero(bad.any(axis=1))[0])
            sample = int(np.flatnonzero(bad[first])[0])
            raise DivergenceError(f"{what} diverged", step=first, sample=sample)
        return
    peak = np.abs(values).reshape(values.shape[0], -1).max(axis=1)
    bad = ~(peak <= DIVERGENCE_LIMIT)
    if bad.any():
        sample = int(np.flatnonzero(bad)[0])
        raise DivergenceError(f"{what} diverged", step=step, sample=sample)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Forward states of one sample: ``x`` is ``(L+1, n)``, ``y`` is ``(L+1, m)``."""

    x: np.ndarray
    y: np.ndarray

    @property
    def output(self):
        return self.y[-1]


def _as_batch(spec, batch):
    X = np.asarray(batch, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1) if X.size else X.reshape(0, spec.n)
    if X.ndim != 2 or X.shape[1] != spec.n:
        raise ShapeError(f"inputs must have {spec.n} features, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("inputs contain non-finite values")
    return X


def simulate(spec: ODENetSpec, params: ParamPath, X, return_preactivations=False):
    """Vectorised Euler pass over a batch.

    Returns ``(xs, ys)`` with shapes ``(L+1, B, n)`` and ``(L+1, B, m)``, plus
    the pre-activations ``A x_l`` of shape ``(L+1, B, m)`` when requested.
    """
    params.check(spec)
    X = _as_batch(spec, X)
    L, h, A, act = spec.L, spec.h, spec.A, spec.activation
    B = X.shape[0]
    xs = np.empty((L + 1, B, spec.n))
    ys = np.empty((L + 1, B, spec.m))
    zs = np.empty((L + 1, B, spec.m))
    xs[0] = X
    ys[0] = 0.0
    alpha, beta, gamma = params.alpha, params.beta, params.gamma
    with np.errstate(over="ignore", invalid="ignore"):
        for l in range(L):
            x = xs[l]
            zs[l] = batched_matvec(A, x)
            ys[l + 1] = ys[l] + h * alpha[l] * act.eval(zs[l])
            xs[l + 1] = x + h * (batched_matvec(beta[l], x) + gamma[l])
        zs[L] = batched_matvec(A, xs[L])
    # overflow propagates as inf/nan, so one scan after the loop finds the first bad step
    check_finite(xs, None)
    check_finite(ys, None, "output")
    if return_preactivations:
        return xs, ys, zs
    return xs, ys


def euler_forward(spec: ODENetSpec, params: ParamPath, xi) -> Trajectory:
    xi = np.asarray(xi, dtype=np.float64)
    if xi.shape != (spec.n,):
        raise ShapeError(f"input must have shape ({spec.n},), got {xi.shape}")
    xs, ys = simulate(spec, params, xi[None, :])
    return Trajectory(xs[:, 0, :], ys[:, 0, :])


def batch_forward(spec: ODENetSpec, params: ParamPath, batch) -> list[Trajectory]:
    X = _as_batch(spec, batch)
    if X.shape[0] == 0:
        return []
    xs, ys = simulate(spec, params, X)
    return [Trajectory(xs[:, k, :].copy(), ys[:, k, :].copy()) for k in range(X.shape[0])]


def predict(spec: ODENetSpec, params: ParamPath, xi):
    """y(T) for one input (1-D) or a batch of inputs (2-D, one row each)."""
    xi = np.asarray(xi, dtype=np.float64)
    if xi.ndim == 1:
        return euler_forward(spec, params, xi).output
    if xi.shape[0] == 0:
        return np.empty((0, spec.m))
    _, ys = simulate(spec, params, xi)
    return ys[-1]
