"""Small dense linear-algebra helpers: rank, LU determinant, basis completion."""

from __future__ import annotations

import numpy as np

from .exceptions import ShapeError

DEFAULT_RANK_TOL = 1e-10


def hadamard(a, b):
    """Componentwise product of two equal-length vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"hadamard operands differ in shape: {a.shape} vs {b.shape}")
    return a * b


def check_rank(A, tol: float = DEFAULT_RANK_TOL) -> int:
    """Numerical rank by Gaussian elimination with partial pivoting.

    A pivot counts as zero when its magnitude is at most ``tol * ||A||_F``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    M = np.array(A, dtype=np.float64, ndmin=2)
    rows, cols = M.shape
    threshold = tol * np.linalg.norm(M)
    if threshold == 0.0:
        return 0
    rank = 0
    for col in range(cols):
        if rank == rows:
            break
        pivot = rank + int(np.argmax(np.abs(M[rank:, col])))
        if abs(M[pivot, col]) <= threshold:
            continue
        if pivot != rank:
            M[[rank, pivot]] = M[[pivot, rank]]
        factors = M[rank + 1:, col] / M[rank, col]
        M[rank + 1:, col:] -= np.outer(factors, M[rank, col:])
        rank += 1
    return rank


def lu_decompose(A):
    """Doolittle LU with partial pivoting.

    Returns ``(perm, LU, swaps)`` where ``LU`` packs the unit-lower and upper
    factors of ``A[perm]``. Singular matrices produce a zero on the diagonal
    rather than an error.
    """
    M = np.array(A, dtype=np.float64, ndmin=2)
    n, k = M.shape
    if n != k:
        raise ShapeError(f"LU needs a square matrix, got {M.shape}")
    perm = np.arange(n)
    swaps = 0
    for col in range(n):
        pivot = col + int(np.argmax(np.abs(M[col:, col])))
        if pivot != col:
            M[[col, pivot]] = M[[pivot, col]]
            perm[[col, pivot]] = perm[[pivot, col]]
            swaps += 1
        if M[col, col] == 0.0:
            continue
        M[col + 1:, col] /= M[col, col]
        M[col + 1:, col + 1:] -= np.outer(M[col + 1:, col], M[col, col + 1:])
    return perm, M, swaps


def lu_det(A) -> float:
    _, LU, swaps = lu_decompose(A)
    det = float(np.prod(np.diag(LU)))
    return -det if swaps % 2 else det


def complete_rows(rows, count: int):
    """Rows to append to ``rows`` so the stack reaches full row rank.

    Each new row is the standard basis vector with the largest component
    orthogonal to the span built so far (lowest index on ties).
    """
    R = np.array(rows, dtype=np.float64, ndmin=2)
    n = R.shape[1]
    basis = []
    for r in R:
        v = r.copy()
        for q in basis:
            v -= (q @ v) * q
        norm = np.linalg.norm(v)
        if norm == 0.0:
            raise ShapeError("rows to complete must be linearly independent")
        basis.append(v / norm)
    added = np.zeros((count, n))
    eye = np.eye(n)
    for i in range(count):
        rejections = eye.copy()
        for q in basis:
            rejections -= np.outer(rejections @ q, q)
        norms = np.linalg.norm(rejections, axis=1)
        best = int(np.flatnonzero(norms >= norms.max() - 1e-12)[0])
        added[i] = eye[best]
        basis.append(rejections[best] / norms[best])
    return added


def condition_estimate(M, iterations: int = 100) -> float:
    """Ratio of extreme singular values of a square matrix by power iteration.

    Inverse iteration (one solve per step) gives the smallest singular value.
    Returns ``inf`` for singular input.
    """
    M = np.asarray(M, dtype=np.float64)
    n = M.shape[0]
    G = M.T @ M
    v = np.ones(n) / np.sqrt(n)
    top = 0.0
    for _ in range(iterations):
        w = G @ v
        top = np.linalg.norm(w)
        if top == 0.0:
            return float("inf")
        v = w / top
    v = np.ones(n) / np.sqrt(n)
    bottom_inv = 0.0
    try:
        for _ in range(iterations):
            w = np.linalg.solve(G, v)
            bottom_inv = np.linalg.norm(w)
            v = w / bottom_inv
    except np.linalg.LinAlgError:
        return float("inf")
    return float(np.sqrt(top * bottom_inv))
