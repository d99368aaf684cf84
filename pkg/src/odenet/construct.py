"""Compile a shallow ridge network into exact ResNet weights or piecewise-constant ODENet paths.

A shallow network ``G(xi) = sum_l alpha_l * sigma(C_l xi + d_l)`` is rewritten
unit by unit as ``alpha_l * sigma(A (P_l xi + q_l))`` with ``A P_l = C_l``,
``A q_l = d_l`` and ``det P_l > 0``.  Consecutive (P, q) pairs then become
residual increments, so a ResNet with readout A reproduces G exactly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .activations import ActivationKind, as_activation
from .core import ODENetSpec, ParamPath
from .exceptions import ConstructionError, RankError, ShapeError
from .linalg import DEFAULT_RANK_TOL, check_rank, complete_rows, condition_estimate, lu_det
from .resnet import ResNetParams

log = logging.getLogger(__name__)

CONDITION_WARN = 1e8


@dataclass(frozen=True, eq=False)
class ShallowNet:
    """Units ``(alpha (m,), C (m, n), d (m,))`` summed through a shared activation."""

    units: tuple
    n: int
    m: int
    activation: ActivationKind = field(default_factory=lambda: ActivationKind("tanh"))

    def __post_init__(self):
        units = []
        for i, (alpha, C, d) in enumerate(self.units):
            alpha = np.array(alpha, dtype=np.float64).reshape(self.m)
            C = np.array(C, dtype=np.float64).reshape(self.m, self.n)
            d = np.array(d, dtype=np.float64).reshape(self.m)
            if not all(np.all(np.isfinite(a)) for a in (alpha, C, d)):
                raise ValueError(f"unit {i} has non-finite entries")
            units.append((alpha, C, d))
        object.__setattr__(self, "units", tuple(units))
        object.__setattr__(self, "activation", as_activation(self.activation))

    @property
    def L(self) -> int:
        return len(self.units)

    def __call__(self, X):
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        out = np.zeros((X.shape[0], self.m))
        for alpha, C, d in self.units:
            out += alpha * self.activation.eval(X @ C.T + d)
        return out[0] if single else out


def read_shallow(path) -> ShallowNet:
    """Text format: ``shallow n m L activation`` then alpha, C (row-major) and d lines per unit."""
    with open(path) as fh:
        lines = [ln.split() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines or lines[0][0] != "shallow" or len(lines[0]) != 5:
        raise ValueError(f"{path}: header must be 'shallow n m L activation'")
    n, m, L = (int(v) for v in lines[0][1:4])
    act = ActivationKind.parse(lines[0][4])
    body = lines[1:]
    if len(body) != 3 * L:
        raise ValueError(f"{path}: expected {3 * L} unit lines, found {len(body)}")
    units = []
    for l in range(L):
        alpha, C, d = ([float(v) for v in row] for row in body[3 * l:3 * l + 3])
        if len(alpha) != m or len(C) != m * n or len(d) != m:
            raise ValueError(f"{path}: unit {l + 1} has wrong field lengths")
        units.append((alpha, C, d))
    return ShallowNet(tuple(units), n, m, act)


def write_shallow(net: ShallowNet, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"shallow {net.n} {net.m} {net.L} {net.activation}\n")
        for alpha, C, d in net.units:
            for arr in (alpha, C.ravel(), d):
                fh.write(" ".join(repr(float(v)) for v in arr) + "\n")


def expand_full_rank(alpha, C, d, target_sign=None):
    """Split one unit into m units whose weight matrices all have rank m.

    Unit l keeps only component l of alpha and d; its matrix has row l = c_l
    and the other rows completed from the standard basis.  For square C the
    last completed row is negated when needed so that ``sign(det)`` equals
    ``target_sign`` (default +1).
    """
    alpha = np.asarray(alpha, dtype=np.float64).ravel()
    d = np.asarray(d, dtype=np.float64).ravel()
    C = np.atleast_2d(np.asarray(C, dtype=np.float64))
    m, n = C.shape
    for i in range(m):
        if not np.any(C[i]):
            raise ConstructionError(f"row {i + 1} of C is zero")
    if m == 1:
        return [(alpha.copy(), C.copy(), d.copy())]
    sign = 1.0 if target_sign is None else float(np.sign(target_sign))
    out = []
    for l in range(m):
        fill = complete_rows(C[l:l + 1], m - 1)
        Ct = np.empty((m, n))
        Ct[l] = C[l]
        others = [i for i in range(m) if i != l]
        Ct[others] = fill
        if m == n and np.sign(lu_det(Ct)) != sign:
            Ct[others[-1]] *= -1.0
        a = np.zeros(m)
        dd = np.zeros(m)
        a[l] = alpha[l]
        dd[l] = d[l]
        out.append((a, Ct, dd))
    return out


def _signed_completion(M, extra=None):
    """Square completion of full-row-rank ``M`` with positive determinant."""
    m, n = M.shape
    rows = complete_rows(M, n - m) if extra is None else np.asarray(extra, dtype=np.float64).copy()
    S = np.vstack([M, rows])
    if lu_det(S) < 0:
        S[-1] *= -1.0
    return S


def factor_through_A(A, C, tol: float = DEFAULT_RANK_TOL):
    """``P`` with ``A P = C`` and ``det P > 0``.

    For m < n, A is completed to an invertible square matrix with positive
    determinant.  C is first completed with the same extra rows; if that is
    singular it gets its own standard-basis completion.  The result is
    ``inv(A_sq) @ C_sq``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    C = np.atleast_2d(np.asarray(C, dtype=np.float64))
    if A.shape != C.shape:
        raise ShapeError(f"A is {A.shape} but C is {C.shape}")
    m, n = A.shape
    if check_rank(A, tol) != m:
        raise RankError("A must have full row rank")
    if check_rank(C, tol) != m:
        raise RankError("C must have full row rank")
    if m == n:
        dA, dC = lu_det(A), lu_det(C)
        if np.sign(dA) != np.sign(dC):
            raise ConstructionError(
                "det C and det A have opposite signs; no P with det P > 0 satisfies A P = C"
            )
        return np.linalg.solve(A, C)
    A_sq = _signed_completion(A)
    C_sq = _signed_completion(C, A_sq[m:])
    if check_rank(C_sq, tol) < n:
        C_sq = _signed_completion(C)
    cond = condition_estimate(A_sq)
    if cond > CONDITION_WARN:
        log.warning("completed A is ill-conditioned (condition estimate %.3g)", cond)
    return np.linalg.solve(A_sq, C_sq)


def lift_bias(A, d):
    """Minimum-norm ``q`` with ``A q = d``."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    d = np.asarray(d, dtype=np.float64).ravel()
    if check_rank(A) != A.shape[0]:
        raise RankError("A A^T is singular; A must have full row rank")
    return A.T @ np.linalg.solve(A @ A.T, d)


def _units_for(net: ShallowNet, A):
    """Expanded unit list; units already of rank m (and right sign) pass through."""
    m, n = A.shape
    sign = float(np.sign(lu_det(A))) if m == n else None
    out = []
    for idx, (alpha, C, d) in enumerate(net.units):
        try:
            ok = check_rank(C) == m and (sign is None or np.sign(lu_det(C)) == sign)
            out.extend([(alpha, C, d)] if ok else expand_full_rank(alpha, C, d, sign))
        except ConstructionError as exc:
            raise ConstructionError(f"unit {idx + 1}: {exc}") from None
    return out


def factor_units(net: ShallowNet, A):
    """``[(alpha_l, P_l, q_l)]`` with ``A P_l = C_l``, ``A q_l = d_l`` after expansion."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    if A.shape != (net.m, net.n):
        raise ShapeError(f"A must be {net.m} x {net.n}, got {A.shape}")
    if check_rank(A) != net.m:
        raise RankError("A must have rank m")
    out = []
    for idx, (alpha, C, d) in enumerate(_units_for(net, A)):
        try:
            P = factor_through_A(A, C)
        except (ConstructionError, RankError) as exc:
            raise type(exc)(f"unit {idx + 1}: {exc}") from None
        out.append((alpha, P, lift_bias(A, d)))
    return out


def compile_resnet(net: ShallowNet, A) -> ResNetParams:
    """ResNet whose final output equals ``net(xi)`` for every input."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    n, m = net.n, net.m
    factors = factor_units(net, A)
    L = len(factors)
    alpha = np.zeros((L, m))
    beta = np.zeros((L, n, n))
    gamma = np.zeros((L, n))
    P_prev, q_prev = np.eye(n), np.zeros(n)
    for l, (a, P, q) in enumerate(factors):
        # x^(l) = P_l xi + q_l given x^(l-1) = P_{l-1} xi + q_{l-1}
        beta[l] = np.linalg.solve(P_prev.T, (P - P_prev).T).T
        gamma[l] = q - q_prev - beta[l] @ q_prev
        alpha[l] = a
        P_prev, q_prev = P, q
    return ResNetParams(A, alpha, beta, gamma, net.activation)


@dataclass(frozen=True, eq=False)
class PWConstantPath:
    """``alpha, P, q`` constant on ``[t_{l-1}, t_l)``; arrays have one entry per interval."""

    breakpoints: np.ndarray
    alpha: np.ndarray
    P: np.ndarray
    q: np.ndarray
    A: np.ndarray
    activation: ActivationKind

    def __post_init__(self):
        t = np.asarray(self.breakpoints, dtype=np.float64)
        if t.ndim != 1 or t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise ValueError("breakpoints must start at 0 and increase strictly")
        for l, P in enumerate(self.P):
            if not lu_det(P) > 0:
                raise ConstructionError(f"P on interval {l + 1} has non-positive determinant")

    @property
    def T(self) -> float:
        return float(self.breakpoints[-1])

    def integral(self, X):
        """Closed-form ``int alpha(t) * sigma(A (P(t) xi + q(t))) dt`` (interval value times length)."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        widths = np.diff(self.breakpoints)
        out = np.zeros((X.shape[0], self.A.shape[0]))
        for w, a, P, q in zip(widths, self.alpha, self.P, self.q):
            out += w * a * self.activation.eval((X @ P.T + q) @ self.A.T)
        return out

    def to_param_path(self, steps_per_interval: int):
        """Euler-grid ODENet parameters that follow the path.

        On each interval x is held fixed by beta = gamma = 0 except at its
        first step, where one Euler step jumps from ``(P_old, q_old)`` to
        ``(P_new, q_new)``.  Returns ``(spec, params)`` with
        ``L = intervals * steps_per_interval``; the output converges to
        :meth:`integral` as the step count grows.
        """
        k = int(steps_per_interval)
        if k < 2:
            raise ValueError("steps_per_interval must be at least 2 so each interval has an active step")
        widths = np.diff(self.breakpoints)
        if not np.allclose(widths, widths[0], rtol=1e-12, atol=0.0):
            raise ValueError("Euler emission needs uniform breakpoints")
        intervals = len(widths)
        m, n = self.A.shape
        L = intervals * k
        spec = ODENetSpec(n, m, self.A, self.T, L, self.activation)
        h = spec.h
        alpha = np.zeros((L + 1, m))
        beta = np.zeros((L + 1, n, n))
        gamma = np.zeros((L + 1, n))
        P_prev, q_prev = np.eye(n), np.zeros(n)
        for j in range(intervals):
            s = j * k
            B = np.linalg.solve(P_prev.T, (self.P[j] - P_prev).T).T / h
            beta[s] = B
            gamma[s] = (self.q[j] - q_prev - h * B @ q_prev) / h
            # the state reaches (P_j, q_j) one step late, so alpha starts there
            alpha[s + 1:s + k] = self.alpha[j] * (k / (k - 1))
            P_prev, q_prev = self.P[j], self.q[j]
        return spec, ParamPath(alpha, beta, gamma)


def compile_odenet_pwc(net: ShallowNet, A, T: float, mean_form: bool = False) -> PWConstantPath:
    """Piecewise-constant paths whose exact time integral equals ``net``.

    With ``mean_form=False`` the net is taken as a plain sum and alpha on
    each of the L' intervals is scaled by ``L' / T``.  With ``mean_form=True``
    the unit weights already absorb the interval length and are used as is.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    factors = factor_units(net, A)
    L = len(factors)
    if L == 0:
        raise ConstructionError("a piecewise-constant path needs at least one unit")
    scale = 1.0 if mean_form else L / T
    return PWConstantPath(
        np.linspace(0.0, T, L + 1),
        np.array([scale * a for a, _, _ in factors]),
        np.array([P for _, P, _ in factors]),
        np.array([q for _, _, q in factors]),
        A,
        net.activation,
    )
