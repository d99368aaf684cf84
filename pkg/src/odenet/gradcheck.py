"""Central finite-difference oracle for the ODENet and ResNet gradients.

Analytic gradients from :mod:`odenet.adjoint` are L^2 densities, so they are
multiplied by the step size h before being compared with per-entry finite
differences.  ResNet gradients are plain per-layer derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .adjoint import loss_and_gradients, minibatch_loss
from .core import FAMILIES, Gradients, ODENetSpec, ParamPath
from .exceptions import ShapeError
from .forward import predict, simulate
from .resnet import ResNetParams, resnet_as_general, resnet_backprop, resnet_predict, unpack_layers

DEFAULT_STEP = 1e-5
DEFAULT_REL_TOL = 1e-4
DEFAULT_ABS_TOL = 1e-7
KINK_RADIUS = 1e-3


def fd_gradient(lossfn, params: ParamPath, step: float = DEFAULT_STEP) -> Gradients:
    """``(loss(p + step) - loss(p - step)) / (2 step)`` for every scalar entry of every family."""
    if not step > 0:
        raise ValueError("step must be positive")
    arrays = [a.copy() for a in params.arrays()]
    out = [np.zeros_like(a) for a in arrays]
    for a, g in zip(arrays, out):
        flat, gflat = a.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + step
            up = lossfn(ParamPath(*arrays))
            flat[i] = keep - step
            down = lossfn(ParamPath(*arrays))
            flat[i] = keep
            gflat[i] = (up - down) / (2 * step)
    return Gradients(*out)


@dataclass
class GradcheckReport:
    checked: int = 0
    failed: int = 0
    skipped: int = 0
    worst: list = field(default_factory=list)  # (error, family, index, analytic, numeric)
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.failed == 0

    def format(self, limit: int = 10) -> str:
        lines = [
            f"checked {self.checked} entries, {self.failed} failed, {self.skipped} skipped near kinks",
        ]
        rows = self.failures[:limit] if self.failures else self.worst[:limit]
        label = "failures" if self.failures else "largest discrepancies"
        if rows:
            lines.append(f"{label}:")
        for err, fam, idx, a, n in rows:
            lines.append(f"  {fam}{list(idx)}: analytic {a:.10g} numeric {n:.10g} excess {err:.3g}")
        lines.append("PASS" if self.passed else "FAIL")
        return "\n".join(lines)


def compare_gradients(
    analytic: Gradients,
    numeric: Gradients,
    rel_tol: float = DEFAULT_REL_TOL,
    abs_tol: float = DEFAULT_ABS_TOL,
    skip=None,
    names=FAMILIES,
    keep: int = 10,
) -> GradcheckReport:
    """Entry passes when ``|a - n| <= abs_tol + rel_tol * max(|a|, |n|)``.

    ``skip`` is an optional sequence of boolean masks (one per family)
    marking entries to leave out.  Offenders are listed by family and index
    ``(l, i[, j])``, sorted by how far they exceed the tolerance.
    """
    report = GradcheckReport()
    a_arrays, n_arrays = analytic.arrays(), numeric.arrays()
    for f, (a, n) in enumerate(zip(a_arrays, n_arrays)):
        if a.shape != n.shape:
            raise ShapeError(f"{names[f]}: analytic {a.shape} vs numeric {n.shape}")
    for f, (a, n) in enumerate(zip(a_arrays, n_arrays)):
        mask = np.zeros(a.shape, bool) if skip is None else np.asarray(skip[f], bool)
        bound = abs_tol + rel_tol * np.maximum(np.abs(a), np.abs(n))
        excess = np.abs(a - n) - bound
        report.skipped += int(mask.sum())
        report.checked += int((~mask).sum())
        bad = (excess > 0) & ~mask
        report.failed += int(bad.sum())
        for idx in zip(*np.nonzero(bad)):
            report.failures.append((float(excess[idx]), names[f], tuple(int(i) for i in idx), float(a[idx]), float(n[idx])))
        for idx in np.argsort(np.where(mask, -np.inf, excess), axis=None)[::-1][:keep]:
            idx = np.unravel_index(idx, a.shape)
            if not mask[idx]:
                report.worst.append((float(excess[idx]), names[f], tuple(int(i) for i in idx), float(a[idx]), float(n[idx])))
    report.failures.sort(key=lambda r: -r[0])
    report.worst.sort(key=lambda r: -r[0])
    report.worst = report.worst[:keep]
    return report


def kink_mask(spec: ODENetSpec, params: ParamPath, X, radius: float = KINK_RADIUS):
    """Entries whose finite difference may straddle an activation kink.

    For smooth activations nothing is masked.  Otherwise alpha_l[i] is masked
    when some ``|(A x_l)_i| < radius``, and beta_l, gamma_l when any later
    pre-activation is that close to the kink.
    """
    masks = [np.zeros(a.shape, bool) for a in params.arrays()]
    if spec.activation.smooth:
        return masks
    _, _, zs = simulate(spec, params, X, return_preactivations=True)
    near = (np.abs(zs[:spec.L]) < radius).any(axis=1)  # (L, m)
    masks[0][:spec.L] = near
    later = np.zeros(spec.L + 1, bool)
    for l in range(spec.L - 2, -1, -1):
        later[l] = later[l + 1] or bool(near[l + 1].any())
    masks[1][later] = True
    masks[2][later] = True
    return masks


def sabotage(grads: Gradients) -> Gradients:
    """Test hook: flip the sign of the gamma gradient."""
    return Gradients(grads.g_alpha, grads.g_beta, -grads.g_gamma)


def check_odenet(
    spec: ODENetSpec,
    params: ParamPath,
    X,
    F,
    step: float = DEFAULT_STEP,
    rel_tol: float = DEFAULT_REL_TOL,
    abs_tol: float = DEFAULT_ABS_TOL,
    scheme: str = "exact",
    corrupt: bool = False,
) -> GradcheckReport:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    F = np.atleast_2d(np.asarray(F, dtype=np.float64))
    _, grads, _ = loss_and_gradients(spec, params, X, F, scheme)
    if corrupt:
        grads = sabotage(grads)

    def lossfn(p):
        return minibatch_loss(predict(spec, p, X), F)

    numeric = fd_gradient(lossfn, params, step)
    return compare_gradients(grads.scaled(spec.h), numeric, rel_tol, abs_tol, kink_mask(spec, params, X))


def check_resnet(
    params: ResNetParams,
    X,
    F,
    step: float = DEFAULT_STEP,
    rel_tol: float = DEFAULT_REL_TOL,
    abs_tol: float = DEFAULT_ABS_TOL,
) -> GradcheckReport:
    """Backprop on the stacked-state problem against FD of the halved loss."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    F = np.atleast_2d(np.asarray(F, dtype=np.float64))
    n, m = params.n, params.m
    g = resnet_backprop(resnet_as_general(params), X, F)
    analytic = Gradients(*unpack_layers(g, n, m))

    def lossfn(p):
        net = ResNetParams(params.A, p.alpha, p.beta, p.gamma, params.activation)
        return minibatch_loss(resnet_predict(net, X), F)

    numeric = fd_gradient(lossfn, ParamPath(params.alpha, params.beta, params.gamma), step)
    return compare_gradients(analytic, numeric, rel_tol, abs_tol)


def random_instance(rng, n_max=4, m_max=3, L_max=20, K_max=5, activation="tanh", scale=0.5):
    """Random ``(spec, params, X, F)`` with m <= n and a Gaussian A of full rank."""
    n = int(rng.integers(1, n_max + 1))
    m = int(rng.integers(1, min(m_max, n) + 1))
    L = int(rng.integers(1, L_max + 1))
    K = int(rng.integers(1, K_max + 1))
    T = float(rng.uniform(0.5, 2.0))
    spec = ODENetSpec(n, m, rng.standard_normal((m, n)), T, L, activation)
    params = ParamPath.random(spec, rng, scale)
    X = rng.standard_normal((K, n))
    F = rng.standard_normal((K, m))
    return spec, params, X, F
