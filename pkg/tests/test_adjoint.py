import numpy as np
import pytest

from odenet.adjoint import (
    GeneralODEProblem,
    adjoint_backward,
    assemble_gradients,
    general_adjoint_gradient,
    loss_and_gradients,
    minibatch_loss,
    odenet_as_general,
    unpack_gradient,
)
from odenet.core import ODENetSpec, ParamPath
from odenet.data import make_rng
from odenet.exceptions import ShapeError
from odenet.forward import batch_forward, euler_forward, predict
from odenet.gradcheck import fd_gradient, random_instance


def relu_example():
    spec = ODENetSpec(1, 1, [[1.0]], 1.0, 2, "relu")
    params = ParamPath(np.ones((3, 1)), np.zeros((3, 1, 1)), np.zeros((3, 1)))
    traj = euler_forward(spec, params, np.array([1.0]))
    return spec, params, traj


def test_minibatch_loss_examples():
    assert minibatch_loss([[1.0]], [[1.0]]) == 0.0
    assert minibatch_loss([[1.0]], [[0.0]]) == 0.5
    assert minibatch_loss([[1.0, 0.0], [0.0, 2.0]], [[0.0, 0.0], [0.0, 0.0]]) == 1.25
    with pytest.raises(ValueError):
        minibatch_loss(np.empty((0, 1)), np.empty((0, 1)))


def test_zero_residual_gives_zero_adjoint():
    spec, params, traj = relu_example()
    for scheme in ("exact", "full"):
        lam = adjoint_backward(spec, params, traj, [0.0], 1, scheme).lam
        assert np.all(lam == 0)


def test_literal_recursion_hand_example():
    spec, params, traj = relu_example()
    residual = traj.output - 0.0
    lam = adjoint_backward(spec, params, traj, residual, 1, scheme="full").lam
    np.testing.assert_allclose(lam[:, 0], [1.0, 0.5, 0.0])
    g = assemble_gradients(spec, params, [traj], [adjoint_backward(spec, params, traj, residual, 1, "full")], [residual], 1, "full")
    np.testing.assert_allclose(g.g_gamma[:, 0], [1.0, 0.5, 0.0])
    np.testing.assert_allclose(g.g_beta[:, 0, 0], [1.0, 0.5, 0.0])
    np.testing.assert_allclose(g.g_alpha[:, 0], [1.0, 1.0, 1.0])


def test_exact_scheme_hand_example():
    # the exact transpose of the forward pass drops the l = L source
    spec, params, traj = relu_example()
    residual = traj.output
    adj = adjoint_backward(spec, params, traj, residual, 1)
    np.testing.assert_allclose(adj.lam[:, 0], [0.5, 0.0, 0.0])
    g = assemble_gradients(spec, params, [traj], [adj], [residual], 1)
    np.testing.assert_allclose(g.g_alpha[:, 0], [1.0, 1.0, 0.0])
    np.testing.assert_allclose(g.g_gamma[:, 0], [0.5, 0.0, 0.0])


def test_exact_scheme_matches_finite_differences_on_hand_example():
    spec, params, _ = relu_example()
    X, F = np.array([[1.0]]), np.array([[0.0]])
    _, g, _ = loss_and_gradients(spec, params, X, F)
    fd = fd_gradient(lambda p: minibatch_loss(predict(spec, p, X), F), params, 1e-6)
    for a, n in zip(g.scaled(spec.h).arrays(), fd.arrays()):
        np.testing.assert_allclose(a, n, atol=1e-8)


def test_beta_zero_vs_absent():
    spec, params, traj = relu_example()
    same = params.replace(beta=0.0 * params.beta)
    a = adjoint_backward(spec, params, traj, [1.0], 1).lam
    b = adjoint_backward(spec, same, traj, [1.0], 1).lam
    assert np.array_equal(a, b)


def test_batch_is_sum_or_mean_of_solo():
    spec, params, X, F = random_instance(make_rng(3), K_max=2)
    X = make_rng(4).standard_normal((2, spec.n))
    F = make_rng(5).standard_normal((2, spec.m))
    trajs = batch_forward(spec, params, X)
    res = [t.output - f for t, f in zip(trajs, F)]
    adjs = [adjoint_backward(spec, params, t, r, 2) for t, r in zip(trajs, res)]
    both = assemble_gradients(spec, params, trajs, adjs, res, 2)
    solo = [assemble_gradients(spec, params, [t], [a], [r], 2) for t, a, r in zip(trajs, adjs, res)]
    for k, fam in enumerate(("g_alpha", "g_beta", "g_gamma")):
        np.testing.assert_allclose(getattr(both, fam), getattr(solo[0], fam) + getattr(solo[1], fam), rtol=1e-13, atol=1e-15)
    _, g, _ = loss_and_gradients(spec, params, X, F)
    for a, b in zip(g.arrays(), both.arrays()):
        np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-15)


def test_residual_scaling():
    spec, params, _, _ = random_instance(make_rng(6))
    xi = make_rng(7).standard_normal(spec.n)
    traj = euler_forward(spec, params, xi)
    r = make_rng(8).standard_normal(spec.m)
    g1 = assemble_gradients(spec, params, [traj], [adjoint_backward(spec, params, traj, r, 1)], [r], 1)
    g3 = assemble_gradients(spec, params, [traj], [adjoint_backward(spec, params, traj, 3 * r, 1)], [3 * r], 1)
    for a, b in zip(g1.arrays(), g3.arrays()):
        np.testing.assert_allclose(b, 3 * a, rtol=1e-12, atol=1e-15)


def test_permuting_batch_leaves_gradients_unchanged():
    spec, params, _, _ = random_instance(make_rng(9))
    rng = make_rng(10)
    X = rng.standard_normal((4, spec.n))
    F = rng.standard_normal((4, spec.m))
    perm = [2, 0, 3, 1]
    _, g, _ = loss_and_gradients(spec, params, X, F)
    _, gp, _ = loss_and_gradients(spec, params, X[perm], F[perm])
    for a, b in zip(g.arrays(), gp.arrays()):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)


@pytest.mark.parametrize("scheme", ["exact", "full"])
def test_general_form_reproduces_assembled_gradients(scheme):
    spec, params, _, _ = random_instance(make_rng(11), L_max=10)
    xi = make_rng(12).standard_normal(spec.n)
    target = make_rng(13).standard_normal(spec.m)
    problem = odenet_as_general(spec, params)
    g = unpack_gradient(general_adjoint_gradient(problem, xi, target, spec.T, spec.L, scheme), spec.n, spec.m)
    _, ref, _ = loss_and_gradients(spec, params, xi[None, :], target[None, :], scheme)
    for a, b in zip(g.arrays(), ref.arrays()):
        scale = max(1.0, np.max(np.abs(b)))
        assert np.max(np.abs(a - b)) <= 1e-10 * scale


def test_general_zero_residual():
    spec, params, _, _ = random_instance(make_rng(14), L_max=5)
    xi = make_rng(15).standard_normal(spec.n)
    problem = odenet_as_general(spec, params)
    yT = predict(spec, params, xi)
    g = general_adjoint_gradient(problem, xi, yT, spec.T, spec.L)
    assert np.all(g == 0)


def test_general_constant_field():
    N, L, T = 3, 4, 2.0
    omega = make_rng(16).standard_normal((L + 1, N))
    problem = GeneralODEProblem(
        N, N, lambda t, x, w: w, lambda t, x, w: np.zeros((N, N)), lambda t, x, w: np.eye(N),
        np.eye(N), np.eye(N), omega,
    )
    xi = np.ones(N)
    target = np.zeros(N)
    xT = xi + (T / L) * omega[:L].sum(axis=0)
    g = general_adjoint_gradient(problem, xi, target, T, L, scheme="full")
    np.testing.assert_allclose(g, np.tile(xT, (L + 1, 1)), rtol=1e-14)


def test_general_callback_shape_checked():
    problem = GeneralODEProblem(
        2, 1, lambda t, x, w: np.zeros(3), lambda t, x, w: np.zeros((2, 2)), lambda t, x, w: np.zeros((2, 1)),
        np.eye(2), np.eye(2), np.zeros((3, 1)),
    )
    with pytest.raises(ShapeError):
        general_adjoint_gradient(problem, np.zeros(2), np.zeros(2), 1.0, 2)


def test_shape_mismatch_rejected():
    spec, params, traj = relu_example()
    with pytest.raises(ShapeError):
        adjoint_backward(spec, params, traj, [1.0, 2.0], 1)
    with pytest.raises(ShapeError):
        assemble_gradients(spec, params, [traj], [], [[1.0]], 1)
