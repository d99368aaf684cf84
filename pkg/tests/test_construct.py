import logging

import numpy as np
import pytest

from odenet.construct import (
    ShallowNet,
    compile_odenet_pwc,
    compile_resnet,
    expand_full_rank,
    factor_through_A,
    lift_bias,
    read_shallow,
    write_shallow,
)
from odenet.data import make_rng
from odenet.exceptions import ConstructionError, RankError
from odenet.forward import predict
from odenet.linalg import check_rank, lu_det
from odenet.resnet import resnet_forward, resnet_predict


def random_net(rng, n, m, L, act, A):
    units = []
    for _ in range(L):
        C = rng.standard_normal((m, n))
        if m == n == 1:
            # a 1 x 1 readout cannot change sign along the flow
            C = np.abs(C) * np.sign(A)
        units.append((rng.standard_normal(m), C, rng.standard_normal(m)))
    return ShallowNet(tuple(units), n, m, act)


def test_expand_single_row_unchanged():
    out = expand_full_rank([2.0], [[1.0, 3.0]], [0.5])
    assert len(out) == 1
    np.testing.assert_array_equal(out[0][1], [[1.0, 3.0]])


def test_expand_rank_deficient_square_example():
    out = expand_full_rank([1.0, -2.0], [[1.0, 0.0], [1.0, 0.0]], [0.3, 0.1])
    np.testing.assert_array_equal(out[0][1], [[1.0, 0.0], [0.0, 1.0]])
    np.testing.assert_array_equal(out[1][1], [[0.0, -1.0], [1.0, 0.0]])
    assert all(lu_det(C) > 0 for _, C, _ in out)
    net = ShallowNet(((np.array([1.0, -2.0]), [[1.0, 0.0], [1.0, 0.0]], [0.3, 0.1]),), 2, 2, "tanh")
    expanded = ShallowNet(tuple(out), 2, 2, "tanh")
    X = make_rng(0).standard_normal((10, 2))
    np.testing.assert_allclose(expanded(X), net(X), atol=1e-12)


def test_expand_preserves_evaluation_and_rank():
    rng = make_rng(1)
    for _ in range(20):
        n = int(rng.integers(2, 5))
        m = int(rng.integers(2, n + 1))
        alpha, C, d = rng.standard_normal(m), rng.standard_normal((m, n)), rng.standard_normal(m)
        C[-1] = C[0]
        out = expand_full_rank(alpha, C, d)
        assert all(check_rank(Ct) == m for _, Ct, _ in out)
        X = rng.standard_normal((20, n))
        orig = ShallowNet(((alpha, C, d),), n, m, "sigmoid")(X)
        assert np.max(np.abs(ShallowNet(tuple(out), n, m, "sigmoid")(X) - orig)) <= 1e-12


def test_expand_rejects_zero_row():
    with pytest.raises(ConstructionError, match="row 2"):
        expand_full_rank([1.0, 1.0], [[1.0, 0.0], [0.0, 0.0]], [0.0, 0.0])


def test_factor_examples():
    A = np.array([[2.0, 1.0], [0.5, 3.0]])
    np.testing.assert_allclose(factor_through_A(A, A), np.eye(2), atol=1e-15)
    np.testing.assert_allclose(factor_through_A([[1.0]], [[3.0]]), [[3.0]])
    np.testing.assert_allclose(factor_through_A([[1.0, 0.0]], [[2.0, 3.0]]), [[2.0, 3.0], [0.0, 1.0]])


def test_factor_sign_mismatch_and_rank_errors():
    with pytest.raises(ConstructionError, match="opposite signs"):
        factor_through_A(np.eye(2), [[0.0, 1.0], [1.0, 0.0]])
    with pytest.raises(RankError):
        factor_through_A([[1.0, 0.0], [2.0, 0.0]], np.eye(2))
    with pytest.raises(RankError):
        factor_through_A([[1.0, 0.0, 0.0]], [[0.0, 0.0, 0.0]])


def test_factor_warns_on_ill_conditioned_completion(caplog):
    A = np.array([[1.0, 0.0, 0.0], [1.0, 1e-9, 0.0]])
    with caplog.at_level(logging.WARNING, logger="odenet.construct"):
        factor_through_A(A, make_rng(2).standard_normal((2, 3)))
    assert "ill-conditioned" in caplog.text


def test_lift_bias_examples():
    np.testing.assert_array_equal(lift_bias([[1.0, 2.0]], [0.0]), [0.0, 0.0])
    np.testing.assert_allclose(lift_bias([[1.0, 0.0]], [5.0]), [5.0, 0.0])
    A = np.array([[2.0, 1.0], [1.0, 3.0]])
    np.testing.assert_allclose(lift_bias(A, [1.0, 2.0]), np.linalg.solve(A, [1.0, 2.0]), rtol=1e-13)


def test_compile_single_unit_example():
    net = ShallowNet((([2.0], [[3.0]], [1.0]),), 1, 1, "relu")
    res = compile_resnet(net, [[1.0]])
    assert res.beta[0, 0, 0] == pytest.approx(2.0) and res.gamma[0, 0] == pytest.approx(1.0)
    for xi in (-1.0, 0.2, 2.0):
        xs, ys = resnet_forward(res, np.array([xi]))
        assert xs[1, 0] == pytest.approx(3 * xi + 1)
        assert ys[1, 0] == pytest.approx(2 * max(3 * xi + 1, 0.0))


def test_compile_empty_net():
    res = compile_resnet(ShallowNet((), 2, 1, "tanh"), [[1.0, 0.0]])
    assert res.L == 0
    assert np.all(resnet_predict(res, np.ones((3, 2))) == 0)


def test_compile_reproduces_random_nets():
    rng = make_rng(3)
    for t in range(30):
        n = int(rng.integers(1, 5))
        m = int(rng.integers(1, n + 1))
        A = rng.standard_normal((m, n))
        net = random_net(rng, n, m, int(rng.integers(1, 7)), ("tanh", "sigmoid", "softplus")[t % 3], A)
        res = compile_resnet(net, A)
        X = rng.standard_normal((100, n))
        G = net(X)
        err = np.abs(resnet_predict(res, X) - G).max(axis=1)
        assert np.all(err <= 1e-10 * (1 + np.linalg.norm(G, axis=1)))


def test_pwc_single_unit_and_quadrature():
    net = ShallowNet((([2.0], [[3.0]], [1.0]),), 1, 1, "tanh")
    path = compile_odenet_pwc(net, [[1.0]], 1.0)
    assert path.alpha[0, 0] == 2.0 and path.P[0, 0, 0] == pytest.approx(3.0) and path.q[0, 0] == pytest.approx(1.0)
    rng = make_rng(4)
    A = rng.standard_normal((2, 3))
    net = random_net(rng, 3, 2, 4, "tanh", A)
    path = compile_odenet_pwc(net, A, 2.0)
    X = rng.standard_normal((20, 3))
    assert np.max(np.abs(path.integral(X) - net(X))) <= 1e-12
    assert all(lu_det(P) > 0 for P in path.P)


def test_pwc_mean_form_scaling():
    net = ShallowNet((([2.0], [[3.0]], [1.0]), ([1.0], [[1.0]], [0.0])), 1, 1, "tanh")
    plain = compile_odenet_pwc(net, [[1.0]], 4.0)
    mean = compile_odenet_pwc(net, [[1.0]], 4.0, mean_form=True)
    np.testing.assert_allclose(plain.alpha, mean.alpha * 2 / 4.0)


def test_pwc_euler_emission_converges():
    rng = make_rng(5)
    A = rng.standard_normal((1, 2))
    net = random_net(rng, 2, 1, 3, "tanh", A)
    path = compile_odenet_pwc(net, A, 1.5)
    X = rng.standard_normal((10, 2))
    for k in (2, 4, 16):
        spec, params = path.to_param_path(k)
        assert spec.L == 3 * k
        assert np.max(np.abs(predict(spec, params, X) - net(X))) <= 1e-12
    with pytest.raises(ValueError):
        path.to_param_path(1)


def test_construction_properties_hold_per_unit():
    rng = make_rng(6)
    for _ in range(20):
        n = int(rng.integers(1, 5))
        m = int(rng.integers(1, n + 1))
        A = rng.standard_normal((m, n))
        net = random_net(rng, n, m, 3, "tanh", A)
        path = compile_odenet_pwc(net, A, 1.0)
        for P, q in zip(path.P, path.q):
            assert lu_det(P) > 0
            assert np.linalg.norm(A @ P) > 0
        C_list = [A @ P for P in path.P]
        assert all(check_rank(C) == m for C in C_list)


def test_shallow_text_round_trip(tmp_path):
    rng = make_rng(7)
    net = random_net(rng, 3, 2, 2, "softplus", rng.standard_normal((2, 3)))
    path = tmp_path / "net.txt"
    write_shallow(net, path)
    back = read_shallow(path)
    X = rng.standard_normal((5, 3))
    assert np.array_equal(back(X), net(X))
    path.write_text("shallow 1 1 2 tanh\n1\n1\n0\n")
    with pytest.raises(ValueError):
        read_shallow(path)
