import json

import numpy as np
import pytest

from growbench.errors import DimensionError, NumericError, StateError
from growbench.netcore import (AuxLink, BatchNorm, Conv2D, Dense, Network, SGD, adam_step,
                               conv_net, cross_gradient, dense_mlp, im2col_reshape, sgd_step,
                               squared_loss, zero_aux)
from growbench.netcore import checkpoint as ckpt
from growbench.netcore import functional as F

from oracles import conv_loop, finite_difference, mse, rel_err

FD_TOL = 1e-5


def _fd_check(net, x, t, aux=None, tol=FD_TOL):
    gs = net.loss_and_grads(x, t, aux)
    for layer, g in zip(net.layers, gs.grads):
        for pname, param in layer.params().items():
            num = finite_difference(lambda: net.loss(x, t) if aux is None else _aux_loss(net, x, t, aux), param)
            assert rel_err(g[pname], num) <= tol, (layer.name, pname, rel_err(g[pname], num))
    return gs


def _aux_loss(net, x, t, aux):
    out, _ = net.forward(x, aux)
    return squared_loss(out, t)[0]


def test_forward_scalar_linear():
    net = Network([Dense(np.array([[2.0]]), activation="identity")])
    out, cache = net.forward(np.array([[3.0]]))
    assert out[0, 0] == 6.0
    assert cache.batch_size == 1
    assert np.array_equal(cache.hs[0], [[3.0]])


def test_zero_weights_give_zero_output():
    net = Network([Dense(np.zeros((4, 3))), Dense(np.zeros((2, 4)))])
    out, _ = net.forward(np.random.default_rng(0).standard_normal((3, 5)))
    assert not np.any(out)


def test_forward_matches_straight_line_oracle():
    rng = np.random.default_rng(0)
    net = dense_mlp([20, 10, 10], rng, init="uniform")
    x = np.random.default_rng(0).standard_normal((20, 16))
    w1, w2 = net.layers[0].weight, net.layers[1].weight
    expected = np.empty((10, 16))
    for n in range(16):
        h = [max(0.0, sum(w1[i, j] * x[j, n] for j in range(20))) for i in range(10)]
        for o in range(10):
            expected[o, n] = sum(w2[o, i] * h[i] for i in range(10))
    np.testing.assert_allclose(net.forward(x)[0], expected, atol=1e-12, rtol=0)


def test_relu0_semantics():
    z = np.array([-1.0, 0.0, 2.0])
    np.testing.assert_array_equal(F.activate("relu0", z), [0.0, 0.0, 2.0])
    np.testing.assert_array_equal(F.activate_grad("relu0", z), [0.0, 1.0, 1.0])


def test_zero_loss_gradient_gives_zero_grads():
    rng = np.random.default_rng(1)
    net = dense_mlp([4, 3, 2], rng)
    out, cache = net.forward(rng.standard_normal((4, 5)))
    gs = net.backward(cache, np.zeros_like(out))
    assert all(not np.any(v) for g in gs.grads for v in g.values())


def test_linear_analytic_gradient():
    rng = np.random.default_rng(2)
    w = rng.standard_normal((3, 4))
    net = Network([Dense(w.copy(), activation="identity")])
    x, y = rng.standard_normal((4, 6)), rng.standard_normal((3, 6))
    gs = net.loss_and_grads(x, y)
    # loss is the mean over outputs and batch
    expected = 2 * (w @ x - y) @ x.T / (3 * 6)
    np.testing.assert_allclose(gs.grads[0]["weight"], expected, rtol=1e-12)
    assert gs.loss == pytest.approx(mse(w @ x, y))


def test_dense_finite_differences():
    rng = np.random.default_rng(3)
    net = dense_mlp([20, 5, 10], rng)
    _fd_check(net, rng.standard_normal((20, 8)), rng.standard_normal((10, 8)))


def test_dense_with_bias_and_tanh_finite_differences():
    rng = np.random.default_rng(4)
    net = dense_mlp([6, 4, 3], rng, activation="tanh", bias=True)
    _fd_check(net, rng.standard_normal((6, 5)), rng.standard_normal((3, 5)))


def test_conv_finite_differences():
    rng = np.random.default_rng(5)
    net = conv_net([2, 3, 2], 3, rng)
    _fd_check(net, rng.standard_normal((2, 2, 8, 8)), rng.standard_normal((2, 2, 8, 8)))


def test_strided_conv_finite_differences():
    rng = np.random.default_rng(6)
    net = Network([Conv2D(rng.standard_normal((3, 2, 3, 3)), None, "tanh", stride=2, padding=1),
                   Conv2D(rng.standard_normal((1, 3, 1, 1)), None, "identity", padding=0)])
    x = rng.standard_normal((2, 2, 8, 8))
    out, _ = net.forward(x)
    _fd_check(net, x, rng.standard_normal(out.shape))


def test_batchnorm_finite_differences_dense_and_conv():
    rng = np.random.default_rng(7)
    dense = Network([Dense(rng.standard_normal((5, 4)), activation="identity"),
                     BatchNorm(rng.uniform(0.5, 1.5, 5), rng.standard_normal(5), activation="relu0"),
                     Dense(rng.standard_normal((3, 5)), activation="identity")])
    _fd_check(dense, rng.standard_normal((4, 7)), rng.standard_normal((3, 7)))
    conv = conv_net([2, 3, 2], 3, rng, batchnorm_after=(0,))
    _fd_check(conv, rng.standard_normal((3, 2, 8, 8)), rng.standard_normal((3, 2, 8, 8)))


def test_batchnorm_constant_batch_and_small_batch():
    bn = BatchNorm.fresh(3)
    z, _ = bn.preact(np.full((3, 4), 2.5))
    np.testing.assert_allclose(z, 0.0, atol=1e-12)
    with pytest.raises(StateError):
        bn.preact(np.ones((3, 1)))


def test_batchnorm_standardized_input_passes_through():
    x = np.random.default_rng(0).standard_normal((2, 1000))
    x = (x - x.mean(axis=1, keepdims=True)) / x.std(axis=1, keepdims=True)
    z, _ = BatchNorm.fresh(2, eps=1e-12).preact(x)
    np.testing.assert_allclose(z, x, atol=1e-9)


def test_backward_rejects_foreign_cache():
    rng = np.random.default_rng(8)
    a, b = dense_mlp([3, 2, 1], rng), dense_mlp([3, 4, 1], rng)
    out, cache = a.forward(rng.standard_normal((3, 2)))
    with pytest.raises(StateError):
        b.backward(cache, np.zeros_like(out))


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        Network([Dense(np.ones((3, 2))), Dense(np.ones((1, 4)))])
    net = dense_mlp([3, 2, 1], np.random.default_rng(0))
    with pytest.raises(DimensionError):
        net.forward(np.ones((4, 2)))


def test_dense_cross_gradient_matches_outer_product():
    rng = np.random.default_rng(9)
    net = dense_mlp([20, 5, 10], rng)
    x, t = rng.standard_normal((20, 8)), rng.standard_normal((10, 8))
    cg = cross_gradient(net, 0, x, t)
    gs = net.loss_and_grads(x, t)
    direct = np.zeros((10, 20))
    for n in range(8):
        direct += np.outer(gs.deltas[1][:, n], x[:, n])
    assert np.max(np.abs(cg.matrix - direct)) <= 1e-12
    assert cg.matrix.shape == (10, 20)


def test_zero_aux_is_neutral():
    rng = np.random.default_rng(10)
    net = dense_mlp([6, 4, 3, 2], rng)
    x, t = rng.standard_normal((6, 5)), rng.standard_normal((2, 5))
    plain = net.loss_and_grads(x, t)
    with_aux = net.loss_and_grads(x, t, zero_aux(net, 1))
    assert np.array_equal(net.forward(x)[0], net.forward(x, zero_aux(net, 1))[0])
    for g1, g2 in zip(plain.grads, with_aux.grads):
        for k in g1:
            assert np.array_equal(g1[k], g2[k])


def test_cross_gradient_zero_at_fitted_linear_target():
    rng = np.random.default_rng(11)
    net = dense_mlp([4, 3, 2], rng, activation="identity")
    x = rng.standard_normal((4, 6))
    t, _ = net.forward(x)
    assert cross_gradient(net, 0, x, t).is_zero()


def test_cross_gradient_layer_out_of_range():
    net = dense_mlp([4, 3, 2], np.random.default_rng(0))
    with pytest.raises(IndexError):
        cross_gradient(net, 1, np.ones((4, 2)), np.ones((2, 2)))


def test_conv_aux_shape_and_finite_differences():
    rng = np.random.default_rng(12)
    net = conv_net([2, 3, 2], 3, rng)
    x, t = rng.standard_normal((2, 2, 6, 6)), rng.standard_normal((2, 2, 6, 6))
    aux = zero_aux(net, 0)
    assert aux.weight.shape == (2, 2, 5, 5)
    cg = cross_gradient(net, 0, x, t)
    num = finite_difference(lambda: _aux_loss(net, x, t, aux), aux.weight)
    assert rel_err(cg.aux, num) <= 1e-4
    assert cg.matrix.shape == (2 * 3 * 3, 2 * 3 * 3)


def test_conv_aux_shape_mixed_kernels():
    rng = np.random.default_rng(13)
    net = Network([Conv2D(rng.standard_normal((3, 2, 3, 3)), None, "relu0"),
                   Conv2D(rng.standard_normal((2, 3, 5, 5)), None, "identity")])
    assert zero_aux(net, 0).weight.shape == (2, 2, 7, 7)


def test_conv2d_matches_loop_oracle():
    rng = np.random.default_rng(14)
    x, w = rng.standard_normal((2, 3, 7, 7)), rng.standard_normal((4, 3, 3, 3))
    for stride, pad in ((1, 1), (2, 0), (1, 0)):
        np.testing.assert_allclose(F.conv2d(x, w, stride, pad), conv_loop(x, w, stride, pad), atol=1e-12)


def test_im2col_degenerate_and_zero():
    g = np.random.default_rng(15).standard_normal((4, 3, 1, 1))
    np.testing.assert_array_equal(im2col_reshape(g, (1, 1), (1, 1)), g[:, :, 0, 0])
    m = im2col_reshape(np.zeros((2, 3, 5, 5)), (3, 3), (3, 3))
    assert m.shape == (18, 27) and not np.any(m)
    with pytest.raises(DimensionError):
        im2col_reshape(np.zeros((2, 3, 4, 4)), (3, 3), (3, 3))


def test_sgd_examples():
    net = Network([Dense(np.array([[1.0]]), activation="identity")])
    gs = net.loss_and_grads(np.array([[1.0]]), np.array([[0.0]]))
    assert gs.grads[0]["weight"][0, 0] == 2.0
    stepped, _ = sgd_step(net, gs, 0.1)
    assert stepped.layers[0].weight[0, 0] == pytest.approx(0.8)
    assert net.layers[0].weight[0, 0] == 1.0
    assert np.array_equal(sgd_step(net, gs, 0.0)[0].layers[0].weight, net.layers[0].weight)


def test_sgd_quadratic_monotone_and_momentum():
    net = Network([Dense(np.array([[3.0]]), activation="identity")])
    x, t = np.array([[1.0]]), np.array([[0.0]])
    opt = SGD(0.1)
    losses = []
    for _ in range(100):
        gs = net.loss_and_grads(x, t)
        losses.append(gs.loss)
        opt.step(net, gs)
    assert all(b < a for a, b in zip(losses, losses[1:]))
    mom = SGD(0.1, 0.9)
    net2 = Network([Dense(np.array([[1.0]]), activation="identity")])
    mom.step(net2, net2.loss_and_grads(x, t))
    mom.step(net2, net2.loss_and_grads(x, t))
    # v1 = 2, w1 = 0.8; v2 = 0.9*2 + 1.6 = 3.4, w2 = 0.8 - 0.34
    assert net2.layers[0].weight[0, 0] == pytest.approx(0.46)


def test_sgd_non_finite_gradient():
    net = Network([Dense(np.array([[1.0]]), activation="identity")])
    gs = net.loss_and_grads(np.array([[1.0]]), np.array([[0.0]]))
    gs.grads[0]["weight"][0, 0] = np.inf
    with pytest.raises(NumericError):
        SGD(0.1).step(net, gs)


def test_sgd_sync_pads_velocity():
    net = Network([Dense(np.ones((2, 2)), activation="identity")])
    opt = SGD(0.1, 0.9, {("L0", "weight"): np.ones((2, 2)), ("gone", "weight"): np.ones(1)})
    net.layers[0].weight = np.ones((3, 2))
    opt.sync(net)
    np.testing.assert_array_equal(opt.velocity[("L0", "weight")], [[1, 1], [1, 1], [0, 0]])
    assert ("gone", "weight") not in opt.velocity


def test_adam_examples():
    p, s = adam_step(np.ones(3), np.zeros(3), None, 0.1)
    np.testing.assert_array_equal(p, np.ones(3))
    p, _ = adam_step(np.zeros(1), np.ones(1), None, 0.01)
    assert p[0] == pytest.approx(-0.01, rel=1e-6)
    w, state = np.array([1.0]), None
    for _ in range(200):
        w, state = adam_step(w, 2 * w, state, 0.05)
    assert abs(w[0]) < 0.05
    with pytest.raises(NumericError):
        adam_step(np.ones(1), np.array([np.nan]), None, 0.1)


def test_checkpoint_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(16)
    net = Network([Dense(rng.standard_normal((4, 3)), rng.standard_normal(4), "relu0"),
                   BatchNorm(rng.standard_normal(4), rng.standard_normal(4)),
                   Dense(rng.standard_normal((2, 4)), None, "identity",
                         skip=rng.standard_normal((2, 4)))])
    opt = SGD(0.1, 0.9, {("L0", "weight"): rng.standard_normal((4, 3))})
    path = ckpt.save(tmp_path / "c.json", net, opt, 17, {"note": "x"})
    net2, opt2, step, extra = ckpt.load(path)
    assert step == 17 and extra == {"note": "x"}
    for a, b in zip(net.layers, net2.layers):
        assert a.kind == b.kind and a.name == b.name
        for k, v in a.params().items():
            assert np.array_equal(v, b.params()[k])
    assert np.array_equal(opt.velocity[("L0", "weight")], opt2.velocity[("L0", "weight")])
    conv = conv_net([2, 3], 3, rng)
    c2, *_ = ckpt.from_dict(json.loads(json.dumps(ckpt.to_dict(conv))))
    assert np.array_equal(conv.layers[0].weight, c2.layers[0].weight)


def test_checkpoint_errors(tmp_path):
    with pytest.raises(StateError):
        ckpt.load(tmp_path / "missing.json")
    with pytest.raises(StateError):
        ckpt.from_dict({"format": "other"})
    d = ckpt.to_dict(dense_mlp([2, 1], np.random.default_rng(0)))
    d["version"] = 99
    with pytest.raises(StateError):
        ckpt.from_dict(d)


def test_aux_link_out_of_range():
    net = dense_mlp([3, 2, 1], np.random.default_rng(0))
    with pytest.raises(IndexError):
        net.forward(np.ones((3, 2)), AuxLink(2, 1, np.zeros((1, 3))))
