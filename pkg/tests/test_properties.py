import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from growbench.grow import InitResult, grow_neurons
from growbench.grow.init import gradmax_objective, init_gradmax
from growbench.linalg import alignment, svd_topk
from growbench.netcore import SGD, cross_gradient, dense_mlp
from growbench.netcore import checkpoint as ckpt

finite = st.floats(-10, 10, allow_nan=False, width=64)


@st.composite
def matrix_and_k(draw):
    r = draw(st.integers(1, 8))
    c = draw(st.integers(1, 8))
    a = draw(arrays(np.float64, (r, c), elements=finite))
    return a, draw(st.integers(1, min(r, c)))


@settings(max_examples=80, deadline=None)
@given(matrix_and_k())
def test_svd_vectors_orthonormal_and_values_sorted(case):
    a, k = case
    res = svd_topk(a, k)
    u, s = res.left_vectors, res.singular_values
    np.testing.assert_allclose(u.T @ u, np.eye(k), atol=1e-9)
    assert np.all(np.diff(s) <= 1e-12) and np.all(s >= 0)
    full = np.linalg.svd(a, compute_uv=False)
    np.testing.assert_allclose(s, full[:k], atol=1e-9 * max(1.0, full[0]))
    # ||U^T A||_F^2 equals the top-k energy
    np.testing.assert_allclose(np.sum((u.T @ a) ** 2), np.sum(full[:k] ** 2),
                               rtol=1e-8, atol=1e-9 * max(1.0, full[0] ** 2))


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 8), st.integers(1, 3), st.integers(0, 2**31 - 1))
def test_alignment_bounds(n, k, seed):
    k = min(k, n)
    rng = np.random.default_rng(seed)
    q1 = np.linalg.qr(rng.standard_normal((n, n)))[0][:, :k]
    q2 = np.linalg.qr(rng.standard_normal((n, n)))[0][:, :k]
    a = alignment(q1, q2)
    assert 0.0 <= a <= 1.0 + 1e-12
    assert abs(alignment(q1, q1) - 1.0) < 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 3), st.floats(0.1, 5.0))
def test_gradmax_objective_properties(seed, k, c):
    rng = np.random.default_rng(seed)
    net = dense_mlp([5, 4, 3], rng)
    x, t = rng.standard_normal((5, 30)), rng.standard_normal((3, 30))
    cg = cross_gradient(net, 0, x, t)
    init = init_gradmax(cg, k, c)
    np.testing.assert_allclose(np.linalg.norm(init.w_out), c, rtol=1e-12)
    s = np.linalg.svd(cg.matrix, compute_uv=False)[:k]
    # sigma-weighted columns: c^2 * sum(s^4) / sum(s^2)
    np.testing.assert_allclose(gradmax_objective(init.w_out, cg),
                               c * c * np.sum(s**4) / np.sum(s**2), rtol=1e-9)
    if k == 1:
        best = gradmax_objective(init.w_out, cg)
        for _ in range(20):
            w = rng.standard_normal((3, 1))
            w *= c / np.linalg.norm(w)
            assert gradmax_objective(w, cg) <= best * (1 + 1e-9) + 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 4))
def test_zero_incoming_growth_preserves_function(seed, k):
    rng = np.random.default_rng(seed)
    net = dense_mlp([4, 3, 2], rng)
    x = rng.standard_normal((4, 11))
    init = InitResult(np.zeros((k, 4)), rng.standard_normal((2, k)))
    grown = grow_neurons(net, 0, init)
    np.testing.assert_array_equal(grown.forward(x)[0], net.forward(x)[0])
    assert grown.widths() == [3 + k, 2]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.0, 0.99))
def test_checkpoint_round_trip_is_exact(seed, momentum):
    rng = np.random.default_rng(seed)
    net = dense_mlp([3, 4, 2], rng, bias=True)
    opt = SGD(0.1, momentum)
    x, t = rng.standard_normal((3, 7)), rng.standard_normal((2, 7))
    opt.step(net, net.loss_and_grads(x, t))
    net2, opt2, step, extra = ckpt.from_dict(ckpt.to_dict(net, opt, 17, {"tag": [1, 2]}))
    assert step == 17 and extra == {"tag": [1, 2]}
    np.testing.assert_array_equal(net2.forward(x)[0], net.forward(x)[0])
    opt.step(net, net.loss_and_grads(x, t))
    opt2.step(net2, net2.loss_and_grads(x, t))
    np.testing.assert_array_equal(net2.forward(x)[0], net.forward(x)[0])
