"""Initializers for newly grown neurons."""
from __future__ import annotations

import numpy as np

from ..errors import DimensionError, NumericError, PreconditionError, StateError
from ..linalg import frobenius_norm, svd_topk
from ..netcore import functional as F
from ..netcore.crossgrad import CrossGradient, cross_gradient
from ..netcore.layers import BatchNorm, Conv2D, Dense
from ..netcore.network import Network
from ..netcore.optim import adam_step
from .mechanics import InitResult, grow_neurons, unit_shapes

GRADMAX_OPT_STEPS = 2000
GRADMAX_OPT_LR = 1e-2
FIREFLY_STEPS = 100
FIREFLY_LR = 1e-2


def _rescaled_normal(shape, norm: float, rng: np.random.Generator) -> np.ndarray:
    if norm == 0:
        return np.zeros(shape)
    x = rng.standard_normal(shape)
    return x * (norm / frobenius_norm(x))


def _rescale(x: np.ndarray, norm: float) -> np.ndarray:
    n = frobenius_norm(x)
    return x if n == 0 else x * (norm / n)


def _columns_to_w_out(cols: np.ndarray, out_unit_shape: tuple) -> np.ndarray:
    """(prod(out_unit_shape), k) columns -> (out_features, k, *spatial)."""
    k = cols.shape[1]
    blocks = cols.T.reshape(k, *out_unit_shape)
    return np.ascontiguousarray(np.moveaxis(blocks, 0, 1))


def _w_out_to_columns(w_out: np.ndarray) -> np.ndarray:
    return np.moveaxis(w_out, 1, 0).reshape(w_out.shape[1], -1).T


def gradmax_objective(w_out: np.ndarray, cg: CrossGradient) -> float:
    """Squared norm of the incoming-weight gradient ``||W_out^T G||_F^2``."""
    p = _w_out_to_columns(w_out).T @ cg.matrix
    return float(np.sum(p * p))


def init_gradmax(cg: CrossGradient, k: int, c: float, epsilon: float = 0.0,
                 rng: np.random.Generator | None = None) -> InitResult:
    """Outgoing weights from the top-k left singular vectors of the cross-gradient.

    Column i is ``sigma_i * u_i`` scaled so the block has Frobenius norm ``c``.
    The incoming side is zero, or random with norm ``epsilon`` when it is > 0.
    """
    rows, cols = cg.matrix.shape
    if not 1 <= k <= min(rows, cols):
        raise DimensionError(f"k={k} outside [1, {min(rows, cols)}]")
    svd = svd_topk(cg.matrix, k)
    s = svd.singular_values
    s_norm = float(np.linalg.norm(s))
    if s_norm > 0:
        w_cols = svd.left_vectors * (s * (c / s_norm))
    else:
        w_cols = svd.left_vectors * (c / np.sqrt(k))
    w_out = _columns_to_w_out(w_cols, cg.out_unit_shape)
    if epsilon > 0:
        rng = rng if rng is not None else np.random.default_rng(0)
        w_in = _rescaled_normal((k, *cg.in_unit_shape), epsilon, rng)
    else:
        w_in = np.zeros((k, *cg.in_unit_shape))
    return InitResult(w_in, w_out, gradmax_objective(w_out, cg), s.copy())


def init_random(in_unit_shape, out_unit_shape, k: int, c: float, epsilon: float = 0.0,
                direction: str = "incoming_zero",
                rng: np.random.Generator | None = None) -> InitResult:
    rng = rng if rng is not None else np.random.default_rng()
    out_shape = (out_unit_shape[0], k, *out_unit_shape[1:])
    in_shape = (k, *in_unit_shape)
    if direction == "incoming_zero":
        w_out = _rescaled_normal(out_shape, c, rng)
        w_in = _rescaled_normal(in_shape, epsilon, rng)
    elif direction == "outgoing_zero":
        w_in = _rescaled_normal(in_shape, c, rng)
        w_out = _rescaled_normal(out_shape, epsilon, rng)
    else:
        raise ValueError(f"unknown direction {direction!r}")
    return InitResult(w_in, w_out)


def init_zero_unit_bias(net: Network, layer: int, k: int) -> InitResult:
    """Both sides zero; the new neurons get bias 1 so their activation is f(1)."""
    if net.layers[layer].bias is None:
        raise StateError(f"layer {layer} has no bias; zero/unit-bias growth needs one")
    in_shape, out_shape = unit_shapes(net, layer)
    return InitResult(np.zeros((k, *in_shape)), np.zeros((out_shape[0], k, *out_shape[1:])),
                      bias=np.ones(k))


def _ascend_norm_constrained(x0, grad_fn, c, steps, lr):
    """Adam ascent with projection back onto ``||x||_F = c`` after every step."""
    x = _rescale(x0, c)
    state = None
    for _ in range(steps):
        g = grad_fn(x)
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite gradient during norm-constrained ascent")
        x, state = adam_step(x, -g, state, lr)
        x = _rescale(x, c)
    return x


def _new_unit_branch(net: Network, layer: int, w_in: np.ndarray) -> Network:
    """Layers computing h_new from the input of ``layer`` (new units only)."""
    src = net.layers[layer]
    j = net.next_weighted(layer)
    if src.kind == "dense":
        layers = [Dense(w_in, None, src.activation, name="new")]
    else:
        layers = [Conv2D(w_in, None, src.activation, src.stride, src.padding, name="new")]
    for m in range(layer + 1, j):
        bn = net.layers[m]
        layers.append(BatchNorm.fresh(w_in.shape[0], eps=bn.eps, activation=bn.activation, name=f"bn{m}"))
    return Network(layers)


def init_gradmax_opt(net: Network, layer: int, k: int, c: float, batch, targets,
                     direction: str = "incoming_zero", epsilon: float = 0.0,
                     rng: np.random.Generator | None = None, steps: int = GRADMAX_OPT_STEPS,
                     lr: float = GRADMAX_OPT_LR, cg: CrossGradient | None = None) -> InitResult:
    """Maximize the new-weight gradient norm by projected Adam ascent.

    ``incoming_zero``: free outgoing weights, objective ``||W_out^T G||^2``.
    ``outgoing_zero``: free incoming weights, objective ``||dL/dW_out_new||^2``
    evaluated through the real activation (and any batch norm) of the layer.
    """
    rng = rng if rng is not None else np.random.default_rng()
    in_shape, out_shape = unit_shapes(net, layer)
    j = net.next_weighted(layer)
    if direction == "incoming_zero":
        if cg is None:
            cg = cross_gradient(net, layer, batch, targets)
        m = cg.matrix
        mmt = m @ m.T
        w0 = rng.standard_normal((out_shape[0], k, *out_shape[1:]))

        def grad(w_out):
            cols = _w_out_to_columns(w_out)
            return _columns_to_w_out(2.0 * mmt @ cols, out_shape)

        w_out = _ascend_norm_constrained(w0, grad, c, steps, lr)
        w_in = _rescaled_normal((k, *in_shape), epsilon, rng)
        return InitResult(w_in, w_out, gradmax_objective(w_out, cg))

    if direction != "outgoing_zero":
        raise ValueError(f"unknown direction {direction!r}")
    out, cache = net.forward(batch)
    _, dout = F.squared_loss(out, np.asarray(targets, dtype=np.float64))
    gs = net.backward(cache, dout)
    h_src = cache.hs[layer]
    delta = gs.deltas[j]
    tgt = net.layers[j]

    def outgoing_grad(a):
        if tgt.kind == "dense":
            return delta @ a.T
        kk = tgt.kernel
        return F.conv2d_weight_grad(a, delta, kk, kk, tgt.stride, tgt.padding)

    def objective_and_grad(w_in):
        branch = _new_unit_branch(net, layer, w_in)
        a, bcache = branch.forward(h_src)
        p = outgoing_grad(a)
        if tgt.kind == "dense":
            da = 2.0 * (p.T @ delta)
        else:
            da = 2.0 * F.conv2d_input_grad(delta, p, a.shape[2:], tgt.stride, tgt.padding)
        bg = branch.backward(bcache, da)
        return float(np.sum(p * p)), bg.grads[0]["weight"]

    w0 = rng.standard_normal((k, *in_shape))
    w_in = _ascend_norm_constrained(w0, lambda w: objective_and_grad(w)[1], c, steps, lr)
    obj = objective_and_grad(w_in)[0]
    w_out = _rescaled_normal((out_shape[0], k, *out_shape[1:]), epsilon, rng)
    return InitResult(w_in, w_out, obj)


def init_firefly_opt(net: Network, layer: int, k: int, epsilon: float, batch, targets,
                     steps: int = FIREFLY_STEPS, lr: float = FIREFLY_LR, c: float | None = None,
                     rng: np.random.Generator | None = None) -> InitResult:
    """Train small random new neurons on the batch loss with the rest of the net frozen.

    Both sides start with norm ``epsilon``. After training the incoming side is
    rescaled to ``c`` and, for positively homogeneous activations, the
    outgoing side by the inverse factor so the trained function is kept.
    """
    if not epsilon > 0:
        raise PreconditionError("FireflyOpt needs epsilon > 0 so outgoing weights receive gradient")
    rng = rng if rng is not None else np.random.default_rng()
    in_shape, out_shape = unit_shapes(net, layer)
    j = net.next_weighted(layer)
    w_in = _rescaled_normal((k, *in_shape), epsilon, rng)
    w_out = _rescaled_normal((out_shape[0], k, *out_shape[1:]), epsilon, rng)
    n_in = net.layers[layer].weight.shape[0]
    n_out = net.layers[j].weight.shape[1]
    s_in = s_out = None
    for _ in range(steps):
        grown = grow_neurons(net, layer, InitResult(w_in, w_out))
        gs = grown.loss_and_grads(batch, targets)
        if not np.isfinite(gs.loss):
            raise NumericError("non-finite loss while training FireflyOpt candidates")
        g_in = gs.grads[layer]["weight"][n_in:]
        g_out = gs.grads[j]["weight"][:, n_out:]
        w_in, s_in = adam_step(w_in, g_in, s_in, lr)
        w_out, s_out = adam_step(w_out, g_out, s_out, lr)
    if c is not None and steps > 0:
        n = frobenius_norm(w_in)
        if n > 0:
            factor = c / n
            w_in = w_in * factor
            if F.is_positively_homogeneous(net.layers[layer].activation) and j == layer + 1:
                w_out = w_out / factor
    return InitResult(w_in, w_out)
