"""Cross-gradient capture through a temporary zero auxiliary link.

For growth at layer ``i`` with next weighted layer ``j`` the auxiliary weight
connects the input of layer ``i`` straight to the pre-activation of layer
``j``. Its gradient is ``sum_n dL/dz_j h_{i-1}^T`` for dense layers and a conv
filter bank of size ``k_i + k_j - 1`` for convolutions.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import DimensionError
from .network import AuxLink, Network


@dataclass
class CrossGradient:
    kind: str  # "dense" or "conv"
    aux: np.ndarray  # raw aux-weight gradient; conv layout (o, i, kh, kw)
    matrix: np.ndarray  # the matrix whose left singular vectors give new outgoing weights
    in_unit_shape: tuple  # shape of one new neuron's incoming weights
    out_unit_shape: tuple  # (out_features, *spatial) of one new neuron's outgoing weights
    source: int  # activation index feeding the new neurons
    target: int  # layer index receiving them

    def is_zero(self) -> bool:
        return not np.any(self.matrix)


def aux_shape(net: Network, source: int, target: int):
    """Shape and padding of the zero auxiliary weight for a source/target pair."""
    tgt = net.layers[target]
    if tgt.kind == "dense":
        return (tgt.out_features, net.layers[source].in_features), 0
    first = net.layers[source]
    if first.kind != "conv2d" or tgt.kind != "conv2d":
        raise DimensionError("conv aux link needs conv layers at both ends")
    if first.stride != 1 or tgt.stride != 1:
        raise DimensionError("conv cross-gradient requires stride 1 on both layers")
    k = first.kernel + tgt.kernel - 1
    return (tgt.out_features, first.in_features, k, k), first.padding + tgt.padding


def zero_aux(net: Network, layer: int) -> AuxLink:
    if layer not in net.growable():
        raise IndexError(f"layer {layer} is not growable (growable: {net.growable()})")
    j = net.next_weighted(layer)
    shape, pad = aux_shape(net, layer, j)
    return AuxLink(layer, j, np.zeros(shape), pad)


def im2col_reshape(aux_grad: np.ndarray, out_kernel: tuple[int, int],
                   in_kernel: tuple[int, int]) -> np.ndarray:
    """Patch matrix ``M`` of shape (o*h_out*w_out, i*h_in*w_in).

    ``M[(o,u,v), (c,a,b)] = G[o, c, u+a, v+b]`` so that for outgoing filters
    ``W`` (o, k, h_out, w_out) flattened to columns, ``W_flat^T M`` is the
    incoming-weight gradient of the new filters.
    """
    g = np.asarray(aux_grad, dtype=np.float64)
    if g.ndim != 4:
        raise DimensionError(f"conv cross-gradient must be 4D, got {g.shape}")
    ho, wo = out_kernel
    hi, wi = in_kernel
    if g.shape[2] != ho + hi - 1 or g.shape[3] != wo + wi - 1:
        raise DimensionError(
            f"aux spatial size {g.shape[2:]} != ({ho}+{hi}-1, {wo}+{wi}-1)")
    o, c = g.shape[:2]
    win = sliding_window_view(g, (hi, wi), axis=(2, 3))  # (o, c, ho, wo, hi, wi)
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5).reshape(o * ho * wo, c * hi * wi))


def build_cross_gradient(net: Network, layer: int, aux_grad: np.ndarray) -> CrossGradient:
    j = net.next_weighted(layer)
    src, tgt = net.layers[layer], net.layers[j]
    if tgt.kind == "dense":
        return CrossGradient("dense", aux_grad, aux_grad, (src.in_features,),
                             (tgt.out_features,), layer, j)
    m = im2col_reshape(aux_grad, tgt.weight.shape[2:], src.weight.shape[2:])
    return CrossGradient("conv", aux_grad, m, tuple(src.weight.shape[1:]),
                         (tgt.out_features, *tgt.weight.shape[2:]), layer, j)


def cross_gradient(net: Network, layer: int, batch, targets) -> CrossGradient:
    """Gradient of the batch-mean loss w.r.t. a zero aux weight bypassing ``layer``."""
    aux = zero_aux(net, layer)
    gs = net.loss_and_grads(batch, targets, aux)
    return build_cross_gradient(net, layer, gs.aux_grad)


def cross_gradient_from_signals(net: Network, layer: int, hs, deltas) -> CrossGradient:
    """Same quantity from an existing forward cache and backward deltas (dense only)."""
    j = net.next_weighted(layer)
    if net.layers[j].kind != "dense":
        raise DimensionError("signal shortcut only implemented for dense layers")
    return build_cross_gradient(net, layer, deltas[j] @ hs[layer].T)
