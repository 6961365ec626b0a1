"""Structural growth: widening a layer and inserting a new one."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionError, StateError
from ..netcore.layers import Dense
from ..netcore.network import Network


@dataclass
class InitResult:
    """Weights for ``k`` new neurons.

    ``w_in`` has shape ``(k, *in_unit_shape)``; ``w_out`` has shape
    ``(out_features, k, *spatial)``. ``objective`` is the squared gradient norm
    the initializer achieved on its own objective, when it has one.
    """

    w_in: np.ndarray
    w_out: np.ndarray
    objective: float | None = None
    singular_values: np.ndarray | None = None
    bias: np.ndarray | None = None

    @property
    def k(self) -> int:
        return self.w_in.shape[0]


def unit_shapes(net: Network, layer: int) -> tuple[tuple, tuple]:
    """(incoming shape of one neuron, (out_features, *spatial) of its outgoing weights)."""
    if layer not in net.growable():
        raise IndexError(f"layer {layer} is not growable (growable: {net.growable()})")
    src = net.layers[layer]
    tgt = net.layers[net.next_weighted(layer)]
    return tuple(src.weight.shape[1:]), (tgt.out_features, *tgt.weight.shape[2:])


def grow_neurons(net: Network, layer: int, init: InitResult) -> Network:
    """Return a copy of ``net`` with ``init.k`` neurons appended to ``layer``.

    Existing weights are copied unchanged; new incoming rows go after the
    existing rows of ``layer`` and new outgoing columns after the existing
    columns of the next weighted layer. Batch-norm layers in between get
    ``gamma=1, beta=0`` for the new features.
    """
    in_shape, out_shape = unit_shapes(net, layer)
    k = init.k
    if tuple(init.w_in.shape[1:]) != in_shape:
        raise DimensionError(f"incoming block {init.w_in.shape} does not fit {in_shape}")
    if init.w_out.shape[1] != k or (init.w_out.shape[0], *init.w_out.shape[2:]) != out_shape:
        raise DimensionError(f"outgoing block {init.w_out.shape} does not fit {out_shape} with k={k}")
    j = net.next_weighted(layer)
    new = net.copy()
    src = new.layers[layer]
    src.weight = np.concatenate([src.weight, init.w_in], axis=0)
    if src.bias is not None:
        extra = init.bias if init.bias is not None else np.zeros(k)
        src.bias = np.concatenate([src.bias, extra])
    elif init.bias is not None and np.any(init.bias):
        raise StateError(f"layer {layer} has no bias but the initializer set one")
    if getattr(src, "skip", None) is not None:
        src.skip = np.concatenate([src.skip, np.zeros((k, src.skip.shape[1]))], axis=0)
    for m in range(layer + 1, j):
        bn = new.layers[m]
        bn.gamma = np.concatenate([bn.gamma, np.ones(k)])
        bn.beta = np.concatenate([bn.beta, np.zeros(k)])
    tgt = new.layers[j]
    tgt.weight = np.concatenate([tgt.weight, init.w_out], axis=1)
    # skips reading any widened activation get zero columns
    for m, l in enumerate(new.layers):
        if getattr(l, "skip", None) is not None and layer <= m - 2 < j:
            l.skip = np.concatenate([l.skip, np.zeros((l.skip.shape[0], k))], axis=1)
    return new


def insertion_shapes(net: Network, after: int) -> tuple[tuple, tuple]:
    nxt = after + 1
    if not -1 <= after < len(net.layers) - 1:
        raise IndexError(f"cannot insert after layer {after}")
    layer = net.layers[nxt]
    if layer.kind != "dense":
        raise IndexError("layers can only be inserted before a dense layer")
    return (layer.in_features,), (layer.out_features,)


def grow_layer(net: Network, after: int, init: InitResult, activation: str = "relu0") -> Network:
    """Insert a dense layer of width ``init.k`` between ``after`` and ``after + 1``.

    The new layer reads the same activation as layer ``after + 1`` and writes
    into its pre-activation; the old direct weights are kept as that layer's
    ``skip`` connection. ``after=-1`` inserts right after the input.
    """
    in_shape, out_shape = insertion_shapes(net, after)
    if tuple(init.w_in.shape[1:]) != in_shape or init.w_out.shape != (out_shape[0], init.k):
        raise DimensionError("initializer blocks do not fit the insertion point")
    nxt = after + 1
    old = net.layers[nxt]
    if old.skip is not None:
        raise StateError(f"layer {nxt} already has a skip connection")
    if nxt + 1 < len(net.layers) and getattr(net.layers[nxt + 1], "skip", None) is not None:
        raise StateError(f"layer {nxt + 1} has a skip connection that insertion would break")
    new = net.copy()
    inserted = Dense(init.w_in.copy(), init.bias.copy() if init.bias is not None else None,
                     activation, name=new.new_layer_name())
    nl = new.layers[nxt]
    nl.skip = nl.weight
    nl.weight = init.w_out.copy()
    new.layers.insert(nxt, inserted)
    return Network(new.layers)
