"""Dispatch from a growth event to an initializer and the structural change."""
from __future__ import annotations

import numpy as np

from ..netcore.crossgrad import CrossGradient, cross_gradient
from ..netcore.network import AuxLink, Network
from ..linalg import svd_topk
from .init import (init_firefly_opt, init_gradmax, init_gradmax_opt, init_random,
                   init_zero_unit_bias)
from .mechanics import InitResult, grow_layer, grow_neurons, insertion_shapes, unit_shapes
from .plan import GrowthEvent, target_norm


def event_norm(net: Network, event: GrowthEvent) -> float:
    if event.insert:
        # no existing neurons yet: use the rows of the layer reading the same input
        return target_norm(event.norm_policy, net.layers[event.layer + 1].weight, event.k)
    return target_norm(event.norm_policy, net.layers[event.layer].weight, event.k)


def insertion_cross_gradient(net: Network, after: int, batch, targets) -> CrossGradient:
    """Cross-gradient for a layer inserted after ``after``: the direct weight's gradient."""
    in_shape, out_shape = insertion_shapes(net, after)
    nxt = after + 1
    gs = net.loss_and_grads(batch, targets, AuxLink(nxt, nxt, np.zeros((out_shape[0], in_shape[0]))))
    return CrossGradient("dense", gs.aux_grad, gs.aux_grad, in_shape, out_shape, nxt, nxt)


def initialize(net: Network, event: GrowthEvent, batch, targets, rng: np.random.Generator,
               cg: CrossGradient | None = None, c: float | None = None,
               opt_steps: int | None = None, opt_lr: float | None = None,
               firefly_steps: int | None = None, firefly_lr: float | None = None) -> InitResult:
    """Compute new-neuron weights for ``event`` on the current network."""
    c = event_norm(net, event) if c is None else c
    k, eps = event.k, event.epsilon
    if event.insert:
        in_shape, out_shape = insertion_shapes(net, event.layer)
        if event.method in ("GradMax", "GradMaxOpt") and cg is None:
            cg = insertion_cross_gradient(net, event.layer, batch, targets)
        if event.method == "GradMax":
            return init_gradmax(cg, k, c, eps, rng)
        if event.method == "Random":
            return init_random(in_shape, out_shape, k, c, eps, event.direction, rng)
        raise ValueError(f"layer insertion supports GradMax and Random, not {event.method}")

    if event.method == "GradMax":
        if cg is None:
            cg = cross_gradient(net, event.layer, batch, targets)
        return init_gradmax(cg, k, c, eps, rng)
    if event.method == "GradMaxOpt":
        kw = {}
        if opt_steps is not None:
            kw["steps"] = opt_steps
        if opt_lr is not None:
            kw["lr"] = opt_lr
        return init_gradmax_opt(net, event.layer, k, c, batch, targets, event.direction,
                                eps, rng, cg=cg if event.direction == "incoming_zero" else None, **kw)
    if event.method == "Random":
        in_shape, out_shape = unit_shapes(net, event.layer)
        return init_random(in_shape, out_shape, k, c, eps, event.direction, rng)
    if event.method == "FireflyOpt":
        kw = {}
        if firefly_steps is not None:
            kw["steps"] = firefly_steps
        if firefly_lr is not None:
            kw["lr"] = firefly_lr
        return init_firefly_opt(net, event.layer, k, eps, batch, targets, c=c, rng=rng, **kw)
    if event.method == "ZeroUnitBias":
        return init_zero_unit_bias(net, event.layer, k)
    raise ValueError(f"unknown method {event.method!r}")


def apply_growth(net: Network, event: GrowthEvent, init: InitResult) -> Network:
    if event.insert:
        return grow_layer(net, event.layer, init)
    return grow_neurons(net, event.layer, init)


def growth_signal(net: Network, batch, targets, k: int = 1) -> dict[int, np.ndarray]:
    """Top-k singular values of the cross-gradient at every growable layer."""
    out = {}
    for layer in net.growable():
        cg = cross_gradient(net, layer, batch, targets)
        kk = min(k, *cg.matrix.shape)
        out[layer] = svd_topk(cg.matrix, kk).singular_values
    return out
