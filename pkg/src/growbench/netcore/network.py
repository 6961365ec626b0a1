"""Sequential network with reverse-mode gradients and auxiliary links."""
from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionError, StateError
from . import functional as F
from .layers import BatchNorm, Conv2D, Dense


@dataclass
class AuxLink:
    """Zero-initialised shortcut ``z[target] += W_aux * h[source]``.

    ``source`` indexes activations (``h[0]`` is the network input, ``h[i+1]``
    the output of layer ``i``); ``target`` indexes layers. For conv networks
    ``weight`` is a filter bank applied with ``padding``.
    """

    source: int
    target: int
    weight: np.ndarray
    padding: int = 0

    def apply(self, h):
        if self.weight.ndim == 2:
            return self.weight @ h
        return F.conv2d(h, self.weight, 1, self.padding)


@dataclass
class ForwardCache:
    zs: list
    hs: list
    ctxs: list
    signature: tuple
    aux: AuxLink | None = None

    @property
    def batch_size(self) -> int:
        x = self.hs[0]
        return x.shape[1] if x.ndim == 2 else x.shape[0]


@dataclass
class GradientSet:
    grads: list  # one dict per layer, keyed like Layer.params()
    deltas: list  # dL/dz for every layer
    loss: float | None = None
    aux_grad: np.ndarray | None = None
    input_grad: np.ndarray | None = None

    def flat_norm(self) -> float:
        total = 0.0
        for g in self.grads:
            for v in g.values():
                total += float(np.sum(v * v))
        return float(np.sqrt(total))

    def scaled(self, factor: float) -> "GradientSet":
        return GradientSet(
            [{k: v * factor for k, v in g.items()} for g in self.grads],
            [d * factor for d in self.deltas],
            None if self.loss is None else self.loss * factor,
        )


@dataclass
class Network:
    layers: list = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for i, layer in enumerate(self.layers):
            if not layer.name:
                layer.name = f"L{i}"
            if layer.name in seen:
                raise ValueError(f"duplicate layer name {layer.name!r}")
            seen.add(layer.name)
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_features != b.in_features:
                raise DimensionError(
                    f"{a.name} outputs {a.out_features} but {b.name} expects {b.in_features}")
        for i, layer in enumerate(self.layers):
            if getattr(layer, "skip", None) is not None:
                prev_in = self.layers[i - 1].in_features if i >= 1 else None
                if prev_in != layer.skip.shape[1]:
                    raise DimensionError(f"{layer.name}: skip width does not match its source")

    def __len__(self):
        return len(self.layers)

    def copy(self) -> "Network":
        """Independent copy: layer objects and their arrays are duplicated."""
        layers = []
        for layer in self.layers:
            dup = copy.copy(layer)
            for key, val in vars(dup).items():
                if isinstance(val, np.ndarray):
                    setattr(dup, key, val.copy())
            layers.append(dup)
        new = copy.copy(self)
        new.layers = layers
        return new

    def signature(self) -> tuple:
        return tuple((l.name, l.kind, tuple(p.shape for p in l.params().values())) for l in self.layers)

    def new_layer_name(self) -> str:
        used = {l.name for l in self.layers}
        i = len(self.layers)
        while f"L{i}" in used:
            i += 1
        return f"L{i}"

    # structure helpers -------------------------------------------------
    def is_weighted(self, i: int) -> bool:
        return self.layers[i].kind in ("dense", "conv2d")

    def next_weighted(self, i: int) -> int:
        for j in range(i + 1, len(self.layers)):
            if self.is_weighted(j):
                return j
        raise IndexError(f"no weighted layer after layer {i}")

    def growable(self) -> list[int]:
        """Weighted layers that have a weighted successor."""
        out = []
        for i in range(len(self.layers)):
            if self.is_weighted(i):
                try:
                    self.next_weighted(i)
                except IndexError:
                    continue
                out.append(i)
        return out

    def widths(self) -> list[int]:
        return [l.out_features for l in self.layers if l.kind != "batchnorm"]

    def n_params(self) -> int:
        return sum(p.size for l in self.layers for p in l.params().values())

    def macs_per_sample(self, input_shape) -> int:
        shape = tuple(input_shape)
        total = 0
        for l in self.layers:
            total += l.macs(shape)
            shape = l.output_shape(shape)
        return total

    # passes ------------------------------------------------------------
    def forward(self, x, aux: AuxLink | None = None):
        x = np.asarray(x, dtype=np.float64)
        if aux is not None and not (0 <= aux.source <= aux.target < len(self.layers)):
            raise IndexError("aux link out of range")
        hs = [x]
        zs, ctxs = [], []
        for i, layer in enumerate(self.layers):
            x_skip = hs[i - 1] if getattr(layer, "skip", None) is not None else None
            z, ctx = layer.preact(hs[i], x_skip)
            if aux is not None and aux.target == i:
                z = z + aux.apply(hs[aux.source])
            zs.append(z)
            ctxs.append(ctx)
            hs.append(F.activate(layer.activation, z))
        return hs[-1], ForwardCache(zs, hs, ctxs, self.signature(), aux)

    def backward(self, cache: ForwardCache, loss_grad) -> GradientSet:
        if cache.signature != self.signature():
            raise StateError("forward cache was produced by a different network")
        n = len(self.layers)
        pending = [None] * (n + 1)
        pending[n] = np.asarray(loss_grad, dtype=np.float64)
        if pending[n].shape != cache.hs[-1].shape:
            raise DimensionError("loss gradient shape does not match outputs")
        grads = [None] * n
        deltas = [None] * n
        aux_grad = None
        aux = cache.aux
        for i in range(n - 1, -1, -1):
            layer = self.layers[i]
            dh = pending[i + 1]
            if dh is None:
                dh = np.zeros_like(cache.hs[i + 1])
            dz = dh * F.activate_grad(layer.activation, cache.zs[i])
            deltas[i] = dz
            x_skip = cache.hs[i - 1] if getattr(layer, "skip", None) is not None else None
            dx, dx_skip, grads[i] = layer.backward_preact(dz, cache.hs[i], x_skip, cache.ctxs[i])
            pending[i] = dx if pending[i] is None else pending[i] + dx
            if dx_skip is not None:
                pending[i - 1] = dx_skip if pending[i - 1] is None else pending[i - 1] + dx_skip
            if aux is not None and aux.target == i:
                aux_grad = _aux_weight_grad(aux, cache.hs[aux.source], dz)
                src = aux.source
                back = _aux_input_grad(aux, dz, cache.hs[src])
                pending[src] = back if pending[src] is None else pending[src] + back
        return GradientSet(grads, deltas, aux_grad=aux_grad, input_grad=pending[0])

    def loss_and_grads(self, x, targets, aux: AuxLink | None = None) -> GradientSet:
        out, cache = self.forward(x, aux)
        loss, dout = F.squared_loss(out, np.asarray(targets, dtype=np.float64))
        gs = self.backward(cache, dout)
        gs.loss = loss
        return gs

    def loss(self, x, targets) -> float:
        out, _ = self.forward(x)
        return F.squared_loss(out, np.asarray(targets, dtype=np.float64))[0]


def _aux_weight_grad(aux: AuxLink, h, dz):
    if aux.weight.ndim == 2:
        return dz @ h.T
    k = aux.weight.shape[2]
    return F.conv2d_weight_grad(h, dz, k, k, 1, aux.padding)


def _aux_input_grad(aux: AuxLink, dz, h):
    if aux.weight.ndim == 2:
        return aux.weight.T @ dz
    return F.conv2d_input_grad(dz, aux.weight, h.shape[2:], 1, aux.padding)


def forward(net: Network, batch, aux: AuxLink | None = None):
    return net.forward(batch, aux)


def backward(net: Network, cache: ForwardCache, loss_grad) -> GradientSet:
    return net.backward(cache, loss_grad)


def dense_mlp(widths, rng: np.random.Generator, activation: str = "relu0",
              out_activation: str = "identity", init: str = "glorot",
              bias: bool = False, bias_layers=None) -> Network:
    """Fully connected network ``widths[0] -> ... -> widths[-1]``.

    ``init`` is ``"glorot"`` (uniform, limit sqrt(6/(fan_in+fan_out))) or
    ``"uniform"`` (entries in [-1, 1]).
    """
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        if init == "glorot":
            limit = np.sqrt(6.0 / (fan_in + fan_out))
        elif init == "uniform":
            limit = 1.0
        else:
            raise ValueError(f"unknown init {init!r}")
        w = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        last = i == len(widths) - 2
        with_bias = bias if bias_layers is None else i in bias_layers
        layers.append(Dense(w, np.zeros(fan_out) if with_bias else None,
                            out_activation if last else activation, name=f"L{i}"))
    return Network(layers)


def conv_net(channels, kernel: int, rng: np.random.Generator, activation: str = "relu0",
             out_activation: str = "identity", batchnorm_after=()) -> Network:
    """Stack of SAME-padded stride-1 convolutions (He-uniform init)."""
    layers = []
    for i, (cin, cout) in enumerate(zip(channels[:-1], channels[1:])):
        limit = np.sqrt(6.0 / (cin * kernel * kernel))
        w = rng.uniform(-limit, limit, size=(cout, cin, kernel, kernel))
        last = i == len(channels) - 2
        if i in batchnorm_after:
            layers.append(Conv2D(w, activation="identity", name=f"C{i}"))
            layers.append(BatchNorm.fresh(cout, activation=activation, name=f"BN{i}"))
        else:
            layers.append(Conv2D(w, activation=out_activation if last else activation, name=f"C{i}"))
    return Network(layers)
