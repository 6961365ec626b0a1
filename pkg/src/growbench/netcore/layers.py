"""Layer types: dense, 2D convolution and batch normalization.

Every layer computes a pre-activation ``z`` from its input and then applies
its activation. Dense activations are laid out ``(features, batch)``; conv
and conv-BN activations are ``(batch, channels, height, width)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionError, StateError
from . import functional as F


@dataclass
class Dense:
    """``z = W h (+ S h_prev) (+ b)``.

    ``skip`` is only set on the layer that follows an inserted layer: it keeps
    the original direct connection from the inserted layer's input.
    """

    weight: np.ndarray
    bias: np.ndarray | None = None
    activation: str = "relu0"
    skip: np.ndarray | None = None
    name: str = ""
    kind: str = field(default="dense", init=False)

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        if self.weight.ndim != 2:
            raise DimensionError(f"dense weight must be 2D, got {self.weight.shape}")
        if self.bias is not None:
            self.bias = np.asarray(self.bias, dtype=np.float64).reshape(-1)
            if self.bias.shape[0] != self.weight.shape[0]:
                raise DimensionError("bias length must equal output width")
        if self.skip is not None:
            self.skip = np.asarray(self.skip, dtype=np.float64)
            if self.skip.ndim != 2 or self.skip.shape[0] != self.weight.shape[0]:
                raise DimensionError("skip weight rows must equal output width")
        if self.activation not in F.ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def in_features(self) -> int:
        return self.weight.shape[1]

    @property
    def out_features(self) -> int:
        return self.weight.shape[0]

    def params(self) -> dict[str, np.ndarray]:
        p = {"weight": self.weight}
        if self.bias is not None:
            p["bias"] = self.bias
        if self.skip is not None:
            p["skip"] = self.skip
        return p

    def preact(self, x, x_skip=None):
        if x.ndim != 2 or x.shape[0] != self.in_features:
            raise DimensionError(f"{self.name}: expected ({self.in_features}, N) input, got {x.shape}")
        z = self.weight @ x
        if self.skip is not None:
            z = z + self.skip @ x_skip
        if self.bias is not None:
            z = z + self.bias[:, None]
        return z, None

    def backward_preact(self, dz, x, x_skip, ctx):
        grads = {"weight": dz @ x.T}
        if self.bias is not None:
            grads["bias"] = dz.sum(axis=1)
        dx_skip = None
        if self.skip is not None:
            grads["skip"] = dz @ x_skip.T
            dx_skip = self.skip.T @ dz
        return self.weight.T @ dz, dx_skip, grads

    def macs(self, in_shape) -> int:
        n = self.weight.size
        if self.skip is not None:
            n += self.skip.size
        return n

    def output_shape(self, in_shape):
        return (self.out_features,)


@dataclass
class Conv2D:
    """Convolution with filters ``(out_channels, in_channels, kh, kw)``."""

    weight: np.ndarray
    bias: np.ndarray | None = None
    activation: str = "relu0"
    stride: int = 1
    padding: int | str = "same"
    name: str = ""
    kind: str = field(default="conv2d", init=False)

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        if self.weight.ndim != 4:
            raise DimensionError(f"conv weight must be 4D, got {self.weight.shape}")
        kh, kw = self.weight.shape[2:]
        if kh != kw:
            raise DimensionError("only square filters are supported")
        self.padding = F.resolve_padding(self.padding, kh)
        self.stride = int(self.stride)
        if self.stride < 1:
            raise DimensionError("stride must be >= 1")
        if self.bias is not None:
            self.bias = np.asarray(self.bias, dtype=np.float64).reshape(-1)
            if self.bias.shape[0] != self.weight.shape[0]:
                raise DimensionError("bias length must equal output channels")
        if self.activation not in F.ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def in_features(self) -> int:
        return self.weight.shape[1]

    @property
    def out_features(self) -> int:
        return self.weight.shape[0]

    @property
    def kernel(self) -> int:
        return self.weight.shape[2]

    def params(self) -> dict[str, np.ndarray]:
        p = {"weight": self.weight}
        if self.bias is not None:
            p["bias"] = self.bias
        return p

    def preact(self, x, x_skip=None):
        if x.ndim != 4 or x.shape[1] != self.in_features:
            raise DimensionError(f"{self.name}: expected (N, {self.in_features}, H, W) input, got {x.shape}")
        z = F.conv2d(x, self.weight, self.stride, self.padding)
        if self.bias is not None:
            z = z + self.bias[None, :, None, None]
        return z, None

    def backward_preact(self, dz, x, x_skip, ctx):
        k = self.kernel
        grads = {"weight": F.conv2d_weight_grad(x, dz, k, k, self.stride, self.padding)}
        if self.bias is not None:
            grads["bias"] = dz.sum(axis=(0, 2, 3))
        dx = F.conv2d_input_grad(dz, self.weight, x.shape[2:], self.stride, self.padding)
        return dx, None, grads

    def output_shape(self, in_shape):
        _, h, w = in_shape
        k = self.kernel
        return (self.out_features,
                F.conv_output_size(h, k, self.stride, self.padding),
                F.conv_output_size(w, k, self.stride, self.padding))

    def macs(self, in_shape) -> int:
        _, ho, wo = self.output_shape(in_shape)
        return self.weight.size * ho * wo


@dataclass
class BatchNorm:
    """Per-feature (or per-channel) normalization with batch statistics."""

    gamma: np.ndarray
    beta: np.ndarray
    eps: float = 1e-5
    activation: str = "identity"
    name: str = ""
    kind: str = field(default="batchnorm", init=False)

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=np.float64).reshape(-1)
        self.beta = np.asarray(self.beta, dtype=np.float64).reshape(-1)
        if self.gamma.shape != self.beta.shape:
            raise DimensionError("gamma and beta must have the same length")
        if not self.eps > 0:
            raise ValueError("eps must be > 0")
        if self.activation not in F.ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @classmethod
    def fresh(cls, features: int, **kw) -> "BatchNorm":
        return cls(np.ones(features), np.zeros(features), **kw)

    @property
    def in_features(self) -> int:
        return self.gamma.shape[0]

    out_features = in_features

    def params(self) -> dict[str, np.ndarray]:
        return {"gamma": self.gamma, "beta": self.beta}

    @staticmethod
    def _axes(x):
        return (1,) if x.ndim == 2 else (0, 2, 3)

    def _bcast(self, v, x):
        return v[:, None] if x.ndim == 2 else v[None, :, None, None]

    def preact(self, x, x_skip=None):
        feat_axis = 0 if x.ndim == 2 else 1
        if x.shape[feat_axis] != self.in_features:
            raise DimensionError(f"{self.name}: expected {self.in_features} features, got {x.shape}")
        axes = self._axes(x)
        count = int(np.prod([x.shape[a] for a in axes]))
        if count < 2:
            raise StateError("batch norm needs at least 2 values per feature")
        mu = x.mean(axis=axes, keepdims=True)
        xc = x - mu
        var = (xc * xc).mean(axis=axes, keepdims=True)
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = xc * inv_std
        z = self._bcast(self.gamma, x) * xhat + self._bcast(self.beta, x)
        return z, (xhat, inv_std)

    def backward_preact(self, dz, x, x_skip, ctx):
        xhat, inv_std = ctx
        axes = self._axes(x)
        grads = {"gamma": (dz * xhat).sum(axis=axes), "beta": dz.sum(axis=axes)}
        dxhat = dz * self._bcast(self.gamma, x)
        dx = inv_std * (dxhat - dxhat.mean(axis=axes, keepdims=True)
                        - xhat * (dxhat * xhat).mean(axis=axes, keepdims=True))
        return dx, None, grads

    def output_shape(self, in_shape):
        return tuple(in_shape)

    def macs(self, in_shape) -> int:
        return int(np.prod(in_shape))


Layer = Dense | Conv2D | BatchNorm
