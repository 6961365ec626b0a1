"""Stateless numeric kernels: activations, 2D convolution and the squared loss."""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import DimensionError

ACTIVATIONS = ("relu0", "identity", "tanh")


def activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu0":
        return np.maximum(z, 0.0)
    if name == "identity":
        return z
    if name == "tanh":
        return np.tanh(z)
    raise ValueError(f"unknown activation {name!r}")


def activate_grad(name: str, z: np.ndarray) -> np.ndarray:
    # relu0: derivative is 1 at exactly zero so f(0)=0, f'(0)=1
    if name == "relu0":
        return (z >= 0.0).astype(np.float64)
    if name == "identity":
        return np.ones_like(z)
    if name == "tanh":
        t = np.tanh(z)
        return 1.0 - t * t
    raise ValueError(f"unknown activation {name!r}")


def is_positively_homogeneous(name: str) -> bool:
    """True when f(a*z) == a*f(z) for a > 0."""
    return name in ("relu0", "identity")


def resolve_padding(padding, kernel: int) -> int:
    if isinstance(padding, str):
        if padding == "same":
            if kernel % 2 != 1:
                raise DimensionError(f"'same' padding needs an odd kernel, got {kernel}")
            return (kernel - 1) // 2
        if padding == "valid":
            return 0
        raise DimensionError(f"unknown padding {padding!r}")
    pad = int(padding)
    if pad < 0:
        raise DimensionError("padding must be >= 0")
    return pad


def conv_output_size(size: int, kernel: int, stride: int, pad: int) -> int:
    out = (size + 2 * pad - kernel) // stride + 1
    if out < 1:
        raise DimensionError(f"kernel {kernel} too large for input {size} with pad {pad}")
    return out


def _pad(x: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def _windows(x: np.ndarray, kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    """Patch view of shape (N, C, Ho, Wo, kh, kw)."""
    win = sliding_window_view(_pad(x, pad), (kh, kw), axis=(2, 3))
    return win[:, :, ::stride, ::stride]


def conv2d(x: np.ndarray, w: np.ndarray, stride: int = 1, pad: int = 0) -> np.ndarray:
    """Cross-correlation of ``x`` (N, C, H, W) with filters ``w`` (O, C, kh, kw)."""
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1]:
        raise DimensionError(f"conv2d shapes incompatible: x{x.shape} w{w.shape}")
    kh, kw = w.shape[2:]
    conv_output_size(x.shape[2], kh, stride, pad)
    conv_output_size(x.shape[3], kw, stride, pad)
    win = _windows(x, kh, kw, stride, pad)
    out = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3]))  # (N, Ho, Wo, O)
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


def conv2d_weight_grad(x: np.ndarray, dout: np.ndarray, kh: int, kw: int,
                       stride: int = 1, pad: int = 0) -> np.ndarray:
    """Gradient w.r.t. filters of size (kh, kw) given the output gradient."""
    win = _windows(x, kh, kw, stride, pad)
    if win.shape[2:4] != dout.shape[2:4]:
        raise DimensionError(f"output grad {dout.shape} does not match patches {win.shape[:4]}")
    return np.tensordot(dout, win, axes=([0, 2, 3], [0, 2, 3]))  # (O, C, kh, kw)


def conv2d_input_grad(dout: np.ndarray, w: np.ndarray, input_hw: tuple[int, int],
                      stride: int = 1, pad: int = 0) -> np.ndarray:
    n = dout.shape[0]
    _, c, kh, kw = w.shape
    h, wd = input_hw
    ho, wo = dout.shape[2:]
    dxp = np.zeros((n, c, h + 2 * pad, wd + 2 * pad))
    for i in range(kh):
        for j in range(kw):
            contrib = np.tensordot(dout, w[:, :, i, j], axes=([1], [0]))  # (N, Ho, Wo, C)
            dxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += contrib.transpose(0, 3, 1, 2)
    if pad:
        dxp = dxp[:, :, pad:pad + h, pad:pad + wd]
    return np.ascontiguousarray(dxp)


def squared_loss(outputs: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error over every element, and its gradient w.r.t. outputs."""
    if outputs.shape != targets.shape:
        raise DimensionError(f"outputs {outputs.shape} vs targets {targets.shape}")
    diff = outputs - targets
    loss = float(np.mean(diff * diff))
    return loss, (2.0 / diff.size) * diff
