"""Momentum SGD for networks and a functional Adam step for single arrays."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionError, NumericError


def _pad_to(v: np.ndarray, shape) -> np.ndarray:
    """Zero-extend ``v`` at the end of every axis; growth only ever appends."""
    if v.shape == tuple(shape):
        return v
    if v.ndim != len(shape) or any(a > b for a, b in zip(v.shape, shape)):
        return np.zeros(shape)
    return np.pad(v, [(0, b - a) for a, b in zip(v.shape, shape)])


@dataclass
class SGD:
    """``v <- momentum * v + g``; ``w <- w - lr * v``.

    Velocities are keyed by ``(layer name, parameter name)``; after a growth
    event they are zero-extended to the new shapes on the next step.
    """

    lr: float
    momentum: float = 0.0
    velocity: dict = field(default_factory=dict)

    def step(self, net, grads, frozen=()) -> None:
        for layer, g in zip(net.layers, grads.grads):
            for pname, param in layer.params().items():
                if (layer.name, pname) in frozen:
                    continue
                grad = g[pname]
                if grad.shape != param.shape:
                    raise DimensionError(f"{layer.name}.{pname}: gradient {grad.shape} vs {param.shape}")
                if not np.all(np.isfinite(grad)):
                    raise NumericError(f"non-finite gradient for {layer.name}.{pname}")
                if self.momentum:
                    key = (layer.name, pname)
                    v = _pad_to(self.velocity.get(key, np.zeros(param.shape)), param.shape)
                    v = self.momentum * v + grad
                    self.velocity[key] = v
                else:
                    v = grad
                # in-place so views held by the layer stay consistent
                param -= self.lr * v

    def sync(self, net) -> None:
        """Zero-extend stored velocities to the network's current shapes."""
        live = set()
        for layer in net.layers:
            for pname, param in layer.params().items():
                key = (layer.name, pname)
                live.add(key)
                if key in self.velocity:
                    self.velocity[key] = _pad_to(self.velocity[key], param.shape)
        for key in list(self.velocity):
            if key not in live:
                del self.velocity[key]


def sgd_step(net, grads, lr: float, momentum: float = 0.0, state: SGD | None = None):
    """Functional wrapper: apply one step to a copy of ``net``."""
    opt = state if state is not None else SGD(lr, momentum)
    opt.lr, opt.momentum = lr, momentum
    new = net.copy()
    opt.step(new, grads)
    return new, opt


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        return cls(np.zeros_like(params, dtype=np.float64), np.zeros_like(params, dtype=np.float64))


def adam_step(params, grad, state: AdamState | None, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam descent step. Returns ``(new_params, new_state)``."""
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if params.shape != grad.shape:
        raise DimensionError(f"params {params.shape} vs grad {grad.shape}")
    if not (np.all(np.isfinite(params)) and np.all(np.isfinite(grad))):
        raise NumericError("non-finite input to adam_step")
    if state is None:
        state = AdamState.zeros_like(params)
    t = state.t + 1
    m = beta1 * state.m + (1.0 - beta1) * grad
    v = beta2 * state.v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    new = params - lr * m_hat / (np.sqrt(v_hat) + eps)
    return new, AdamState(m, v, t)
