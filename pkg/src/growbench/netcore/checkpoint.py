"""Versioned JSON checkpoints. Floats are written with ``repr`` so a round trip is exact."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import StateError
from .layers import BatchNorm, Conv2D, Dense
from .network import Network
from .optim import SGD

FORMAT = "growbench-checkpoint"
VERSION = 1


def _arr(a: np.ndarray) -> dict:
    return {"shape": list(a.shape), "data": [float(x) for x in a.ravel()]}


def _unarr(d: dict) -> np.ndarray:
    return np.asarray(d["data"], dtype=np.float64).reshape(d["shape"])


def layer_to_dict(layer) -> dict:
    d = {"kind": layer.kind, "name": layer.name, "activation": layer.activation,
         "params": {k: _arr(v) for k, v in layer.params().items()}}
    if layer.kind == "conv2d":
        d["stride"] = layer.stride
        d["padding"] = layer.padding
    if layer.kind == "batchnorm":
        d["eps"] = layer.eps
    return d


def layer_from_dict(d: dict):
    p = {k: _unarr(v) for k, v in d["params"].items()}
    kind = d["kind"]
    if kind == "dense":
        return Dense(p["weight"], p.get("bias"), d["activation"], p.get("skip"), name=d["name"])
    if kind == "conv2d":
        return Conv2D(p["weight"], p.get("bias"), d["activation"], d["stride"], d["padding"], name=d["name"])
    if kind == "batchnorm":
        return BatchNorm(p["gamma"], p["beta"], d["eps"], d["activation"], name=d["name"])
    raise StateError(f"unknown layer kind {kind!r}")


def network_to_dict(net: Network) -> dict:
    return {"layers": [layer_to_dict(l) for l in net.layers]}


def network_from_dict(d: dict) -> Network:
    return Network([layer_from_dict(x) for x in d["layers"]])


def to_dict(net: Network, optimizer: SGD | None = None, step: int | None = None,
            extra: dict | None = None) -> dict:
    d = {"format": FORMAT, "version": VERSION, "step": step, "network": network_to_dict(net)}
    if optimizer is not None:
        d["optimizer"] = {
            "lr": optimizer.lr, "momentum": optimizer.momentum,
            "velocity": [{"layer": k[0], "param": k[1], "value": _arr(v)}
                         for k, v in sorted(optimizer.velocity.items())],
        }
    if extra:
        d["extra"] = extra
    return d


def from_dict(d: dict):
    """Return ``(network, optimizer_or_None, step, extra)``."""
    if d.get("format") != FORMAT:
        raise StateError("not a growbench checkpoint")
    if d.get("version") != VERSION:
        raise StateError(f"unsupported checkpoint version {d.get('version')!r}")
    net = network_from_dict(d["network"])
    opt = None
    if "optimizer" in d:
        o = d["optimizer"]
        opt = SGD(o["lr"], o["momentum"],
                  {(v["layer"], v["param"]): _unarr(v["value"]) for v in o["velocity"]})
    return net, opt, d.get("step"), d.get("extra", {})


def save(path, net: Network, optimizer: SGD | None = None, step: int | None = None,
         extra: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(to_dict(net, optimizer, step, extra)))
    return path


def load(path):
    path = Path(path)
    if not path.exists():
        raise StateError(f"checkpoint {path} does not exist")
    return from_dict(json.loads(path.read_text()))
