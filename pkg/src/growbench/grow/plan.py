from __future__ import annotations

from dataclasses import dataclass, replace, field

import numpy as np

from ..errors import StateError

METHODS = ("GradMax", "GradMaxOpt", "Random", "FireflyOpt", "ZeroUnitBias")
DIRECTIONS = ("incoming_zero", "outgoing_zero")


@dataclass(frozen=True)
class NormPolicy:
    """How to pick the norm ``c`` of the free side of a new block.

    ``mean_existing`` uses the mean norm of the layer's existing incoming rows;
    ``fixed`` uses ``scale``. Both give a per-neuron norm which is multiplied
    by sqrt(k) for a block of k neurons.
    """

    kind: str = "mean_existing"
    scale: float = 0.5

    def __post_init__(self):
        if self.kind not in ("mean_existing", "fixed"):
            raise ValueError(f"unknown norm policy {self.kind!r}")

    @classmethod
    def parse(cls, text: str) -> "NormPolicy":
        text = text.strip()
        if text.startswith("fixed"):
            _, _, val = text.partition(":")
            return cls("fixed", float(val) if val else 0.5)
        return cls(text)

    def __str__(self):
        return self.kind if self.kind == "mean_existing" else f"fixed:{self.scale!r}"


def target_norm(policy: NormPolicy, weight, k: int = 1) -> float:
    """Block Frobenius norm ``c`` for ``k`` new neurons given a layer's weights."""
    if policy.kind == "fixed":
        return float(policy.scale) * float(np.sqrt(k))
    w = np.asarray(weight, dtype=np.float64)
    if w.size == 0 or w.shape[0] == 0:
        raise StateError("mean_existing norm needs at least one existing neuron")
    rows = w.reshape(w.shape[0], -1)
    return float(np.mean(np.linalg.norm(rows, axis=1))) * float(np.sqrt(k))


@dataclass(frozen=True)
class GrowthEvent:
    step: int
    layer: int
    k: int = 1
    method: str = "GradMax"
    direction: str = "incoming_zero"
    norm_policy: NormPolicy = field(default_factory=NormPolicy)
    epsilon: float = 1e-4
    insert: bool = False  # insert a new layer after ``layer`` instead of widening it

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.step < 0:
            raise ValueError("step must be >= 0")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.direction not in DIRECTIONS:
            raise ValueError(f"unknown direction {self.direction!r}")


@dataclass(frozen=True)
class GrowthPlan:
    events: tuple = ()

    def __post_init__(self):
        steps = [e.step for e in self.events]
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise ValueError("growth events must have strictly increasing steps")

    @classmethod
    def regular(cls, layer: int, k: int, start: int, every: int, count: int, **kw) -> "GrowthPlan":
        return cls(tuple(GrowthEvent(start + i * every, layer, k, **kw) for i in range(count)))

    def at(self, step: int):
        for e in self.events:
            if e.step == step:
                return e
        return None

    @property
    def steps(self) -> list[int]:
        return [e.step for e in self.events]

    def __iter__(self):
        return iter(self.events)

    def __len__(self):
        return len(self.events)

    def with_method(self, method: str, epsilon: float | None = None) -> "GrowthPlan":
        """Same schedule with every event switched to ``method``."""
        kw = {"method": method}
        if epsilon is not None:
            kw["epsilon"] = epsilon
        return GrowthPlan(tuple(replace(e, **kw) for e in self.events))
