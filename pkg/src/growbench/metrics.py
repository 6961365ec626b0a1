"""Training-dynamics metrics and the delimited-text metrics log."""
from __future__ import annotations

import csv
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy import stats

from .errors import StateError
from .linalg import alignment, svd_topk
from .netcore.crossgrad import cross_gradient

METRICS_FILE = "metrics.csv"
EVENTS_FILE = "events.csv"


def adjusted_grad_norm(grads) -> tuple[float, bool]:
    """Gradient norm divided by the loss; ``(0.0, True)`` when the loss is zero."""
    if grads.loss is None:
        raise StateError("gradient set carries no loss value")
    norm = grads.flat_norm()
    if grads.loss == 0:
        return 0.0, True
    return norm / grads.loss, False


def pearson(x, y) -> float:
    """Pearson correlation; NaN when either input is constant."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    xc = x - x.mean()
    yc = y - y.mean()
    den = math.sqrt(float(np.dot(xc, xc)) * float(np.dot(yc, yc)))
    if den == 0.0:
        return float("nan")
    return float(np.clip(np.dot(xc, yc) / den, -1.0, 1.0))


def t_interval(values, confidence: float) -> tuple[float, float, float]:
    """Mean and two-sided t-based confidence interval."""
    v = np.asarray(values, dtype=np.float64)
    mean = float(v.mean())
    if v.size < 2:
        return mean, mean, mean
    sem = float(v.std(ddof=1)) / math.sqrt(v.size)
    half = float(stats.t.ppf(0.5 + confidence / 2.0, v.size - 1)) * sem
    return mean, mean - half, mean + half


class Stopwatch:
    """Monotonic wall-clock timer reporting milliseconds."""

    def __enter__(self):
        self._t0 = time.perf_counter_ns()
        return self

    def __exit__(self, *exc):
        self.ms = (time.perf_counter_ns() - self._t0) / 1e6
        return False


def growth_runtime(fn, *args, **kwargs):
    """Run ``fn`` and return ``(result, wall_ms)``."""
    with Stopwatch() as sw:
        result = fn(*args, **kwargs)
    return result, sw.ms


@dataclass
class StepRecord:
    step: int
    loss: float
    grad_norm: float
    adjusted_grad_norm: float
    new_grad_norm: float
    adjusted_new_grad_norm: float
    widths: str
    n_params: int
    flops: int


@dataclass
class EventRecord:
    step: int
    layer: int
    k: int
    method: str
    direction: str
    insert: bool
    norm: float
    objective: float | None
    singular_values: tuple = ()


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ";".join(repr(float(x)) for x in v)
    return str(v)


def _parse(kind, text: str):
    if kind is bool:
        return text == "1"
    if kind is int:
        return int(text)
    if kind is float:
        return float(text)
    if kind == "float | None":
        return None if text == "" else float(text)
    if kind is tuple:
        return tuple(float(x) for x in text.split(";")) if text else ()
    return text


_KINDS = {
    StepRecord: [int, float, float, float, float, float, str, int, int],
    EventRecord: [int, int, int, str, str, bool, float, "float | None", tuple],
}


@dataclass
class MetricsLog:
    records: list = field(default_factory=list)
    events: list = field(default_factory=list)

    def append(self, rec: StepRecord) -> None:
        if self.records and rec.step <= self.records[-1].step:
            raise StateError("metric steps must be strictly increasing")
        if not rec.loss >= 0:
            raise StateError(f"invalid loss {rec.loss!r} at step {rec.step}")
        self.records.append(rec)

    def add_event(self, ev: EventRecord) -> None:
        self.events.append(ev)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    @property
    def final_loss(self) -> float:
        return self.records[-1].loss

    @staticmethod
    def _write(path: Path, cls, rows) -> None:
        names = [f.name for f in fields(cls)]
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(names)
            for r in rows:
                d = asdict(r)
                w.writerow([_fmt(d[n]) for n in names])

    @staticmethod
    def _read(path: Path, cls):
        kinds = _KINDS[cls]
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != [f.name for f in fields(cls)]:
                raise StateError(f"unexpected header in {path}")
            return [cls(*(_parse(k, v) for k, v in zip(kinds, row))) for row in reader]

    def write(self, directory) -> tuple[Path, Path]:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        self._write(d / METRICS_FILE, StepRecord, self.records)
        self._write(d / EVENTS_FILE, EventRecord, self.events)
        return d / METRICS_FILE, d / EVENTS_FILE

    @classmethod
    def read(cls, directory) -> "MetricsLog":
        d = Path(directory)
        log = cls()
        log.records = cls._read(d / METRICS_FILE, StepRecord)
        ev = d / EVENTS_FILE
        if ev.exists():
            log.events = cls._read(ev, EventRecord)
        return log


@dataclass
class AlignmentRow:
    batch_size: int
    mean: float
    lo: float
    hi: float
    values: tuple


def svd_alignment_study(net, task, batch_sizes, k: int = 1, repetitions: int = 10,
                        confidence: float = 0.95, rng: np.random.Generator | None = None,
                        layer: int = 0) -> list[AlignmentRow]:
    """Alignment of top-k left singular vectors: full data vs random subsets.

    Subsets are drawn without replacement; each batch size is repeated
    ``repetitions`` times and summarized with a t-based interval.
    """
    x, t = task.inputs, task.targets
    n = x.shape[1]
    if any(b < 1 or b > n for b in batch_sizes):
        raise ValueError(f"batch sizes must lie in [1, {n}]")
    rng = rng if rng is not None else np.random.default_rng(0)
    full = svd_topk(cross_gradient(net, layer, x, t).matrix, k).left_vectors
    rows = []
    for b in batch_sizes:
        vals = []
        for _ in range(repetitions):
            idx = rng.choice(n, b, replace=False)
            u = svd_topk(cross_gradient(net, layer, x[:, idx], t[:, idx]).matrix, k).left_vectors
            vals.append(alignment(full, u, k))
        mean, lo, hi = t_interval(vals, confidence)
        rows.append(AlignmentRow(int(b), mean, lo, hi, tuple(vals)))
    return rows
