"""Sectioned key-value run specification with strict validation."""
from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import ConfigError
from .experiments import RunConfig
from .grow import METHODS, DIRECTIONS, GrowthPlan, NormPolicy

DEFAULTS_TEXT = """\
# Every key is optional; these are the defaults (small teacher-student protocol).

[task]
# teacher architecture m_i:m_h:m_o
teacher = 20:10:10
n_samples = 1000
teacher_seed = 0
data_seed = 1

[student]
# hidden widths of the seed architecture (comma separated)
hidden = 5
lr = 0.1
momentum = 0.0
steps = 1500
# 0 = full batch
batch_size = 0
activation = relu0
bias = false

[growth]
method = GradMax
layer = 0
k = 1
start = 200
every = 200
count = 5
direction = incoming_zero
norm_policy = mean_existing
epsilon = 0.0
insert = false
# epsilon used for FireflyOpt whenever it runs
firefly_epsilon = 1e-4
opt_steps = 2000
opt_lr = 0.01
firefly_steps = 100
firefly_lr = 0.01
compare_methods = GradMax, GradMaxOpt, Random, FireflyOpt

[run]
train_seed = 0
repetitions = 5

[verify]
methods = GradMax, GradMaxOpt, Random, FireflyOpt
repetitions = 10
horizon = 500
# directory of a Random run's checkpoints; empty = <out>/Random/seed<train_seed>/checkpoints
checkpoints =

[alignment]
batch_sizes = 10, 100, 1000
k = 1
repetitions = 10
confidence = 0.95
layer = 0

[correlate]
iterations = 20, 100, 500
directions = 5
horizon = 100
layer = 0

[output]
dir = runs
"""

_BOOLS = {"true": True, "yes": True, "1": True, "on": True,
          "false": False, "no": False, "0": False, "off": False}


def _int_list(text: str, sep: str = ",") -> tuple[int, ...]:
    return tuple(int(p) for p in text.replace(sep, " ").split())


def _str_list(text: str) -> tuple[str, ...]:
    return tuple(p.strip() for p in text.split(",") if p.strip())


@dataclass
class RunSpec:
    teacher: tuple
    n_samples: int
    teacher_seed: int
    data_seed: int
    run: RunConfig
    method: str
    compare_methods: tuple
    firefly_epsilon: float
    growth: dict
    verify: dict
    alignment: dict
    correlate: dict
    out_dir: Path
    source: str = ""
    lines: dict = field(default_factory=dict)

    def plan_for(self, method: str) -> GrowthPlan:
        g = self.growth
        eps = self.firefly_epsilon if method == "FireflyOpt" else g["epsilon"]
        return GrowthPlan.regular(g["layer"], g["k"], g["start"], g["every"], g["count"],
                                  method=method, direction=g["direction"],
                                  norm_policy=g["norm_policy"], epsilon=eps, insert=g["insert"])

    def config_for(self, method: str | None, seed: int | None = None) -> RunConfig:
        plan = GrowthPlan() if method is None else self.plan_for(method)
        return replace(self.run, plan=plan,
                       train_seed=self.run.train_seed if seed is None else seed)


def _line_index(text: str) -> dict:
    """(section, key) -> 1-based line number, for diagnostics."""
    index, section = {}, None
    for n, line in enumerate(text.splitlines(), 1):
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            index[(section, None)] = n
            continue
        m = re.match(r"\s*([^#;=:\s][^=:]*?)\s*[=:]", line)
        if m and section is not None:
            index[(section, m.group(1).strip().lower())] = n
    return index


def _defaults() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None)
    cp.read_string(DEFAULTS_TEXT)
    return cp


def parse_config_text(text: str, source: str = "<string>") -> RunSpec:
    lines = _line_index(text)
    user = configparser.ConfigParser(interpolation=None)
    try:
        user.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: malformed config: {exc}") from exc
    base = _defaults()

    def where(section, key=None, *alternatives) -> str:
        # first location the user actually wrote, among the keys involved
        for sec, k in ((section, key), *alternatives):
            n = lines.get((sec, k))
            if n:
                return f"{source}:{n}"
        return source

    for section in user.sections():
        if not base.has_section(section):
            raise ConfigError(f"{where(section)}: unknown section [{section}]")
        for key in user[section]:
            if key not in base[section]:
                raise ConfigError(f"{where(section, key)}: unknown key '{key}' in [{section}]")
            base[section][key] = user[section][key]

    def get(section, key, conv):
        raw = base[section][key].strip()
        try:
            if conv is bool:
                return _BOOLS[raw.lower()]
            return conv(raw)
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"{where(section, key)}: invalid value {raw!r} for {section}.{key}") from exc

    def fail(section, key, rule):
        raise ConfigError(f"{where(section, key)}: {rule}")

    teacher = get("task", "teacher", lambda s: _int_list(s, ":"))
    if len(teacher) != 3 or min(teacher) < 1:
        fail("task", "teacher", "teacher must be three positive widths m_i:m_h:m_o")
    n_samples = get("task", "n_samples", int)
    if n_samples < 1:
        fail("task", "n_samples", "n_samples must be >= 1")

    hidden = get("student", "hidden", _int_list)
    if len(hidden) < 1 or min(hidden) < 1:
        fail("student", "hidden", "hidden widths must be positive")
    steps = get("student", "steps", int)
    if steps < 1:
        fail("student", "steps", "steps must be >= 1")
    lr = get("student", "lr", float)
    if not lr > 0:
        fail("student", "lr", "lr must be > 0")
    momentum = get("student", "momentum", float)
    if not 0 <= momentum < 1:
        fail("student", "momentum", "momentum must lie in [0, 1)")
    batch_size = get("student", "batch_size", int)
    if not 0 <= batch_size <= n_samples:
        fail("student", "batch_size", "batch_size must lie in [0, n_samples]")
    activation = get("student", "activation", str)
    if activation not in ("relu0", "identity", "tanh"):
        fail("student", "activation", "activation must be relu0, identity or tanh")

    g = {
        "layer": get("growth", "layer", int), "k": get("growth", "k", int),
        "start": get("growth", "start", int), "every": get("growth", "every", int),
        "count": get("growth", "count", int), "direction": get("growth", "direction", str),
        "epsilon": get("growth", "epsilon", float), "insert": get("growth", "insert", bool),
    }
    try:
        g["norm_policy"] = NormPolicy.parse(get("growth", "norm_policy", str))
    except ValueError as exc:
        raise ConfigError(f"{where('growth', 'norm_policy')}: {exc}") from exc
    method = get("growth", "method", str)
    compare = get("growth", "compare_methods", _str_list)
    for key, names in (("method", (method,)), ("compare_methods", compare)):
        bad = [m for m in names if m not in METHODS]
        if bad:
            fail("growth", key, f"unknown method(s) {bad}; choose from {list(METHODS)}")
    if g["direction"] not in DIRECTIONS:
        fail("growth", "direction", f"direction must be one of {list(DIRECTIONS)}")
    if g["k"] < 1:
        fail("growth", "k", "k must be >= 1")
    if g["count"] < 0 or g["start"] < 0 or (g["count"] > 1 and g["every"] < 1):
        fail("growth", "count", "need start >= 0, count >= 0 and every >= 1")
    if g["epsilon"] < 0:
        fail("growth", "epsilon", "epsilon must be >= 0")
    if not 0 <= g["layer"] < len(hidden):
        fail("growth", "layer", f"layer must index a hidden layer (0..{len(hidden) - 1})")
    if g["count"] and g["start"] + (g["count"] - 1) * g["every"] >= steps:
        raise ConfigError(f"{where('growth', 'start', ('growth', 'every'), ('growth', 'count'), ('student', 'steps'))}: "
                          "every growth step must be < student.steps")
    firefly_eps = get("growth", "firefly_epsilon", float)
    if "FireflyOpt" in (method, *compare) and not firefly_eps > 0:
        fail("growth", "firefly_epsilon", "FireflyOpt requires epsilon > 0")
    if g["insert"] and (method not in ("GradMax", "Random") or g["direction"] != "incoming_zero"):
        fail("growth", "insert", "layer insertion supports GradMax/Random with incoming_zero")
    if g["insert"] and any(m not in ("GradMax", "Random") for m in compare):
        fail("growth", "compare_methods", "layer insertion supports only GradMax and Random")

    repetitions = get("run", "repetitions", int)
    if repetitions < 1:
        fail("run", "repetitions", "repetitions must be >= 1")

    run = RunConfig(hidden=hidden, steps=steps, lr=lr, momentum=momentum, batch_size=batch_size,
                    train_seed=get("run", "train_seed", int), activation=activation,
                    bias=get("student", "bias", bool), opt_steps=get("growth", "opt_steps", int),
                    opt_lr=get("growth", "opt_lr", float),
                    firefly_steps=get("growth", "firefly_steps", int),
                    firefly_lr=get("growth", "firefly_lr", float), repetitions=repetitions)

    verify = {"methods": get("verify", "methods", _str_list),
              "repetitions": get("verify", "repetitions", int),
              "horizon": get("verify", "horizon", int),
              "checkpoints": base["verify"]["checkpoints"].strip()}
    if any(m not in METHODS for m in verify["methods"]):
        fail("verify", "methods", f"unknown method; choose from {list(METHODS)}")
    if verify["repetitions"] < 1 or verify["horizon"] < 1:
        fail("verify", "repetitions", "verify repetitions and horizon must be >= 1")

    alignment = {"batch_sizes": get("alignment", "batch_sizes", _int_list),
                 "k": get("alignment", "k", int),
                 "repetitions": get("alignment", "repetitions", int),
                 "confidence": get("alignment", "confidence", float),
                 "layer": get("alignment", "layer", int)}
    if any(b < 1 or b > n_samples for b in alignment["batch_sizes"]):
        fail("alignment", "batch_sizes", "batch sizes must lie in [1, n_samples]")
    if not 0 < alignment["confidence"] < 1:
        fail("alignment", "confidence", "confidence must lie in (0, 1)")
    if alignment["k"] < 1 or alignment["repetitions"] < 1:
        fail("alignment", "k", "k and repetitions must be >= 1")

    correlate = {"iterations": get("correlate", "iterations", _int_list),
                 "directions": get("correlate", "directions", int),
                 "horizon": get("correlate", "horizon", int),
                 "layer": get("correlate", "layer", int)}
    if correlate["directions"] < 3:
        fail("correlate", "directions", "at least 3 singular directions are needed")
    if not correlate["iterations"] or min(correlate["iterations"]) < 0:
        fail("correlate", "iterations", "iterations must be non-negative and non-empty")
    if correlate["horizon"] < 1:
        fail("correlate", "horizon", "horizon must be >= 1")

    return RunSpec(teacher, n_samples, get("task", "teacher_seed", int), get("task", "data_seed", int),
                   run, method, compare, firefly_eps, g, verify, alignment, correlate,
                   Path(base["output"]["dir"].strip() or "runs"), source, lines)


def parse_config(path) -> RunSpec:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return parse_config_text(p.read_text(encoding="utf-8"), str(p))
