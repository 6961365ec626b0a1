"""Teacher-student task generation and growth-schedule training runs."""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DivergenceError, PreconditionError, StateError
from .grow import (GrowthEvent, GrowthPlan, NormPolicy, apply_growth, event_norm, initialize,
                   target_norm)
from .grow.mechanics import InitResult, grow_neurons, unit_shapes
from .linalg import svd_topk
from .metrics import EventRecord, MetricsLog, StepRecord, Stopwatch, pearson
from .netcore import checkpoint as ckpt
from .netcore import functional as F
from .netcore.crossgrad import cross_gradient, cross_gradient_from_signals
from .netcore.network import Network, dense_mlp
from .netcore.optim import SGD

# forward = 2 flops per multiply-accumulate; backward counted as twice the forward
FLOPS_PER_MAC = 2
STEP_FLOP_FACTOR = 3


@dataclass
class TeacherStudentTask:
    teacher: Network
    inputs: np.ndarray  # (m_i, N)
    targets: np.ndarray  # (m_o, N)
    teacher_seed: int
    data_seed: int

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.teacher.layers[0].in_features, self.teacher.layers[0].out_features,
                self.teacher.layers[-1].out_features)

    @property
    def n_samples(self) -> int:
        return self.inputs.shape[1]


def make_task(m_i: int, m_h: int, m_o: int, n: int = 1000, teacher_seed: int = 0,
              data_seed: int = 1) -> TeacherStudentTask:
    """Teacher ``m_i:m_h:m_o`` with Uniform[-1, 1] weights labelling N(0, 1) inputs."""
    if min(m_i, m_h, m_o, n) < 1:
        raise PreconditionError("task dimensions and sample count must be positive")
    teacher = dense_mlp([m_i, m_h, m_o], np.random.default_rng(teacher_seed), init="uniform")
    inputs = np.random.default_rng(data_seed).standard_normal((m_i, n))
    targets, _ = teacher.forward(inputs)
    return TeacherStudentTask(teacher, inputs, targets, teacher_seed, data_seed)


@dataclass
class RunConfig:
    hidden: tuple = (5,)
    steps: int = 1500
    lr: float = 0.1
    momentum: float = 0.0
    batch_size: int = 0  # 0 = full batch
    plan: GrowthPlan = field(default_factory=GrowthPlan)
    train_seed: int = 0
    activation: str = "relu0"
    bias: bool = False
    opt_steps: int = 2000
    opt_lr: float = 1e-2
    firefly_steps: int = 100
    firefly_lr: float = 1e-2
    repetitions: int = 5

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.repetitions < 1:
            raise PreconditionError("repetitions must be >= 1")
        if any(s >= self.steps for s in self.plan.steps):
            raise PreconditionError("every growth step must be < total steps")
        if self.steps < 1:
            raise PreconditionError("steps must be >= 1")

    def needs_bias(self) -> bool:
        return self.bias or any(e.method == "ZeroUnitBias" for e in self.plan)

    def with_plan(self, plan: GrowthPlan, **kw) -> "RunConfig":
        return replace(self, plan=plan, **kw)


def small_protocol_plan(method: str = "GradMax", epsilon: float = 0.0, **kw) -> GrowthPlan:
    return GrowthPlan.regular(0, 1, 200, 200, 5, method=method, epsilon=epsilon, **kw)


def build_student(task: TeacherStudentTask, config: RunConfig) -> Network:
    m_i, _, m_o = task.dims
    rng = np.random.default_rng(np.random.SeedSequence([config.train_seed, 0]))
    bias_layers = set(e.layer for e in config.plan) if config.needs_bias() else set()
    return dense_mlp([m_i, *config.hidden, m_o], rng, config.activation,
                     bias=False, bias_layers=bias_layers)


def _rngs(config: RunConfig):
    return (np.random.default_rng(np.random.SeedSequence([config.train_seed, 1])),
            np.random.default_rng(np.random.SeedSequence([config.train_seed, 2])))


def grown_norm(grads, net: Network, base_shapes: dict) -> float:
    """Gradient norm restricted to entries added since ``base_shapes`` was taken."""
    total = 0.0
    for layer, g in zip(net.layers, grads.grads):
        for pname, gv in g.items():
            sq = gv * gv
            shape = base_shapes.get((layer.name, pname))
            if shape is not None:
                sq = sq.copy()
                sq[tuple(slice(0, n) for n in shape)] = 0.0
            total += float(np.sum(sq))
    return math.sqrt(total)


def param_shapes(net: Network) -> dict:
    return {(l.name, p): v.shape for l in net.layers for p, v in l.params().items()}


@dataclass
class RunResult:
    log: MetricsLog
    net: Network
    checkpoints: dict  # step -> checkpoint dict (pre-growth state; last one is final)
    step_ms: list
    event_ms: list  # (step, method, wall ms)

    @property
    def mean_step_ms(self) -> float:
        return float(np.mean(self.step_ms)) if self.step_ms else 0.0


def _batch(task, config, batch_rng):
    n = task.n_samples
    if config.batch_size <= 0 or config.batch_size >= n:
        return task.inputs, task.targets
    idx = batch_rng.choice(n, config.batch_size, replace=False)
    return task.inputs[:, idx], task.targets[:, idx]


def _widths(net: Network) -> str:
    return ":".join(str(w) for w in [net.layers[0].in_features, *net.widths()])


def make_checkpoint(net, opt, step, growth_rng, batch_rng, flops, base_shapes) -> dict:
    extra = {
        "rng": {"growth": growth_rng.bit_generator.state, "batch": batch_rng.bit_generator.state},
        "flops": flops,
        "base_shapes": [[k[0], k[1], list(v)] for k, v in sorted(base_shapes.items())],
    }
    return ckpt.to_dict(net, opt, step, extra)


def run_training(task: TeacherStudentTask, config: RunConfig, resume: dict | None = None,
                 checkpoint_dir=None, stop_at: int | None = None) -> RunResult:
    """Train a student with squared loss, applying the growth plan on schedule.

    A checkpoint is taken right before every growth event and after the last
    step. ``resume`` continues from such a checkpoint and reproduces the
    original trajectory exactly.
    """
    growth_rng, batch_rng = _rngs(config)
    if resume is None:
        net = build_student(task, config)
        opt = SGD(config.lr, config.momentum)
        start, flops = 0, 0
        base_shapes = param_shapes(net)
    else:
        net, opt, start, extra = ckpt.from_dict(resume)
        opt = opt if opt is not None else SGD(config.lr, config.momentum)
        growth_rng.bit_generator.state = extra["rng"]["growth"]
        batch_rng.bit_generator.state = extra["rng"]["batch"]
        flops = int(extra["flops"])
        base_shapes = {(a, b): tuple(s) for a, b, s in extra["base_shapes"]}
    end = config.steps if stop_at is None else min(stop_at, config.steps)
    log = MetricsLog()
    checkpoints, step_ms, event_ms = {}, [], []
    in_shape = (task.inputs.shape[0],)

    def save(step):
        d = make_checkpoint(net, opt, step, growth_rng, batch_rng, flops, base_shapes)
        checkpoints[step] = d
        if checkpoint_dir is not None:
            p = Path(checkpoint_dir) / f"step_{step:06d}.json"
            p.parent.mkdir(parents=True, exist_ok=True)
            p.write_text(json.dumps(d))

    for step in range(start, end):
        event = config.plan.at(step)
        if event is not None:
            save(step)
        x, t = _batch(task, config, batch_rng)
        if event is not None:
            if event.insert:
                # the direct weight becomes the skip of the same layer
                name = net.layers[event.layer + 1].name
                v = opt.velocity.pop((name, "weight"), None)
                if v is not None:
                    opt.velocity[(name, "skip")] = v
                base_shapes[(name, "skip")] = base_shapes.pop((name, "weight"))
                base_shapes[(name, "weight")] = (0, 0)
            net, rec, ms = _grow(net, event, x, t, growth_rng, config)
            opt.sync(net)
            log.add_event(rec)
            event_ms.append((step, event.method, ms))
        with Stopwatch() as sw:
            out, cache = net.forward(x)
            loss, dout = F.squared_loss(out, t)
            if not math.isfinite(loss):
                raise DivergenceError(step, loss)
            gs = net.backward(cache, dout)
            gs.loss = loss
            opt.step(net, gs)
        step_ms.append(sw.ms)
        gnorm = gs.flat_norm()
        new_norm = grown_norm(gs, net, base_shapes) if config.plan.events else 0.0
        flops += FLOPS_PER_MAC * STEP_FLOP_FACTOR * net.macs_per_sample(in_shape) * x.shape[1]
        log.append(StepRecord(
            step, loss, gnorm, gnorm / loss if loss > 0 else 0.0, new_norm,
            new_norm / loss if loss > 0 else 0.0, _widths(net), net.n_params(), flops))
    if end == config.steps:
        save(config.steps)
    return RunResult(log, net, checkpoints, step_ms, event_ms)


def _grow(net, event: GrowthEvent, x, t, rng, config: RunConfig):
    """Apply one event; the wall time covers everything the growth adds to the step."""
    dense_gradmax = (event.method in ("GradMax", "GradMaxOpt") and not event.insert
                     and event.direction == "incoming_zero"
                     and net.layers[net.next_weighted(event.layer)].kind == "dense")
    if dense_gradmax:
        # the training step computes these signals anyway; the aux gradient reuses them
        out, cache = net.forward(x)
        _, dout = F.squared_loss(out, t)
        gs = net.backward(cache, dout)
    with Stopwatch() as sw:
        c = event_norm(net, event)
        cg = cross_gradient_from_signals(net, event.layer, cache.hs, gs.deltas) if dense_gradmax else None
        init = initialize(net, event, x, t, rng, cg=cg, c=c, opt_steps=config.opt_steps,
                          opt_lr=config.opt_lr, firefly_steps=config.firefly_steps,
                          firefly_lr=config.firefly_lr)
        grown = apply_growth(net, event, init)
    rec = EventRecord(event.step, event.layer, event.k, event.method, event.direction,
                      event.insert, c, init.objective,
                      tuple(init.singular_values) if init.singular_values is not None else ())
    return grown, rec, sw.ms


def train_steps(net: Network, opt: SGD, x, t, steps: int) -> tuple[Network, list]:
    """Plain continuation without growth; returns the full-batch loss after each update."""
    losses = []
    for _ in range(steps):
        gs = net.loss_and_grads(x, t)
        if not math.isfinite(gs.loss):
            raise DivergenceError(len(losses), gs.loss)
        opt.step(net, gs)
        losses.append(net.loss(x, t))
    return net, losses


def restore(checkpoint: dict) -> tuple[Network, SGD]:
    net, opt, _, _ = ckpt.from_dict(checkpoint)
    return net, opt


def baseline_configs(task: TeacherStudentTask, config: RunConfig) -> tuple[RunConfig, RunConfig]:
    """(Baseline-Small, Baseline-Big): no growth at the seed and at the teacher width."""
    empty = GrowthPlan()
    small = replace(config, plan=empty)
    big = replace(config, plan=empty, hidden=(task.dims[1],))
    return small, big


def t_seeds(config: RunConfig) -> list[int]:
    return [config.train_seed + r for r in range(config.repetitions)]


# -- verification studies ------------------------------------------------------

STUDY_A_METHODS = ("GradMax", "GradMaxOpt", "Random", "FireflyOpt")
STOCHASTIC = ("Random", "FireflyOpt", "GradMaxOpt")


@dataclass
class VerificationReport:
    # Study A: step -> method -> list of new-weight gradient norms
    after_growth: dict
    # Study B: method -> per-step adjusted gradient norm (all parameters)
    during_training: dict
    # Study C: step -> array (repetitions, horizon) of L(f_r) - L(f_g)
    loss_difference: dict

    def study_c_means(self) -> dict:
        return {s: float(np.mean(d)) for s, d in self.loss_difference.items()}


def _event_rng(seed: int, step: int, tag: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, 3, tag, step]))


def new_weight_grad_norm(net: Network, grown: Network, x, t) -> float:
    """||dL/dW_new||_F over all entries ``grown`` has beyond ``net``."""
    gs = grown.loss_and_grads(x, t)
    return grown_norm(gs, grown, param_shapes(net))


def grow_from_checkpoint(checkpoint: dict, event: GrowthEvent, task: TeacherStudentTask,
                         config: RunConfig, rng: np.random.Generator):
    net, opt = restore(checkpoint)
    init = initialize(net, event, task.inputs, task.targets, rng, opt_steps=config.opt_steps,
                      opt_lr=config.opt_lr, firefly_steps=config.firefly_steps,
                      firefly_lr=config.firefly_lr)
    return net, apply_growth(net, event, init), init, opt


def require_checkpoints(checkpoints: dict, plan: GrowthPlan) -> None:
    missing = [s for s in plan.steps if s not in checkpoints]
    if missing:
        raise StateError(f"missing growth-step checkpoints for steps {missing}")


def run_verification_suite(task: TeacherStudentTask, config: RunConfig, checkpoints: dict,
                           methods=STUDY_A_METHODS, a_repetitions: int = 10,
                           horizon: int = 500, firefly_epsilon: float = 1e-4,
                           study_b: bool = True) -> VerificationReport:
    """Run Studies A, B and C from the pre-growth checkpoints of a Random run.

    ``checkpoints`` maps each growth step of ``config.plan`` to the checkpoint
    taken right before that growth.
    """
    require_checkpoints(checkpoints, config.plan)
    x, t = task.inputs, task.targets
    after, diffs = {}, {}
    for ev in config.plan:
        one = replace(ev, k=1)
        row = {}
        for method in methods:
            reps = a_repetitions if method in STOCHASTIC else 1
            eps = firefly_epsilon if method == "FireflyOpt" else one.epsilon
            e = replace(one, method=method, epsilon=eps)
            vals = []
            for r in range(reps):
                net, grown, _, _ = grow_from_checkpoint(
                    checkpoints[ev.step], e, task, config, _event_rng(config.train_seed + r, ev.step, 0))
                vals.append(new_weight_grad_norm(net, grown, x, t))
            row[method] = vals
        after[ev.step] = row

        steps_left = min(horizon, config.steps - ev.step)
        _, f_g, _, opt_g = grow_from_checkpoint(checkpoints[ev.step], replace(one, method="GradMax"),
                                                task, config, _event_rng(0, ev.step, 1))
        opt_g.sync(f_g)
        _, loss_g = train_steps(f_g, opt_g, x, t, steps_left)
        rows = []
        for r in range(config.repetitions):
            _, f_r, _, opt_r = grow_from_checkpoint(
                checkpoints[ev.step], replace(one, method="Random"), task, config,
                _event_rng(config.train_seed + r, ev.step, 2))
            opt_r.sync(f_r)
            _, loss_r = train_steps(f_r, opt_r, x, t, steps_left)
            rows.append(np.asarray(loss_r) - np.asarray(loss_g))
        diffs[ev.step] = np.array(rows)

    during = {}
    if study_b:
        for method in methods:
            eps = firefly_epsilon if method == "FireflyOpt" else None
            plan = config.plan.with_method(method, eps)
            during[method] = run_training(task, replace(config, plan=plan)).log.column(
                "adjusted_grad_norm")
    return VerificationReport(after, during, diffs)


# -- singular value / loss correlation ----------------------------------------

@dataclass
class CorrelationResult:
    iteration: int
    repetition: int
    singular_values: np.ndarray  # (n_dirs,)
    losses: np.ndarray  # (n_dirs, horizon): loss after each post-growth step
    correlations: np.ndarray  # (horizon,); NaN where undefined
    degenerate: np.ndarray  # (horizon,) bool: losses identical across directions

    @property
    def final(self) -> float:
        return float(self.correlations[-1])


def singular_value_loss_correlation(task: TeacherStudentTask, config: RunConfig,
                                    growth_iters, n_dirs: int = 5, horizon: int = 100,
                                    layer: int = 0) -> list[CorrelationResult]:
    """Grow one neuron along each top singular direction and correlate sigma with loss.

    For every repetition a growth-free run is trained to each listed
    iteration. There, ``n_dirs`` copies each receive one neuron with outgoing
    weights ``c * u_i`` (incoming zero) and train ``horizon`` further steps.
    """
    if n_dirs < 3:
        raise PreconditionError("at least 3 singular directions are needed")
    x, t = task.inputs, task.targets
    iters = sorted(int(i) for i in growth_iters)
    out = []
    for rep, seed in enumerate(t_seeds(config)):
        base = replace(config, plan=GrowthPlan(), train_seed=seed, steps=max(iters) + 1)
        net = build_student(task, base)
        opt = SGD(config.lr, config.momentum)
        done = 0
        for it in iters:
            net, _ = train_steps(net, opt, x, t, it - done)
            done = it
            cg = cross_gradient(net, layer, x, t)
            if n_dirs > min(cg.matrix.shape):
                raise PreconditionError(f"only {min(cg.matrix.shape)} singular directions available")
            svd = svd_topk(cg.matrix, n_dirs)
            c = target_norm(NormPolicy("mean_existing"), net.layers[layer].weight, 1)
            in_shape, out_shape = unit_shapes(net, layer)
            losses = []
            for i in range(n_dirs):
                w_out = (svd.left_vectors[:, i] * c).reshape(out_shape[0], 1)
                grown = grow_neurons(net, layer, InitResult(np.zeros((1, *in_shape)), w_out))
                g_opt = copy.deepcopy(opt)
                g_opt.sync(grown)
                _, ls = train_steps(grown, g_opt, x, t, horizon)
                losses.append(ls)
            losses = np.array(losses)
            s = svd.singular_values
            corr = np.empty(horizon)
            degen = np.zeros(horizon, dtype=bool)
            for h in range(horizon):
                col = losses[:, h]
                if np.unique(s).size < 2:
                    corr[h] = np.nan
                elif np.all(col == col[0]):
                    corr[h], degen[h] = 0.0, True
                else:
                    corr[h] = pearson(s, col)
            out.append(CorrelationResult(it, rep, s.copy(), losses, corr, degen))
    return out
