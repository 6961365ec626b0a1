"""Command-line runner: ``growbench <command> <config> [--out DIR] [--seed N]``."""
from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import DEFAULTS_TEXT, RunSpec, parse_config
from .errors import GrowbenchError, StateError
from .experiments import (baseline_configs, build_student, make_task, run_training,
                          run_verification_suite, singular_value_loss_correlation, t_seeds)
from .metrics import svd_alignment_study, t_interval

COMMANDS = ("train", "compare", "verify", "alignment", "correlate")
SENTINEL = "INCOMPLETE"
SUMMARY = "summary.txt"
CURVE_CONFIDENCE = 0.80


def _task(spec: RunSpec):
    m_i, m_h, m_o = spec.teacher
    return make_task(m_i, m_h, m_o, spec.n_samples, spec.teacher_seed, spec.data_seed)


def _write_rows(path: Path, header, rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(v) -> str:
    return f"{v:.6g}" if isinstance(v, float) else str(v)


def _table(header, rows) -> str:
    cells = [list(map(str, header))] + [[_fmt(v) for v in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in cells) + "\n"


def run_dir(out: Path, label: str, seed: int) -> Path:
    return out / label / f"seed{seed}"


def _train_one(task, config, directory: Path):
    result = run_training(task, config, checkpoint_dir=directory / "checkpoints")
    result.log.write(directory)
    _write_rows(directory / "timings.csv", ["step", "method", "ms"],
                [(s, m, repr(ms)) for s, m, ms in result.event_ms])
    return result


def cmd_train(spec: RunSpec, out: Path) -> str:
    task = _task(spec)
    seed = spec.run.train_seed
    d = run_dir(out, spec.method, seed)
    result = _train_one(task, spec.config_for(spec.method), d)
    last = result.log.records[-1]
    rows = [(spec.method, seed, last.step, last.loss, last.widths, last.flops)]
    text = _table(["method", "seed", "step", "final_loss", "widths", "flops"], rows)
    text += "\n" + _table(["event_step", "method", "wall_ms", "mean_step_ms"],
                          [(s, m, ms, result.mean_step_ms) for s, m, ms in result.event_ms])
    return text


def cmd_compare(spec: RunSpec, out: Path) -> str:
    task = _task(spec)
    small, big = baseline_configs(task, spec.run)
    labels = [(m, spec.config_for(m)) for m in spec.compare_methods]
    labels += [("BaselineSmall", small), ("BaselineBig", big)]
    rows, per_seed = [], []
    for label, cfg in labels:
        finals, flops = [], []
        for seed in t_seeds(cfg):
            res = _train_one(task, replace(cfg, train_seed=seed), run_dir(out, label, seed))
            finals.append(res.log.final_loss)
            flops.append(res.log.records[-1].flops)
            per_seed.append((label, seed, repr(res.log.final_loss), res.log.records[-1].flops))
        mean, lo, hi = t_interval(finals, CURVE_CONFIDENCE)
        rows.append((label, len(finals), mean, lo, hi, flops[0]))
    _write_rows(out / "final_losses.csv", ["method", "seed", "final_loss", "flops"], per_seed)
    return _table(["method", "n", "final_loss_mean", "ci80_lo", "ci80_hi", "flops"], rows)


def _checkpoints(spec: RunSpec, out: Path) -> dict:
    src = spec.verify["checkpoints"]
    d = Path(src) if src else run_dir(out, "Random", spec.run.train_seed) / "checkpoints"
    found = {}
    if d.is_dir():
        for p in sorted(d.glob("step_*.json")):
            found[int(p.stem.split("_")[1])] = json.loads(p.read_text(encoding="utf-8"))
    missing = [s for s in spec.plan_for("Random").steps if s not in found]
    if missing:
        raise StateError(f"missing Random-run checkpoints in {d} for steps {missing}; "
                         "run `train` with method = Random or `compare` first")
    return found


def cmd_verify(spec: RunSpec, out: Path) -> str:
    task = _task(spec)
    checkpoints = _checkpoints(spec, out)
    config = spec.config_for("Random")
    v = spec.verify
    rep = run_verification_suite(task, config, checkpoints, methods=v["methods"],
                                 a_repetitions=v["repetitions"], horizon=v["horizon"],
                                 firefly_epsilon=spec.firefly_epsilon)
    vd = out / "verify"
    vd.mkdir(parents=True, exist_ok=True)
    a_rows = [(s, m, i, repr(x)) for s, row in rep.after_growth.items()
              for m, vals in row.items() for i, x in enumerate(vals)]
    _write_rows(vd / "study_a.csv", ["step", "method", "repetition", "new_grad_norm"], a_rows)
    b_rows = [(m, i, repr(float(x))) for m, col in rep.during_training.items()
              for i, x in enumerate(col)]
    _write_rows(vd / "study_b.csv", ["method", "step", "adjusted_grad_norm"], b_rows)
    c_rows = [(s, r, h, repr(float(x))) for s, arr in rep.loss_difference.items()
              for r, row in enumerate(arr) for h, x in enumerate(row)]
    _write_rows(vd / "study_c.csv", ["step", "repetition", "offset", "loss_random_minus_gradmax"], c_rows)

    summary = []
    for s, row in rep.after_growth.items():
        for m, vals in row.items():
            summary.append((s, m, float(np.min(vals)), float(np.median(vals)), float(np.max(vals))))
    text = "Study A: new-weight gradient norm after growing one neuron\n"
    text += _table(["step", "method", "min", "median", "max"], summary)
    text += "\nStudy C: mean L(f_r) - L(f_g) over the post-growth horizon\n"
    c_sum = []
    for s, arr in rep.loss_difference.items():
        mean, lo, hi = t_interval(arr.mean(axis=1), CURVE_CONFIDENCE)
        c_sum.append((s, mean, lo, hi))
    text += _table(["step", "mean", "ci80_lo", "ci80_hi"], c_sum)
    return text


def cmd_alignment(spec: RunSpec, out: Path) -> str:
    task = _task(spec)
    a = spec.alignment
    config = spec.config_for(None)
    net = build_student(task, config)
    rng = np.random.default_rng(np.random.SeedSequence([config.train_seed, 4]))
    rows = svd_alignment_study(net, task, a["batch_sizes"], a["k"], a["repetitions"],
                               a["confidence"], rng, a["layer"])
    ad = out / "alignment"
    ad.mkdir(parents=True, exist_ok=True)
    _write_rows(ad / "alignment.csv", ["batch_size", "repetition", "alignment"],
                [(r.batch_size, i, repr(v)) for r in rows for i, v in enumerate(r.values)])
    pct = int(round(a["confidence"] * 100))
    return _table(["batch_size", "mean", f"ci{pct}_lo", f"ci{pct}_hi"],
                  [(r.batch_size, r.mean, r.lo, r.hi) for r in rows])


def cmd_correlate(spec: RunSpec, out: Path) -> str:
    task = _task(spec)
    c = spec.correlate
    results = singular_value_loss_correlation(task, spec.config_for(None), c["iterations"],
                                              c["directions"], c["horizon"], c["layer"])
    cd = out / "correlate"
    cd.mkdir(parents=True, exist_ok=True)
    _write_rows(cd / "correlation.csv", ["iteration", "repetition", "offset", "pearson", "degenerate"],
                [(r.iteration, r.repetition, h, repr(float(x)), int(r.degenerate[h]))
                 for r in results for h, x in enumerate(r.correlations)])
    _write_rows(cd / "singular_values.csv", ["iteration", "repetition", "direction", "sigma", "final_loss"],
                [(r.iteration, r.repetition, i, repr(float(s)), repr(float(r.losses[i, -1])))
                 for r in results for i, s in enumerate(r.singular_values)])
    rows = []
    for it in sorted({r.iteration for r in results}):
        finals = [r.final for r in results if r.iteration == it]
        neg = sum(1 for f in finals if f < 0)
        rows.append((it, len(finals), neg, float(np.nanmean(finals))))
    return _table(["iteration", "repetitions", "negative", "mean_pearson_at_horizon"], rows)


HANDLERS = {"train": cmd_train, "compare": cmd_compare, "verify": cmd_verify,
            "alignment": cmd_alignment, "correlate": cmd_correlate}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="growbench", description="Neuron-growing experiments.")
    p.add_argument("command", nargs="?", choices=COMMANDS)
    p.add_argument("config", nargs="?", help="run configuration file")
    p.add_argument("--out", help="output directory (overrides [output] dir)")
    p.add_argument("--seed", type=int, help="training seed (overrides [run] train_seed)")
    p.add_argument("--print-defaults", action="store_true", help="print the default configuration")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_defaults:
        sys.stdout.write(DEFAULTS_TEXT)
        return 0
    if args.command is None or args.config is None:
        parser.print_usage(sys.stderr)
        print("growbench: error: a command and a config file are required", file=sys.stderr)
        return 2
    try:
        spec = parse_config(args.config)
    except GrowbenchError as exc:
        print(f"growbench: config error: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        spec.run = replace(spec.run, train_seed=args.seed)
    out = Path(args.out) if args.out else spec.out_dir
    out.mkdir(parents=True, exist_ok=True)
    sentinel = out / SENTINEL
    sentinel.write_text(f"{args.command} started; this file is removed on success\n")
    try:
        text = HANDLERS[args.command](spec, out)
    except (GrowbenchError, ValueError, ArithmeticError, IndexError) as exc:
        print(f"growbench: {args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    (out / f"{args.command}_{SUMMARY}").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    sentinel.unlink()
    return 0


if __name__ == "__main__":
    sys.exit(main())
