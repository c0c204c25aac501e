"""Command-line entry point: ``infw {generate,solve,bench,select-delta}``.

Exit status is 0 on success, 1 on a user error (bad flag, bad value, missing
file) and 2 on an internal error.
"""
from __future__ import annotations

import argparse
import math
import os
import re
import sys
import traceback

from .bench import ExperimentSpec, method_config, run_experiment, write_report
from .problem import (
    GenSpec, default_delta_grid, generate_instance, load_instance, save_instance, select_delta,
)
from .solvers import DEFAULT_GAP, METHODS, SolverConfig
from .solvers import solve as run_solver
from .trace import export_trace


class UserError(Exception):
    """Bad input; reported as a one-line message with exit status 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UserError("%s: %s" % (self.prog, message))


def _gamma(text):
    t = text.strip().lower()
    if t == "inf":
        return math.inf
    try:
        val = float(t)
    except ValueError:
        raise argparse.ArgumentTypeError("expected a number or 'inf', got %r" % text) from None
    if math.isnan(val) or val < 0:
        raise argparse.ArgumentTypeError("gamma must be a nonnegative number or 'inf'")
    return val


def _delta(text):
    if text.strip().lower() == "select":
        return "select"
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected a number or 'select', got %r" % text) from None


def _floats(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma-separated numbers, got %r" % text) from None


# built-in defaults; applied after the config file so that both can be overridden
DEFAULTS = {
    "method": "fw", "gamma1": 0.0, "gamma2": math.inf, "gap": DEFAULT_GAP, "max_iters": 100_000,
    "max_seconds": math.inf, "seed": 0, "step": "exact", "delta_units": "raw",
    "holdout": 0.1, "budget": 200, "samples": 1, "workers": 1, "methods": "fw,if-(0,inf)",
    "delta": None, "m": None, "n": None, "r": None, "snr": None, "rho": None,
    "input": None, "out": None, "grid": None,
}


def build_parser():
    p = _Parser(prog="infw", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="flat key=value file; explicit flags win")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out")

    def model(sp):
        sp.add_argument("--m", type=int)
        sp.add_argument("--n", type=int)
        sp.add_argument("--r", type=int)
        sp.add_argument("--snr", type=float)
        sp.add_argument("--rho", type=float)

    def solver(sp):
        sp.add_argument("--gamma1", type=_gamma)
        sp.add_argument("--gamma2", type=_gamma)
        sp.add_argument("--delta", type=_delta,
                        help="radius, or 'select' for holdout selection")
        sp.add_argument("--delta-units", choices=("raw", "normalized"),
                        help="'normalized' multiplies --delta by ||X_Omega||_F")
        sp.add_argument("--gap", type=float, help="relative gap target")
        sp.add_argument("--max-iters", type=int)
        sp.add_argument("--max-seconds", type=float)
        sp.add_argument("--step", choices=("exact", "quad"))

    sp = sub.add_parser("generate", help="draw a synthetic instance")
    common(sp)
    model(sp)
    sp.add_argument("--delta", type=float)

    sp = sub.add_parser("solve", help="run one solver on an instance")
    common(sp)
    sp.add_argument("--input", help="instance directory or triplet file")
    sp.add_argument("--method", choices=METHODS)
    solver(sp)

    sp = sub.add_parser("bench", help="paired batch over seeded instances")
    common(sp)
    model(sp)
    sp.add_argument("--input", help="instance directory or triplet file instead of the model")
    sp.add_argument("--methods", help="comma-separated roster, e.g. fw,if-(0,inf),away")
    sp.add_argument("--samples", type=int)
    sp.add_argument("--workers", type=int)
    solver(sp)

    sp = sub.add_parser("select-delta", help="choose the radius on a holdout set")
    common(sp)
    sp.add_argument("--input", help="instance directory or triplet file")
    sp.add_argument("--holdout", type=float, help="holdout fraction")
    sp.add_argument("--grid", type=_floats, help="comma-separated increasing radii")
    sp.add_argument("--budget", type=int, help="Frank-Wolfe iterations per radius")
    return p


def read_config(path):
    """Flat ``key=value`` file; keys may use dashes or underscores."""
    if not os.path.exists(path):
        raise UserError("config file not found: %s" % path)
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, val = line.partition("=")
            if not sep:
                raise UserError("%s:%d: expected key=value" % (path, lineno))
            out[key.strip().lstrip("-").replace("-", "_")] = val.strip()
    return out


def _merge(args, parser):
    """Explicit flags, then the config file, then built-in defaults."""
    opts = {k: v for k, v in vars(args).items() if v is not None}
    if args.config:
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest: a for a in sub._actions}
        for key, text in read_config(args.config).items():
            if key in ("config", "command") or key not in known:
                raise UserError("config key %r is not an option of '%s'" % (key, args.command))
            if key in opts:
                continue
            act = known[key]
            try:
                val = act.type(text) if act.type else text
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise UserError("config key %r: %s" % (key, exc)) from None
            if act.choices is not None and val not in act.choices:
                raise UserError("config key %r must be one of %s" % (key, ", ".join(act.choices)))
            opts[key] = val
    for key, val in DEFAULTS.items():
        opts.setdefault(key, val)
    return argparse.Namespace(**opts)


def _need(opts, *names):
    missing = ["--" + n.replace("_", "-") for n in names if getattr(opts, n) is None]
    if missing:
        raise UserError("missing required option(s): %s" % ", ".join(missing))


def _gen_spec(opts):
    _need(opts, "m", "n", "r", "snr", "rho")
    try:
        return GenSpec(opts.m, opts.n, opts.r, opts.snr, opts.rho, opts.seed)
    except ValueError as exc:
        raise UserError(str(exc)) from None


def _load(path):
    if path is None:
        raise UserError("missing required option: --input")
    if not os.path.exists(path):
        raise UserError("input not found: %s" % path)
    try:
        return load_instance(path)
    except (ValueError, KeyError) as exc:
        raise UserError("cannot read %s: %s" % (path, exc)) from None


def _check_delta(delta):
    if delta is not None and delta != "select" and not delta > 0:
        raise UserError("--delta must be positive, got %g" % delta)


def _solver_config(opts, method):
    if opts.gamma1 > opts.gamma2:
        raise UserError("need gamma1 <= gamma2, got gamma1=%g gamma2=%g"
                        % (opts.gamma1, opts.gamma2))
    if not opts.gap >= 0:
        raise UserError("--gap must be nonnegative")
    try:
        return SolverConfig(method=method, gamma1=opts.gamma1, gamma2=opts.gamma2,
                            step_rule=opts.step, gap_target=opts.gap, max_iters=opts.max_iters,
                            max_seconds=opts.max_seconds, seed=opts.seed)
    except ValueError as exc:
        raise UserError(str(exc)) from None


def cmd_generate(opts):
    spec = _gen_spec(opts)
    _check_delta(opts.delta)
    _need(opts, "out")
    inst, _ = generate_instance(spec, opts.delta)
    save_instance(inst, opts.out)
    print("wrote %s: %dx%d, %d observed" % (opts.out, inst.shape[0], inst.shape[1],
                                            inst.n_observed))
    return 0


def _delta_for(inst, opts, select_kw):
    delta = opts.delta
    if delta is None:
        if inst.delta is None:
            raise UserError("the instance has no radius; pass --delta (a number or 'select')")
        return inst.delta
    if delta == "select":
        return select_delta(inst, seed=opts.seed, **select_kw)
    if opts.delta_units == "normalized":
        delta /= math.sqrt(inst.scale)
    return delta


def cmd_solve(opts):
    _check_delta(opts.delta)
    cfg = _solver_config(opts, opts.method)
    inst = _load(opts.input)
    inst = inst.with_delta(_delta_for(inst, opts, {}))
    trace = run_solver(inst, cfg)
    s = trace.summary
    print("method=%s delta=%.6g f=%.10g B=%.10g gap=%.6g rank=%d seconds=%.3f reason=%s" % (
        opts.method, inst.delta, s["f"], s["B"], s["gap"], s["final_rank"], s["seconds"],
        s["reason"]))
    if trace.violations:
        print("guarantee violations: %d" % len(trace.violations), file=sys.stderr)
    if opts.out:
        export_trace(trace, opts.out)
    return 0


def split_roster(text):
    """Split a comma-separated roster, keeping ``if-(g1,g2)`` labels whole."""
    parts = re.findall(r"[^,(]+(?:\([^)]*\))?", text)
    return tuple(p.strip() for p in parts if p.strip())


def cmd_bench(opts):
    _check_delta(opts.delta)
    _need(opts, "out")
    base = _solver_config(opts, "fw")
    labels = split_roster(opts.methods)
    for label in labels:
        try:
            method_config(label, base)
        except ValueError as exc:
            raise UserError("--methods: %s" % exc) from None
    common = dict(methods=labels, samples=opts.samples, gap_target=opts.gap,
                  delta="select" if opts.delta is None else opts.delta,
                  delta_units=opts.delta_units, max_seconds=opts.max_seconds,
                  max_iters=opts.max_iters, workers=opts.workers, base_config=base,
                  select_options={"seed": opts.seed})
    try:
        if opts.input is not None:
            _load(opts.input)
            spec = ExperimentSpec(data_path=opts.input, **common)
        else:
            spec = ExperimentSpec(gen=_gen_spec(opts), **common)
    except ValueError as exc:
        raise UserError(str(exc)) from None
    report, traces = run_experiment(spec, trace_dir=os.path.join(opts.out, "traces"))
    write_report(report, os.path.join(opts.out, "report.txt"))
    for label in labels:
        print("%-14s final_rank=%.2f max_rank=%.2f seconds=%.3f censored=%d" % (
            label, report[label + ".mean_final_rank"], report[label + ".mean_max_rank"],
            report[label + ".mean_seconds"], report[label + ".censored"]))
    return 0


def cmd_select_delta(opts):
    inst = _load(opts.input)
    grid = opts.grid if opts.grid is not None else default_delta_grid(inst)
    if not grid:
        raise UserError("--grid is empty")
    if any(b <= a for a, b in zip(grid, grid[1:])) or grid[0] <= 0:
        raise UserError("--grid must be positive and strictly increasing")
    if not (0 < opts.holdout < 0.5):
        raise UserError("--holdout must be in (0, 0.5)")
    delta, info = select_delta(inst, holdout_fraction=opts.holdout, grid=grid,
                               budget=opts.budget, seed=opts.seed, return_details=True)
    for d, e in zip(info["grid"], info["errors"]):
        print("delta=%.6g holdout_sse=%.6g" % (d, e))
    print("selected delta=%.10g" % delta)
    if opts.out:
        save_instance(inst.with_delta(delta), opts.out)
    return 0


COMMANDS = {
    "generate": cmd_generate, "solve": cmd_solve, "bench": cmd_bench,
    "select-delta": cmd_select_delta,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        opts = _merge(args, parser)
        return COMMANDS[args.command](opts)
    except UserError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return exc.code if isinstance(exc.code, int) else 0
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
