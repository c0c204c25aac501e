"""Batched, paired experiments: every method sees the same seeded instances."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
import math
import os
import re
import time

import numpy as np

from .problem import GenSpec, generate_instance, load_instance, select_delta
from .solvers import DEFAULT_GAP, SolverConfig, solve
from .trace import RunTrace, export_trace, read_trace

__all__ = [
    "ExperimentSpec", "RunTrace", "export_trace", "method_config", "read_report",
    "read_trace", "run_experiment", "write_report",
]

_IF_LABEL = re.compile(r"^if-\(\s*([^,()]+)\s*,\s*([^,()]+)\s*\)$")
REACHED = ("gap", "optimal")


def _parse_gamma(text):
    text = text.strip().lower()
    return math.inf if text in ("inf", "infinity") else float(text)


def method_config(label, base=None):
    """Solver config for a roster label.

    Labels are the solver method names plus ``if-(g1,g2)``, e.g. ``if-(0,inf)``
    or ``if-(1,1)``. Plain ``if`` keeps ``base``'s gammas.
    """
    base = base or SolverConfig()
    m = _IF_LABEL.match(label.strip())
    if m:
        return replace(base, method="if", gamma1=_parse_gamma(m.group(1)),
                       gamma2=_parse_gamma(m.group(2)))
    return replace(base, method=label.strip())


@dataclass(frozen=True)
class ExperimentSpec:
    """Batch description.

    Parameters
    ----------
    gen : GenSpec, optional
        Instance model. Sample ``s`` uses seed ``gen.seed + s``.
    data_path : str, optional
        Instance directory or triplet file, used instead of ``gen``; every
        sample then solves the same instance.
    methods : tuple of str
        Roster labels, see :func:`method_config`.
    samples : int
    gap_target : float
    delta : float or "select"
        A fixed radius, or ``"select"`` for :func:`~infw.problem.select_delta`
        on each sample.
    delta_units : {"raw", "normalized"}
        ``"normalized"`` multiplies a fixed ``delta`` by ``||X_Omega||_F``,
        i.e. gives the radius for data rescaled to unit Frobenius norm.
    max_seconds, max_iters : per-run limits; runs stopped by them are censored.
    workers : int
        Process pool size; 1 runs serially in this process.
    base_config : SolverConfig, optional
        Shared solver settings (step rule, oracle, ...).
    select_options : dict
        Keyword arguments for ``select_delta``.
    """

    gen: GenSpec | None = None
    data_path: str | None = None
    methods: tuple = ("fw", "if-(0,inf)")
    samples: int = 1
    gap_target: float = DEFAULT_GAP
    delta: object = "select"
    delta_units: str = "raw"
    max_seconds: float = math.inf
    max_iters: int = 100_000
    workers: int = 1
    base_config: SolverConfig | None = None
    select_options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("samples must be at least 1")
        if (self.gen is None) == (self.data_path is None):
            raise ValueError("give exactly one of gen and data_path")
        if not self.methods:
            raise ValueError("method roster is empty")
        if self.delta != "select":
            if not (isinstance(self.delta, (int, float)) and self.delta > 0):
                raise ValueError("delta must be positive or 'select', got %r" % (self.delta,))
        if self.delta_units not in ("raw", "normalized"):
            raise ValueError("delta_units must be 'raw' or 'normalized'")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        for label in self.methods:
            method_config(label)  # validates

    def configs(self):
        base = self.base_config or SolverConfig()
        base = replace(base, gap_target=self.gap_target, max_seconds=self.max_seconds,
                       max_iters=self.max_iters)
        return [method_config(label, base) for label in self.methods]

    def instance(self, sample):
        if self.data_path is not None:
            return load_instance(self.data_path)
        inst, _ = generate_instance(replace(self.gen, seed=self.gen.seed + sample))
        return inst


def _resolve_delta(spec, inst):
    """Radius for one sample and the seconds spent choosing it."""
    if spec.delta == "select":
        t0 = time.perf_counter()
        delta = select_delta(inst, **spec.select_options)
        return delta, time.perf_counter() - t0
    delta = float(spec.delta)
    if spec.delta_units == "normalized":
        delta /= math.sqrt(inst.scale)
    return delta, 0.0


def _run_job(job):
    sample, index, label, config, inst, expected_hash = job
    if inst.omega_hash() != expected_hash:
        raise RuntimeError("sample %d: instance differs from the one given to other methods"
                           % sample)
    trace = solve(inst, config)
    trace.extras.update({"sample": sample, "method_label": label, "omega_hash": expected_hash,
                         "delta": inst.delta})
    return sample, index, trace


def run_experiment(spec, trace_dir=None):
    """Run every roster method on every sample.

    Timing covers solver work only; instance generation and radius selection
    are excluded (selection time is reported separately).

    Returns
    -------
    report : dict
        Flat keys. Per method ``<label>.mean_final_rank``,
        ``<label>.mean_max_rank``, ``<label>.mean_seconds`` (over uncensored
        runs, NaN if none), ``<label>.censored``, ``<label>.runs`` and
        ``<label>.violations``; plus ``samples``, ``delta.<s>``,
        ``select_seconds.<s>`` and ``omega_hash.<s>``.
    traces : list of RunTrace
        Ordered by (sample, method).
    """
    configs = spec.configs()
    jobs, header = [], {"samples": spec.samples, "gap_target": spec.gap_target}
    for s in range(spec.samples):
        inst = spec.instance(s)
        delta, sel_seconds = _resolve_delta(spec, inst)
        inst = inst.with_delta(delta)
        h = inst.omega_hash()
        header["delta.%d" % s] = delta
        header["select_seconds.%d" % s] = sel_seconds
        header["omega_hash.%d" % s] = h
        for i, (label, cfg) in enumerate(zip(spec.methods, configs)):
            jobs.append((s, i, label, cfg, inst, h))

    if spec.workers == 1:
        done = [_run_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            done = list(pool.map(_run_job, jobs))
    done.sort(key=lambda t: (t[0], t[1]))
    traces = [t for _, _, t in done]

    report = dict(header)
    for i, label in enumerate(spec.methods):
        mine = [t for s, j, t in done if j == i]
        ok = [t for t in mine if t.summary["reason"] in REACHED]
        report["%s.runs" % label] = len(mine)
        report["%s.censored" % label] = len(mine) - len(ok)
        report["%s.mean_final_rank" % label] = float(np.mean([t.summary["final_rank"] for t in mine]))
        report["%s.mean_max_rank" % label] = float(np.mean([t.summary["max_rank"] for t in mine]))
        report["%s.mean_seconds" % label] = (
            float(np.mean([t.summary["seconds"] for t in ok])) if ok else math.nan
        )
        report["%s.violations" % label] = sum(len(t.violations) for t in mine)

    if trace_dir is not None:
        os.makedirs(trace_dir, exist_ok=True)
        for t in traces:
            name = "sample%03d_%s.csv" % (t.extras["sample"], _safe(t.extras["method_label"]))
            export_trace(t, os.path.join(trace_dir, name))
    return report, traces


def _safe(label):
    return re.sub(r"[^A-Za-z0-9.-]+", "_", label).strip("_")


def write_report(report, destination):
    """Write a flat report as ``key=value`` lines."""
    with open(destination, "w", encoding="utf-8") as fh:
        for key, val in report.items():
            fh.write("%s=%s\n" % (key, repr(val) if isinstance(val, float) else val))


def read_report(source):
    out = {}
    with open(source, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, val = line.partition("=")
            for conv in (int, float):
                try:
                    out[key] = conv(val)
                    break
                except ValueError:
                    pass
            else:
                out[key] = val
    return out
