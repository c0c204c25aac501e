"""Per-iteration run records and their CSV serialization."""
from __future__ import annotations

from dataclasses import dataclass, field, fields
import math
import os

COLUMNS = ("k", "seconds", "f", "B", "gap", "rank", "step", "alpha", "Na", "Nb", "Nc", "Nd")


def relative_gap(f, B):
    """``(f - B) / B`` when ``B > 0``, else the absolute gap ``f - B``."""
    return (f - B) / B if B > 0 else f - B


@dataclass
class TraceRecord:
    k: int
    seconds: float
    f: float
    B: float
    gap: float
    rank: int
    step: str
    alpha: float
    Na: int
    Nb: int
    Nc: int
    Nd: int


@dataclass
class RunTrace:
    """Iteration log of one solver run.

    ``summary`` holds the terminal state (``reason``, ``final_rank``,
    ``max_rank``, ``seconds`` and friends). ``final_svd`` and ``violations``
    are in-memory only and are not written by :func:`export_trace`.
    """

    method: str
    records: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)
    final_svd: object = None
    extras: dict = field(default_factory=dict)

    def column(self, name):
        return [getattr(r, name) for r in self.records]

    @property
    def final(self):
        return self.records[-1] if self.records else None

    def __eq__(self, other):
        if not isinstance(other, RunTrace):
            return NotImplemented
        return (self.method == other.method and self.records == other.records
                and self.summary == other.summary)


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)


def export_trace(trace, destination):
    """Write ``trace`` as CSV with a trailing ``#``-commented summary block."""
    try:
        fh = open(destination, "w", encoding="utf-8", newline="\n")
    except OSError as exc:
        raise OSError("cannot write trace to %s: %s" % (os.fspath(destination), exc)) from exc
    with fh:
        fh.write(",".join(COLUMNS) + "\n")
        for rec in trace.records:
            fh.write(",".join(_fmt(getattr(rec, c)) for c in COLUMNS) + "\n")
        fh.write("# method=%s\n" % trace.method)
        for key, val in trace.summary.items():
            fh.write("# %s=%s\n" % (key, _fmt(val)))


def _parse_scalar(text):
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    if text in ("True", "False"):
        return text == "True"
    if text == "None":
        return None
    return text


def read_trace(source):
    """Inverse of :func:`export_trace`."""
    try:
        fh = open(source, encoding="utf-8")
    except OSError as exc:
        raise OSError("cannot read trace %s: %s" % (os.fspath(source), exc)) from exc
    types = {f.name: f.type for f in fields(TraceRecord)}
    conv = {"int": int, "float": float, "str": str}
    with fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != COLUMNS:
            raise ValueError("unexpected trace header %r" % (header,))
        trace = RunTrace(method="")
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition("=")
                if key == "method":
                    trace.method = val
                else:
                    trace.summary[key] = _parse_scalar(val)
            elif line:
                parts = line.split(",")
                kw = {c: conv[types[c]](p) for c, p in zip(COLUMNS, parts)}
                trace.records.append(TraceRecord(**kw))
    return trace


def best_gap_curve(trace):
    """Running minimum of the relative gap."""
    out, best = [], math.inf
    for rec in trace.records:
        best = min(best, rec.gap)
        out.append(best)
    return out
