"""Configuration, bookkeeping and the shared pieces of every solver loop."""
from __future__ import annotations

from dataclasses import dataclass, replace
import math
import time
import warnings

import numpy as np

from ..iterate import Iterate, Step
from ..linalg import InexactOracleWarning, ThinSVD, svd_scale_plus_rank1, top_singular_triplet
from ..problem import exact_linesearch
from ..trace import RunTrace, TraceRecord, relative_gap

METHODS = ("fw", "if", "if-opt", "if-rank", "away", "away-atomic")
DEFAULT_GAP = 10 ** -2.5
# "auto" oracle: dense Gram eigensolver up to this smaller dimension, Lanczos above
GRAM_MAX_DIM = 1000

# step-kind labels written to traces
INIT, FW, LOWER, STAY, INTERIOR, FACE_OPT, TOWARD, AWAY_DROP, AWAY = (
    "init", "fw", "in-face-boundary", "in-face-partial", "in-face-interior",
    "face-opt", "toward", "away-drop", "away",
)


@dataclass(frozen=True)
class SolverConfig:
    """Solver settings.

    ``L_bar`` and ``D_bar`` default to the instance's ``scale`` and ``2 * delta``.
    ``gamma1``/``gamma2`` only matter for ``method="if"``.
    """

    method: str = "fw"
    gamma1: float = 0.0
    gamma2: float = math.inf
    L_bar: float | None = None
    D_bar: float | None = None
    step_rule: str = "exact"
    gap_target: float = DEFAULT_GAP
    max_iters: int = 100_000
    max_seconds: float = math.inf
    seed: int = 0
    direction: str = "away"
    oracle_tol: float = 1e-9
    oracle_max_iters: int | None = None
    oracle_method: str = "auto"
    inner_budget: int = 50
    inner_tol: float = 1e-6
    stall_window: int = 5
    check_guarantees: bool = True

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError("unknown method %r; choose from %s" % (self.method, ", ".join(METHODS)))
        if not (0 <= self.gamma1 <= self.gamma2):
            raise ValueError("need 0 <= gamma1 <= gamma2, got gamma1=%r gamma2=%r"
                             % (self.gamma1, self.gamma2))
        if self.step_rule not in ("exact", "quad"):
            raise ValueError("step_rule must be 'exact' or 'quad'")
        if self.direction not in ("away", "toward"):
            raise ValueError("direction must be 'away' or 'toward'")
        if self.oracle_method not in ("auto", "power", "lanczos", "gram"):
            raise ValueError("oracle_method must be one of auto, power, lanczos, gram")
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")

    def resolved(self, instance):
        """Copy with ``L_bar``/``D_bar`` filled in and checked against the instance."""
        if instance.delta is None:
            raise ValueError("instance has no delta; set one or run select_delta first")
        L = instance.scale if self.L_bar is None else float(self.L_bar)
        D = 2.0 * instance.delta if self.D_bar is None else float(self.D_bar)
        if L < instance.scale * (1 - 1e-12):
            raise ValueError("L_bar must be at least the objective scale %.6g" % instance.scale)
        if D < 2.0 * instance.delta * (1 - 1e-12):
            raise ValueError("D_bar must be at least 2 * delta")
        return replace(self, L_bar=L, D_bar=D)


def quadratic_step(grad, d_omega, L_bar, cap):
    """``min(-<grad, d> / (L_bar ||d_Omega||^2), cap)`` for a descent direction ``d``."""
    d_omega = np.asarray(d_omega, dtype=float)
    slope = grad.inner(d_omega)
    if slope >= 0:
        raise ValueError("quadratic_step needs a descent direction")
    sq = float(d_omega @ d_omega)
    if sq == 0.0:
        raise ValueError("direction vanishes on the observed entries")
    return min(-slope / (L_bar * sq), cap)


def choose_step(config, instance, grad, d_omega, cap):
    if config.step_rule == "exact":
        return exact_linesearch(grad, d_omega, instance.scale, cap)
    return quadratic_step(grad, d_omega, config.L_bar, cap)


LOWER_FACE, STAY_FACE, REGULAR_FW = "lower", "stay", "regular"


def _criterion(f_new, f_k, B, gamma, L_bar, D_bar):
    if f_new is None:
        return False
    gap_new = f_new - B
    if gap_new <= 0:
        return True
    if math.isinf(gamma):
        return False
    return 1.0 / gap_new >= 1.0 / (f_k - B) + gamma / (2.0 * L_bar * D_bar**2)


def step_decision(f_B, f_A, f_k, B, gamma1, gamma2, L_bar, D_bar):
    """Pick between the face-boundary candidate, the partial in-face candidate and a regular step.

    ``f_B``/``f_A`` may be ``None`` when the candidate does not exist.
    """
    if not f_k > B:
        raise ValueError("step_decision needs a positive gap")
    if _criterion(f_B, f_k, B, gamma1, L_bar, D_bar):
        return LOWER_FACE
    if _criterion(f_A, f_k, B, gamma2, L_bar, D_bar):
        return STAY_FACE
    return REGULAR_FW


class Oracle:
    """Top singular triplet of the gradient, warm-started from the previous call."""

    def __init__(self, config):
        self.tol = config.oracle_tol
        self.max_iters = config.oracle_max_iters
        self.seed = config.seed
        self.method = config.oracle_method
        self.gram_dim = GRAM_MAX_DIM
        self.u = None
        self.v = None
        self.calls = 0
        self.inexact = 0

    def __call__(self, grad):
        self.calls += 1
        method = self.method
        if method == "auto":
            method = "gram" if min(grad.shape) <= self.gram_dim else "lanczos"
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", InexactOracleWarning)
            sigma, u, v, info = top_singular_triplet(
                grad, tol=self.tol, max_iters=self.max_iters, seed=self.seed, v0=self.v,
                method=method, u0=self.u,
            )
        if not info["converged"] or caught:
            self.inexact += 1
        self.u, self.v = u, v
        return sigma, u, v, info


def initial_iterate(instance, oracle):
    """``Z0 = -delta u0 v0^T`` from the gradient at zero, and the matching lower bound."""
    delta = instance.delta
    g0 = instance.observed.with_values(-instance.scale * instance.values)
    sigma, u, v, _ = oracle(g0)
    svd = ThinSVD.rank_one(delta, -u, v)
    it = Iterate.from_svd(instance, svd, on_boundary=True)
    # f(0) + <grad f(0), Z0> = f(0) - delta * sigma
    f_zero = 0.5 * instance.scale * float(instance.values @ instance.values)
    return it, max(f_zero - delta * sigma, 0.0)


def start(instance, config, oracle, init):
    if instance.delta is None:
        raise ValueError("instance has no delta; set one or run select_delta first")
    if init is None:
        return initial_iterate(instance, oracle)
    if isinstance(init, Iterate):
        return init, 0.0
    nuc = init.nuclear_norm
    if nuc > instance.delta * (1 + 1e-9):
        raise ValueError("initial point is outside the nuclear-norm ball")
    return Iterate.from_svd(instance, init), 0.0


class Recorder:
    """Counters, bounds, trace records, stopping rules and guarantee checks for a run."""

    def __init__(self, method, instance, config, it, B, t0, callback=None, standard_start=True):
        self.method = method
        self.instance = instance
        self.cfg = config
        self.t0 = t0
        self.standard_start = standard_start
        self.check_rank = True
        self.B = B
        self.k = 0
        self.N = {"a": 0, "b": 0, "c": 0, "d": 0}
        self.credit = 0.0
        self.rank0 = it.rank
        self.max_rank = it.rank
        self.trace = RunTrace(method)
        self.callback = callback
        self.two_LD2 = 2.0 * config.L_bar * config.D_bar**2
        self.gap0 = None  # f(x_0) - B_0, fixed after iteration 0's bound update
        self._append(it, INIT, 0.0)

    # -- records
    def _append(self, it, kind, alpha):
        rank = it.rank
        self.max_rank = max(self.max_rank, rank)
        rec = TraceRecord(
            self.k, time.perf_counter() - self.t0, it.f, self.B, relative_gap(it.f, self.B),
            rank, kind, float(alpha), self.N["a"], self.N["b"], self.N["c"], self.N["d"],
        )
        self.trace.records.append(rec)
        return rec

    def update_bound(self, Bw):
        if Bw > self.B:
            self.B = Bw
            last = self.trace.records[-1]
            last.B = Bw
            last.gap = relative_gap(last.f, Bw)

    def freeze_initial_gap(self, it):
        if self.gap0 is None:
            self.gap0 = it.f - self.B

    # -- stopping
    def stop_reason(self, it):
        if relative_gap(it.f, self.B) <= self.cfg.gap_target:
            return "gap"
        if self.k >= self.cfg.max_iters:
            return "max_iters"
        if time.perf_counter() - self.t0 >= self.cfg.max_seconds:
            return "max_seconds"
        return None

    # -- checks
    def violation(self, name, detail):
        self.trace.violations.append((self.k, name, detail))

    def check_common(self, old, new):
        delta = self.instance.delta
        if new.svd.nuclear_norm > delta * (1 + 1e-9):
            self.violation("feasibility", new.svd.nuclear_norm / delta - 1)
        if self.cfg.step_rule == "exact" and new.f > old.f + 1e-12:
            self.violation("monotone", new.f - old.f)
        bound = self.rank0 + self.k - 2 * self.N["a"] - self.N["b"]
        if self.check_rank and new.rank > bound:
            self.violation("rank", (new.rank, bound))
        if self.B > new.f + 1e-10:
            self.violation("lower-bound", self.B - new.f)

    @staticmethod
    def _inv(gap):
        return math.inf if gap <= 0 else 1.0 / gap

    def check_fw_step(self, f_old, f_new):
        """One-step reciprocal-gap growth for a regular step, using the same bound on both sides."""
        lhs = self._inv(f_new - self.B)
        rhs = self._inv(f_old - self.B) + 1.0 / self.two_LD2
        if lhs < rhs * (1 - 1e-9):
            self.violation("fw-step", (lhs, rhs))

    def check_chain(self, f_new, credit, name):
        """``1/(f - B) >= 1/(f0 - B0) + credit / (2 L D^2)`` after the current step."""
        if self.gap0 is None:
            return
        lhs = self._inv(f_new - self.B)
        rhs = self._inv(self.gap0) + credit / self.two_LD2
        if lhs < rhs * (1 - 1e-9):
            self.violation(name, (lhs, rhs))

    def check_rate(self, f_new, count):
        """``f - B <= 2 L D^2 / count`` (the simple rate form)."""
        if self.standard_start and count >= 1 and f_new - self.B > self.two_LD2 / count * (1 + 1e-9):
            self.violation("rate", (f_new - self.B, self.two_LD2 / count))

    def check_specialized(self, f_new):
        """``f - B <= 8 delta^2 scale / (4 + credit)`` when ``L_bar = scale`` and ``D_bar = 2 delta``."""
        inst = self.instance
        if not self.standard_start:
            return
        if not (math.isclose(self.cfg.L_bar, inst.scale) and math.isclose(self.cfg.D_bar, 2 * inst.delta)):
            return
        bound = 8.0 * inst.delta**2 * inst.scale / (4.0 + self.credit)
        if f_new - self.B > bound * (1 + 1e-9):
            self.violation("if-guarantee", (f_new - self.B, bound))

    # -- step bookkeeping
    def step(self, old, new, kind, alpha, counter, step=None, credit=0.0):
        self.k += 1
        if counter:
            self.N[counter] += 1
        self.credit += credit
        rec = self._append(new, kind, alpha)
        if self.cfg.check_guarantees:
            self.check_common(old, new)
        if self.callback is not None:
            self.callback(rec, new, step)
        return rec

    def finish(self, it, reason, **extra):
        tr = self.trace
        tr.final_svd = it.svd
        last = tr.records[-1]
        tr.summary = {
            "reason": reason,
            "iterations": self.k,
            "final_rank": last.rank,
            "max_rank": self.max_rank,
            "seconds": time.perf_counter() - self.t0,
            "f": last.f,
            "B": last.B,
            "gap": last.gap,
            "Na": self.N["a"], "Nb": self.N["b"], "Nc": self.N["c"], "Nd": self.N["d"],
        }
        tr.summary.update(extra)
        return tr


def linear_subproblem(grad, delta, top=None, **oracle_kw):
    """Minimize ``<grad, Z>`` over the nuclear-norm ball of radius ``delta``.

    Returns
    -------
    atom : ThinSVD
        ``-delta u v^T`` for the top singular pair ``(u, v)`` of ``grad``.
    inner : float
        ``<grad, atom> = -delta * sigma_1``.

    A zero gradient returns ``(None, 0.0)``: every feasible point is optimal.
    """
    if not np.any(grad.values):
        return None, 0.0
    if top is None:
        top = top_singular_triplet(grad, **oracle_kw)
    sigma, u, v = top[:3]
    return ThinSVD.rank_one(delta, -u, v), -delta * sigma


def wolfe_lower_bound(f_k, grad, z_omega, atom_inner):
    """``f_k + <grad, atom - Z>`` given ``atom_inner = <grad, atom>``."""
    return f_k + atom_inner - grad.inner(z_omega)


def oracle_bound(it, rec, oracle):
    """Solve the linear subproblem at ``it`` and fold its Wolfe bound into ``rec``."""
    if not np.any(it.grad.values):
        rec.update_bound(it.f)
        return None
    top = oracle(it.grad)
    rec.update_bound(wolfe_lower_bound(it.f, it.grad, it.z_omega, -it.instance.delta * top[0]))
    rec.freeze_initial_gap(it)
    return top


def fw_step(it, top, rec, cfg):
    """Regular step toward ``-delta u v^T``; returns the next iterate and the step taken."""
    inst = it.instance
    delta = inst.delta
    sigma, u, v = top[:3]
    d_omega = -delta * u[inst.rows] * v[inst.cols] - it.z_omega
    alpha = choose_step(cfg, inst, it.grad, d_omega, 1.0)
    svd = svd_scale_plus_rank1(it.svd, 1.0 - alpha, -alpha * delta * u, v, it.store_tol)
    new = it.advance(svd, on_boundary=True if alpha >= 1.0 else None,
                     z_omega=it.z_omega + alpha * d_omega)
    step = Step(1.0 - alpha, (-alpha * delta * u)[:, None], v[:, None])
    return new, alpha, step


def record_fw(rec, old, new, alpha, step, kind=FW):
    """Bookkeeping for a regular step: counters, credit and the per-step checks."""
    f_old = old.f
    rec.step(old, new, kind, alpha, "c", step, credit=1.0)
    if rec.cfg.check_guarantees:
        rec.check_fw_step(f_old, new.f)
