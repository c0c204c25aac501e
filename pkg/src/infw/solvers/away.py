"""Frank-Wolfe with away steps, in the natural and the atomic representation."""
from __future__ import annotations

import time

import numpy as np

from ..face import alpha_stop, away_direction, minimal_face
from ..iterate import Step
from ..linalg import svd_scale_plus_rank1
from ._common import (
    AWAY, AWAY_DROP, TOWARD, Oracle, Recorder, choose_step, fw_step, oracle_bound, record_fw,
    start,
)
from .inface import apply_direction

MERGE_TOL = 1e-10
PURGE_TOL = 1e-12


def run_away_natural(instance, config, init=None, callback=None):
    """Away steps measured against the minimal face of the nuclear-norm ball.

    Both the regular subproblem and the face's away point are solved every
    iteration; the regular step is taken when its slope is at least as
    negative as the away slope.
    """
    t0 = time.perf_counter()
    cfg = config.resolved(instance)
    delta = instance.delta
    oracle = Oracle(cfg)
    it, B = start(instance, cfg, oracle, init)
    rec = Recorder("away", instance, cfg, it, B, t0, callback, standard_start=init is None)

    while True:
        top = oracle_bound(it, rec, oracle)
        reason = rec.stop_reason(it) if top is not None else "optimal"
        if reason:
            break
        face = minimal_face(it.svd, delta, on_boundary=it.on_boundary)
        fw_slope = -delta * top[0] - it.grad_dot_z()
        d = away_direction(face, it, top)
        if d is None or fw_slope <= d.slope:
            new, alpha, step = fw_step(it, top, rec, cfg)
            record_fw(rec, it, new, alpha, step, kind=TOWARD)
        else:
            astop = alpha_stop(face, it.svd, d, delta)
            d_omega = d.omega_values(it)
            beta = choose_step(cfg, instance, it.grad, d_omega, astop)
            hits = beta >= astop
            new, step = apply_direction(it, d, beta, hits, d_omega)
            if face.is_boundary:
                counter = "a" if hits else "b"
            else:
                counter = "d"
            rec.step(it, new, AWAY_DROP if hits else AWAY, beta, counter, step)
        it = new

    return rec.finish(it, reason, oracle_calls=oracle.calls, inexact_oracle=oracle.inexact)


class AtomicState:
    """Convex combination ``sum_j lam_j * delta * u_j v_j^T`` of rank-one atoms.

    Signs are folded into ``u_j``. Columns of ``U``/``V`` are the atoms.
    """

    def __init__(self, u, v):
        self.U = np.asarray(u, dtype=float)[:, None].copy()
        self.V = np.asarray(v, dtype=float)[:, None].copy()
        self.lam = np.ones(1)

    @property
    def size(self):
        return self.lam.size

    def find(self, u, v):
        """Index of an atom equal to ``u v^T`` within ``MERGE_TOL``, else ``None``."""
        du = np.linalg.norm(self.U - u[:, None], axis=0)
        dv = np.linalg.norm(self.V - v[:, None], axis=0)
        same = du + dv <= MERGE_TOL
        # (u, v) and (-u, -v) describe the same matrix
        du = np.linalg.norm(self.U + u[:, None], axis=0)
        dv = np.linalg.norm(self.V + v[:, None], axis=0)
        same |= du + dv <= MERGE_TOL
        hits = np.flatnonzero(same)
        return int(hits[0]) if hits.size else None

    def atom_inners(self, grad):
        """``<grad, u_j v_j^T>`` for every atom."""
        G = grad.csr
        return np.einsum("ij,ij->j", self.U, G @ self.V)

    def toward(self, u, v, alpha):
        self.lam *= 1.0 - alpha
        j = self.find(u, v)
        if j is None:
            self.U = np.column_stack([self.U, u])
            self.V = np.column_stack([self.V, v])
            self.lam = np.append(self.lam, alpha)
        else:
            self.lam[j] += alpha
        self._purge()

    def away(self, j, alpha, drop):
        self.lam *= 1.0 + alpha
        self.lam[j] -= alpha
        if drop:
            self.lam[j] = 0.0
        self._purge()

    def _purge(self):
        keep = self.lam >= PURGE_TOL
        if not keep.all():
            self.U, self.V, self.lam = self.U[:, keep], self.V[:, keep], self.lam[keep]
        self.lam /= self.lam.sum()

    def to_dense(self, delta):
        return delta * (self.U * self.lam) @ self.V.T


def run_away_atomic(instance, config, init=None, callback=None):
    """Away steps over the simplex of active rank-one atoms.

    The away vertex is the active atom with the largest inner product with the
    gradient; a full away step (``lam_j / (1 - lam_j)``) removes that atom.
    Warm starts are not supported since the atomic decomposition of an
    arbitrary point is not available.
    """
    if init is not None:
        raise ValueError("the atomic variant does not accept a warm start")
    t0 = time.perf_counter()
    cfg = config.resolved(instance)
    delta = instance.delta
    oracle = Oracle(cfg)
    it, B = start(instance, cfg, oracle, None)
    rec = Recorder("away-atomic", instance, cfg, it, B, t0, callback)
    # rank accounting over the natural faces does not apply to atom drops
    rec.check_rank = False
    state = AtomicState(it.svd.U[:, 0], it.svd.V[:, 0])
    rows, cols = instance.rows, instance.cols

    while True:
        top = oracle_bound(it, rec, oracle)
        reason = rec.stop_reason(it) if top is not None else "optimal"
        if reason:
            break
        gz = it.grad_dot_z()
        fw_slope = -delta * top[0] - gz
        away_ok = state.size > 1
        if away_ok:
            inners = delta * state.atom_inners(it.grad)
            j = int(np.argmax(inners))
            away_slope = gz - inners[j]
            away_ok = away_slope < 0
        if not away_ok or fw_slope <= away_slope:
            _, u, v = top[:3]
            new, alpha, step = fw_step(it, top, rec, cfg)
            state.toward(-u, v, alpha)
            record_fw(rec, it, new, alpha, step, kind=TOWARD)
        else:
            lam_j = state.lam[j]
            astop = lam_j / (1.0 - lam_j)
            u, v = state.U[:, j].copy(), state.V[:, j].copy()
            d_omega = it.z_omega - delta * u[rows] * v[cols]
            beta = choose_step(cfg, instance, it.grad, d_omega, astop)
            hits = beta >= astop
            svd = svd_scale_plus_rank1(it.svd, 1.0 + beta, -beta * delta * u, v, it.store_tol)
            new = it.advance(svd, on_boundary=None, z_omega=it.z_omega + beta * d_omega)
            step = Step(1.0 + beta, (-beta * delta * u)[:, None], v[:, None])
            state.away(j, beta, hits)
            rec.step(it, new, AWAY_DROP if hits else AWAY, beta, "a" if hits else "b", step)
        it = new

    return rec.finish(it, reason, oracle_calls=oracle.calls, inexact_oracle=oracle.inexact,
                      atoms=state.size)
