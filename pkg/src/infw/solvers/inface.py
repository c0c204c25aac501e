"""In-face extended Frank-Wolfe and its alternating full-optimization variant."""
from __future__ import annotations

import math
import time

import numpy as np

from ..face import (
    alpha_stop, away_direction, face_optimize, inface_fw_direction, minimal_face,
)
from ..iterate import Step
from ..linalg import svd_inface_update, svd_scale_plus_rank1
from ..problem import exact_linesearch, objective_value
from ._common import (
    FACE_OPT, INTERIOR, LOWER, LOWER_FACE, STAY, STAY_FACE, Oracle, Recorder, choose_step,
    fw_step, oracle_bound, record_fw, start, step_decision,
)


def apply_direction(it, direction, alpha, hits_stop, d_omega=None):
    """Move ``alpha`` along an in-face direction; returns the new iterate and the step."""
    svd = it.svd
    step = direction.step(svd, alpha)
    z = None if d_omega is None else it.z_omega + alpha * d_omega
    if direction.kind == "face":
        new_svd = svd_inface_update(svd, alpha * direction.delta_mat, rank_tol=it.store_tol)
        return it.advance(new_svd, on_boundary=True, z_omega=z), step
    new_svd = svd_scale_plus_rank1(svd, step.c, step.P, direction.v, it.store_tol)
    return it.advance(new_svd, on_boundary=True if hits_stop else None, z_omega=z), step


def _f_along(it, d_omega, alpha):
    return objective_value(it.z_omega + alpha * d_omega, it.instance)


def _inface_counter(face, hits_stop):
    if not face.is_boundary:
        return "d"
    return "a" if hits_stop else "b"


def run_inface(instance, config, init=None, callback=None):
    """In-face extended Frank-Wolfe.

    Each iteration first tries an in-face direction (``config.direction``,
    away steps by default). The full in-face step to the face boundary is
    taken when it passes the ``gamma1`` test, the line-searched partial step
    when it passes the ``gamma2`` test, and a regular Frank-Wolfe step
    otherwise. ``method="if-rank"`` starts with both gammas infinite (plain
    Frank-Wolfe steps) and switches to ``gamma1 = gamma2 = 1`` after
    ``config.stall_window`` consecutive iterations without a rank increase.
    """
    t0 = time.perf_counter()
    cfg = config.resolved(instance)
    method = cfg.method if cfg.method in ("if", "if-rank") else "if"
    if method == "if-rank":
        g1 = g2 = math.inf
    else:
        g1, g2 = cfg.gamma1, cfg.gamma2
    delta = instance.delta
    direction_fn = away_direction if cfg.direction == "away" else inface_fw_direction
    oracle = Oracle(cfg)
    it, B = start(instance, cfg, oracle, init)
    rec = Recorder(method, instance, cfg, it, B, t0, callback, standard_start=init is None)
    stall = 0
    switched_at = None

    while True:
        face = minimal_face(it.svd, delta, on_boundary=it.on_boundary)
        use_inface = not (math.isinf(g1) and math.isinf(g2))
        top = None
        if not face.is_boundary or not use_inface:
            top = oracle_bound(it, rec, oracle)
            if top is None:
                reason = "optimal"
                break
        reason = rec.stop_reason(it)
        if reason:
            break
        if not it.f > rec.B:
            reason = "optimal"
            break

        choice, d = None, None
        if use_inface:
            d = direction_fn(face, it, top)
        if d is not None:
            astop = alpha_stop(face, it.svd, d, delta)
            d_omega = d.omega_values(it)
            f_B = _f_along(it, d_omega, astop) if math.isfinite(astop) else None
            beta = choose_step(cfg, instance, it.grad, d_omega, astop)
            f_A = _f_along(it, d_omega, beta) if beta > 0 else None
            choice = step_decision(f_B, f_A, it.f, rec.B, g1, g2, cfg.L_bar, cfg.D_bar)

        if choice == LOWER_FACE:
            new, step = apply_direction(it, d, astop, True, d_omega)
            rec.step(it, new, LOWER if face.is_boundary else INTERIOR, astop,
                     _inface_counter(face, True), step, credit=g1)
        elif choice == STAY_FACE:
            hits = beta >= astop
            new, step = apply_direction(it, d, beta, hits, d_omega)
            rec.step(it, new, STAY if face.is_boundary else INTERIOR, beta,
                     _inface_counter(face, hits), step, credit=g2)
        else:
            if top is None:
                top = oracle_bound(it, rec, oracle)
                if top is None:
                    reason = "optimal"
                    break
                reason = rec.stop_reason(it)
                if reason:
                    break
            new, alpha, step = fw_step(it, top, rec, cfg)
            record_fw(rec, it, new, alpha, step)

        if cfg.check_guarantees:
            rec.check_chain(new.f, rec.credit, "if-chain")
            rec.check_specialized(new.f)
        if method == "if-rank" and switched_at is None:
            stall = stall + 1 if new.rank <= it.rank else 0
            if stall >= cfg.stall_window:
                g1 = g2 = 1.0
                switched_at = rec.k
        it = new

    return rec.finish(it, reason, oracle_calls=oracle.calls, inexact_oracle=oracle.inexact,
                      switched_at=switched_at)


def run_inface_optimization(instance, config, init=None, callback=None):
    """Alternate full optimization over the current minimal face with regular Frank-Wolfe steps.

    An interior iterate is first moved to the boundary along the away
    direction (to the boundary when that does not increase ``f``, otherwise
    by the capped line search) so the face solve has a proper face to work
    on. Each composite iteration ends with exactly one regular step.
    """
    t0 = time.perf_counter()
    cfg = config.resolved(instance)
    delta = instance.delta
    oracle = Oracle(cfg)
    it, B = start(instance, cfg, oracle, init)
    rec = Recorder("if-opt", instance, cfg, it, B, t0, callback, standard_start=init is None)
    composites = 0
    fallbacks = 0

    while True:
        top = None
        if not it.on_boundary:
            top = oracle_bound(it, rec, oracle)
            if top is None:
                reason = "optimal"
                break
            reason = rec.stop_reason(it)
            if reason:
                break
            face = minimal_face(it.svd, delta, on_boundary=False)
            d = away_direction(face, it, top)
            if d is not None:
                astop = alpha_stop(face, it.svd, d, delta)
                d_omega = d.omega_values(it)
                if math.isfinite(astop) and _f_along(it, d_omega, astop) <= it.f:
                    alpha = astop
                else:
                    alpha = exact_linesearch(it.grad, d_omega, instance.scale, astop)
                if alpha > 0:
                    new, step = apply_direction(it, d, alpha, alpha >= astop, d_omega)
                    rec.step(it, new, INTERIOR, alpha, "d", step)
                    it, top = new, None

        face = minimal_face(it.svd, delta, on_boundary=it.on_boundary)
        if face.is_boundary and face.rank >= 2:
            M, info = face_optimize(face, it, cfg.inner_budget, cfg.inner_tol)
            fallbacks += info["fallback"]
            if info["f_end"] < it.f:
                H = M - np.diag(it.svd.s)
                new = it.advance(svd_inface_update(it.svd, H, rank_tol=it.store_tol), on_boundary=True)
                step = Step(1.0, it.svd.U @ H, it.svd.V)
                rec.step(it, new, FACE_OPT, float(info["iters"]),
                         "a" if new.rank < it.rank else "b", step)
                it, top = new, None

        if top is None:
            top = oracle_bound(it, rec, oracle)
            if top is None:
                reason = "optimal"
                break
        reason = rec.stop_reason(it)
        if reason:
            break
        new, alpha, step = fw_step(it, top, rec, cfg)
        record_fw(rec, it, new, alpha, step)
        composites += 1
        if cfg.check_guarantees:
            rec.check_rate(new.f, composites)
        it = new

    return rec.finish(it, reason, oracle_calls=oracle.calls, inexact_oracle=oracle.inexact,
                      composites=composites, face_fallbacks=fallbacks)
