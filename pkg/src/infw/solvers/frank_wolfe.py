"""Regular Frank-Wolfe on the nuclear-norm ball."""
from __future__ import annotations

import time

from ._common import Oracle, Recorder, fw_step, oracle_bound, record_fw, start


def run_frank_wolfe(instance, config, init=None, callback=None):
    """Frank-Wolfe with exact line search (or the quadratic-model step) and Wolfe bounds.

    Parameters
    ----------
    instance : Instance
        Must carry a ``delta``.
    config : SolverConfig
    init : ThinSVD or Iterate, optional
        Warm start. By default ``Z0 = -delta u0 v0^T`` from the gradient at zero.
    callback : callable, optional
        ``callback(record, iterate, step)`` after every iteration.

    Returns
    -------
    RunTrace
    """
    t0 = time.perf_counter()
    cfg = config.resolved(instance)
    oracle = Oracle(cfg)
    it, B = start(instance, cfg, oracle, init)
    rec = Recorder("fw", instance, cfg, it, B, t0, callback, standard_start=init is None)
    while True:
        top = oracle_bound(it, rec, oracle)
        reason = rec.stop_reason(it) if top is not None else "optimal"
        if reason:
            break
        new, alpha, step = fw_step(it, top, rec, cfg)
        record_fw(rec, it, new, alpha, step)
        if cfg.check_guarantees:
            rec.check_rate(new.f, rec.N["c"])
            rec.check_specialized(new.f)
        it = new
    return rec.finish(it, reason, oracle_calls=oracle.calls, inexact_oracle=oracle.inexact)
