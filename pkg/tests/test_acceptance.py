"""Acceptance criteria 1-9. Each test records a one-line verdict that the
terminal summary prints (see conftest.py), so the lines appear even when
output capture is on."""
import math
import time
from dataclasses import replace

import numpy as np
import pytest

from infw.bench import ExperimentSpec, run_experiment
from infw.face import alpha_stop_away, alpha_stop_general
from infw.problem import GenSpec, generate_instance, select_delta
from infw.solvers import DEFAULT_GAP, SolverConfig, solve

from conftest import random_orthonormal, random_spectrahedron

VERDICTS = {}
ALL_TRACES = []


def verdict(n, ok, detail):
    VERDICTS[n] = "criterion %d: %s  %s" % (n, "PASS" if ok else "FAIL", detail)
    return ok


# --- criteria 1-3: guarantee suite ------------------------------------------------

SUITE_METHODS = [
    SolverConfig(method="fw"),
    SolverConfig(method="if", gamma1=0.0, gamma2=1.0),
    SolverConfig(method="if", gamma1=1.0, gamma2=1.0),
    SolverConfig(method="if", gamma1=0.0, gamma2=math.inf),
    SolverConfig(method="if-opt"),
    SolverConfig(method="if-rank"),
    SolverConfig(method="away"),
]


def suite_instances():
    rng = np.random.default_rng(2024)
    out = []
    for i in range(20):
        m = int(rng.integers(20, 201))
        n = int(rng.integers(20, 201))
        rho = (0.1, 0.3)[i % 2]
        r = int(rng.integers(1, 6))
        inst, _ = generate_instance(GenSpec(m, n, r, float(rng.uniform(1, 10)), rho, seed=i))
        # radius in normalized units, spread over under- and over-regularized
        inst = inst.with_delta(float(rng.uniform(0.5, 4.0)) / math.sqrt(inst.scale))
        out.append(inst)
    return out


@pytest.fixture(scope="module")
def suite():
    runs = {"exact": [], "quad": []}
    seconds = {}
    for rule in runs:
        t0 = time.perf_counter()
        for inst in suite_instances():
            for cfg in SUITE_METHODS:
                tr = solve(inst, replace(cfg, step_rule=rule, max_iters=60))
                runs[rule].append((inst, cfg, tr))
        seconds[rule] = time.perf_counter() - t0
    for rule in runs:
        ALL_TRACES.extend(tr for _, _, tr in runs[rule])
    return runs, seconds


def _violations(runs, names):
    return [(cfg.method, v) for _, cfg, tr in runs for v in tr.violations if v[1] in names]


def test_criterion_1_guarantees(suite):
    runs, seconds = suite
    names = {"rate", "if-guarantee", "if-chain", "feasibility", "monotone"}
    bad = _violations(runs["exact"], names)
    # Prop 2.1 for IF-opt is the "rate" check on composite iterations; confirm it ran
    n_if_opt = sum(1 for _, cfg, _ in runs["exact"] if cfg.method == "if-opt")
    ok = not bad and seconds["exact"] < 120 and n_if_opt == 20
    verdict(1, ok, "%d runs, %d violations, %.1fs" % (len(runs["exact"]), len(bad), seconds["exact"]))
    assert not bad, bad[:5]
    assert seconds["exact"] < 120


def test_criterion_2_eq12_quadratic_steps(suite):
    runs, seconds = suite
    fw_steps = sum(tr.summary["Nc"] for _, _, tr in runs["quad"])
    bad = _violations(runs["quad"], {"fw-step", "rate", "if-guarantee", "if-chain"})
    ok = not bad and fw_steps > 0
    verdict(2, ok, "%d regular steps checked, %d violations" % (fw_steps, len(bad)))
    assert ok, bad[:5]


def test_criterion_3_rank_accounting(suite):
    runs, _ = suite
    checked, bad = 0, []
    for rule in runs:
        for _, cfg, tr in runs[rule]:
            for rec in tr.records:
                checked += 1
                if rec.rank > rec.k + 1 - 2 * rec.Na - rec.Nb:
                    bad.append((cfg.method, rec.k, rec.rank))
    verdict(3, not bad, "%d iterations checked, %d violations" % (checked, len(bad)))
    assert not bad, bad[:5]


# --- criterion 4: dense shadow ------------------------------------------------------

def test_criterion_4_dense_shadow():
    inst, _ = generate_instance(GenSpec(50, 40, 3, 5.0, 0.3, seed=4))
    inst = inst.with_delta(2.0 / math.sqrt(inst.scale))
    cfg = SolverConfig(method="if", gamma1=0.0, gamma2=1.0, gap_target=0.0, max_iters=200)
    Z = solve(inst, replace(cfg, max_iters=0)).final_svd.to_dense()
    state = {"Z": Z, "err": 0.0, "drift": 0.0, "n": 0}

    def shadow(rec, it, step):
        state["Z"] = step.apply_dense(state["Z"])
        Zs = state["Z"]
        err = np.linalg.norm(it.svd.to_dense() - Zs) / np.linalg.norm(Zs)
        state["err"] = max(state["err"], err)
        state["drift"] = max(state["drift"], it.svd.orthonormality_drift())
        state["n"] += 1

    tr = solve(inst, cfg, callback=shadow)
    ALL_TRACES.append(tr)
    ok = state["n"] == 200 and state["err"] <= 1e-8 and state["drift"] <= 1e-8
    verdict(4, ok, "%d iterations, max rel err %.2e, max drift %.2e"
            % (state["n"], state["err"], state["drift"]))
    assert ok


# --- criterion 5: alpha stop ------------------------------------------------------------

def _bisect(D, Delta):
    lo, hi = 0.0, 1.0
    while np.linalg.eigvalsh(D + hi * Delta)[0] >= 0:
        lo, hi = hi, 2 * hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if np.linalg.eigvalsh(D + mid * Delta)[0] >= 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_criterion_5_alpha_stop():
    rng = np.random.default_rng(5)
    worst_rel, worst_lam = 0.0, 0.0
    for _ in range(100):
        r = int(rng.integers(2, 7))
        delta = float(rng.uniform(0.5, 5.0))
        s = np.sort(rng.random(r) + 0.01)[::-1]
        s *= delta / s.sum()
        D = np.diag(s)
        G = rng.standard_normal((r, r))
        w, Q = np.linalg.eigh(G + G.T)
        q = Q[:, -1]  # away point of a random reduced gradient
        Delta = D - delta * np.outer(q, q)
        a_close = alpha_stop_away(s, q, delta)
        a_gen = alpha_stop_general(s, Delta)
        a_bis = _bisect(D, Delta)
        worst_rel = max(worst_rel, abs(a_close - a_bis) / a_bis, abs(a_gen - a_bis) / a_bis)
        worst_lam = max(worst_lam, abs(np.linalg.eigvalsh(D + a_close * Delta)[0]) / delta)
    ok = worst_rel <= 1e-8 and worst_lam <= 1e-9
    verdict(5, ok, "100 faces, max rel diff %.2e, max |lambda_min|/delta %.2e"
            % (worst_rel, worst_lam))
    assert ok


# --- criterion 6: face geometry --------------------------------------------------------------

def test_criterion_6_face_image():
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(100):
        r = int(rng.integers(1, 9))
        m, n = int(rng.integers(r, 40)), int(rng.integers(r, 40))
        delta = float(rng.uniform(0.1, 10.0))
        U, V = random_orthonormal(rng, m, r), random_orthonormal(rng, n, r)
        M = random_spectrahedron(rng, r, delta)
        nuc = np.linalg.svd(U @ M @ V.T, compute_uv=False).sum()
        worst = max(worst, abs(nuc - delta) / delta)
    verdict(6, worst <= 1e-9, "100 samples, max rel deviation %.2e" % worst)
    assert worst <= 1e-9


# --- criterion 7: Table 1 reproduction -----------------------------------------------------------

def test_criterion_7_table1():
    spec = ExperimentSpec(gen=GenSpec(200, 400, 10, 5.0, 0.10, seed=0),
                          methods=("fw", "if-(0,inf)", "away-atomic"), samples=5,
                          gap_target=DEFAULT_GAP, delta=3.75, delta_units="normalized")
    t0 = time.perf_counter()
    report, traces = run_experiment(spec)
    elapsed = time.perf_counter() - t0
    ALL_TRACES.extend(traces)
    fw = [t for t in traces if t.extras["method_label"] == "fw"]
    inf = [t for t in traces if t.extras["method_label"] == "if-(0,inf)"]
    faster = sum(b.summary["seconds"] < a.summary["seconds"] for a, b in zip(fw, inf))
    r_if = report["if-(0,inf).mean_final_rank"]
    r_fw = report["fw.mean_final_rank"]
    r_at = report["away-atomic.mean_final_rank"]
    censored = sum(report["%s.censored" % m] for m in spec.methods)
    ok = (r_if <= 30 and r_fw >= 60 and r_at >= 60 and faster >= 4 and elapsed <= 900
          and censored == 0)
    verdict(7, ok, "final rank IF-(0,inf) %.2f, FW %.2f, atomic %.2f; IF faster on %d/5; "
            "mean s IF %.1f FW %.1f; %.0fs total" % (
                r_if, r_fw, r_at, faster, report["if-(0,inf).mean_seconds"],
                report["fw.mean_seconds"], elapsed))
    assert ok


# --- criterion 8: Figure 1 shape -------------------------------------------------------------------

FIG1_MAX_SECONDS = 600.0


def test_criterion_8_figure1_shape():
    inst, _ = generate_instance(GenSpec(500, 625, 10, 4.0, 0.04, seed=0))
    t0 = time.perf_counter()
    delta = select_delta(inst)
    t_sel = time.perf_counter() - t0
    inst = inst.with_delta(delta)
    base = SolverConfig(gap_target=DEFAULT_GAP, max_seconds=FIG1_MAX_SECONDS)
    rank_tr = solve(inst, replace(base, method="if-rank"))
    inf_tr = solve(inst, replace(base, method="if", gamma1=0.0, gamma2=math.inf))
    ALL_TRACES.extend([rank_tr, inf_tr])
    rs, fs = rank_tr.summary, inf_tr.summary
    ok = rs["max_rank"] >= 2 * rs["final_rank"] and fs["max_rank"] <= 1.3 * fs["final_rank"]
    verdict(8, ok, "delta %.4g (selected in %.0fs); IF-Rank max/final %d/%d (%s, gap %.2e); "
            "IF-(0,inf) max/final %d/%d (%s, gap %.2e)" % (
                delta, t_sel, rs["max_rank"], rs["final_rank"], rs["reason"], rs["gap"],
                fs["max_rank"], fs["final_rank"], fs["reason"], fs["gap"]))
    assert ok


# --- criterion 9: lower bounds -----------------------------------------------------------------------

def test_criterion_9_lower_bounds():
    # runs last in file order, after the heavier criteria have filled ALL_TRACES
    assert ALL_TRACES, "no traces collected"
    bad = 0
    for tr in ALL_TRACES:
        B = [r.B for r in tr.records]
        f_final = tr.summary["f"]
        if any(b2 < b1 for b1, b2 in zip(B, B[1:])) or any(b > f_final + 1e-10 for b in B):
            bad += 1
    verdict(9, bad == 0, "%d runs checked, %d with a bound violation" % (len(ALL_TRACES), bad))
    assert bad == 0
