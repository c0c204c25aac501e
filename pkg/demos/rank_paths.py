"""Rank of the iterates along a run: Frank-Wolfe against in-face variants.

Frank-Wolfe adds one rank-one atom per step, so its rank grows steadily.
In-face steps stay on the current face and keep the rank flat or lower it.

    python demos/rank_paths.py
"""
import math

import numpy as np

from infw import GenSpec, SolverConfig, generate_instance, solve

inst, _ = generate_instance(GenSpec(200, 400, 10, 5.0, 0.1, seed=0))
inst = inst.with_delta(3.75 / math.sqrt(inst.scale))  # radius for unit-norm data

configs = {
    "fw": SolverConfig(method="fw"),
    "if-(0,inf)": SolverConfig(method="if", gamma1=0.0, gamma2=math.inf),
    "if-(0,1)": SolverConfig(method="if", gamma1=0.0, gamma2=1.0),
    "if-rank": SolverConfig(method="if-rank"),
}

traces = {label: solve(inst, cfg) for label, cfg in configs.items()}

print("%-11s %6s %6s %6s %8s %s" % ("method", "iters", "rank", "max", "seconds", "stop"))
for label, tr in traces.items():
    s = tr.summary
    print("%-11s %6d %6d %6d %8.2f %s" % (label, s["iterations"], s["final_rank"],
                                         s["max_rank"], s["seconds"], s["reason"]))

print("\nrank at 20 evenly spaced points of each run")
for label, tr in traces.items():
    ranks = tr.column("rank")
    ranks = [ranks[i] for i in np.linspace(0, len(ranks) - 1, 20).astype(int)]
    print("%-11s %s" % (label, " ".join("%3d" % r for r in ranks)))
