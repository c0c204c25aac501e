"""Solvers for nuclear-norm constrained matrix completion."""
from ._common import (
    DEFAULT_GAP, LOWER_FACE, METHODS, REGULAR_FW, STAY_FACE, SolverConfig, linear_subproblem,
    quadratic_step, step_decision, wolfe_lower_bound,
)
from .away import AtomicState, run_away_atomic, run_away_natural
from .frank_wolfe import run_frank_wolfe
from .inface import run_inface, run_inface_optimization

_RUNNERS = {
    "fw": run_frank_wolfe,
    "if": run_inface,
    "if-rank": run_inface,
    "if-opt": run_inface_optimization,
    "away": run_away_natural,
    "away-atomic": run_away_atomic,
}


def solve(instance, config, init=None, callback=None):
    """Dispatch on ``config.method``."""
    return _RUNNERS[config.method](instance, config, init=init, callback=callback)


__all__ = [
    "DEFAULT_GAP", "LOWER_FACE", "METHODS", "REGULAR_FW", "STAY_FACE", "AtomicState",
    "SolverConfig", "linear_subproblem", "quadratic_step", "run_away_atomic",
    "run_away_natural", "run_frank_wolfe", "run_inface", "run_inface_optimization", "solve",
    "step_decision", "wolfe_lower_bound",
]
