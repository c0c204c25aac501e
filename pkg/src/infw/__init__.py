"""Frank-Wolfe, away-step and in-face extended Frank-Wolfe methods for
nuclear-norm constrained matrix completion, with thin-SVD iterates."""
from .linalg import SparseRealMatrix, ThinSVD, top_singular_triplet
from .problem import GenSpec, Instance, generate_instance, load_instance, load_triplets, select_delta
from .solvers import SolverConfig, solve
from .trace import RunTrace, export_trace, read_trace

__version__ = "0.1.0"

__all__ = [
    "GenSpec", "Instance", "RunTrace", "SolverConfig", "SparseRealMatrix", "ThinSVD",
    "export_trace", "generate_instance", "load_instance", "load_triplets", "read_trace",
    "select_delta", "solve", "top_singular_triplet",
]
