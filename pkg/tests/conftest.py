import math

import numpy as np
import pytest

from infw.problem import GenSpec, generate_instance


def make_instance(m=30, n=20, r=3, snr=5.0, rho=0.3, seed=0, delta_norm=1.0):
    """Synthetic instance with radius ``delta_norm * ||X_Omega||_F``."""
    inst, truth = generate_instance(GenSpec(m, n, r, snr, rho, seed))
    return inst.with_delta(delta_norm / math.sqrt(inst.scale)), truth


@pytest.fixture
def small_instance():
    return make_instance()[0]


def random_orthonormal(rng, n, r):
    Q, _ = np.linalg.qr(rng.standard_normal((n, r)))
    return Q


def random_spectrahedron(rng, r, delta):
    A = rng.standard_normal((r, r))
    M = A @ A.T
    return delta * M / np.trace(M)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import VERDICTS
    except ImportError:
        return
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(VERDICTS):
        terminalreporter.write_line(VERDICTS[n])
