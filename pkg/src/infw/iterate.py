"""Iterate state: thin SVD plus the cached observed entries and gradient."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import ThinSVD, sample_lowrank_entries, reorthogonalize, RANK_TOL
from .problem import gradient, objective_value

BOUNDARY_TOL = 1e-9
# singular values kept in storage go down to STORE_RTOL * delta; ranks are
# still reported with RANK_TOL. Truncating at RANK_TOL would perturb iterates.
STORE_RTOL = 1e-12


@dataclass(frozen=True)
class Step:
    """An update ``Z_next = c * Z + P @ Q.T``; kept so callers can replay steps densely."""

    c: float
    P: np.ndarray
    Q: np.ndarray

    def apply_dense(self, Z):
        P = self.P.reshape(self.P.shape[0], -1)
        Q = self.Q.reshape(self.Q.shape[0], -1)
        return self.c * Z + P @ Q.T


@dataclass(frozen=True)
class Iterate:
    instance: object
    svd: ThinSVD
    z_omega: np.ndarray
    grad: object
    f: float
    on_boundary: bool
    updates: int = 0

    @classmethod
    def from_svd(cls, instance, svd, on_boundary=None, updates=0, z_omega=None):
        """Build an iterate; ``z_omega`` may carry the observed entries when already known."""
        delta = instance.delta
        if on_boundary is None:
            on_boundary = abs(svd.nuclear_norm - delta) <= BOUNDARY_TOL * delta
        elif on_boundary and svd.rank:
            # boundary iterates are pinned to the sphere to stop drift in sum(s)
            factor = delta / svd.nuclear_norm
            svd = ThinSVD(svd.U, svd.s * factor, svd.V)
            if z_omega is not None:
                z_omega = z_omega * factor
        if z_omega is None:
            z_omega = sample_lowrank_entries(svd, instance.rows, instance.cols)
        return cls(instance, svd, z_omega, gradient(z_omega, instance),
                   objective_value(z_omega, instance), bool(on_boundary), updates)

    @property
    def store_tol(self):
        return STORE_RTOL * self.instance.delta

    @property
    def rank(self):
        return self.svd.numerical_rank(RANK_TOL)

    def grad_dot_z(self):
        return self.grad.inner(self.z_omega)

    def advance(self, svd, on_boundary=None, z_omega=None, check_every=20, drift_tol=1e-9):
        """Next iterate from an updated SVD.

        ``z_omega`` (the observed entries updated alongside the SVD) saves the
        resampling cost; every ``check_every`` updates the entries are
        resampled from the SVD and the factors re-orthogonalized if they drifted.
        """
        updates = self.updates + 1
        if updates % check_every == 0:
            z_omega = None
            if svd.rank and svd.orthonormality_drift() > drift_tol:
                svd = reorthogonalize(svd, rank_tol=self.store_tol)
        return Iterate.from_svd(self.instance, svd, on_boundary, updates, z_omega)
