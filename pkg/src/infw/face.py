"""Faces of the nuclear-norm ball and in-face directions.

A boundary point ``Z = U diag(s) V.T`` with ``sum(s) = delta`` has minimal face
``{U M V.T : M PSD, trace M = delta}``, an image of the ``r x r`` spectrahedron of
dimension ``r (r + 1) / 2 - 1``. Interior points have the whole ball as their face.
"""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .linalg import (
    ThinSVD, lowrank_nuclear_norm, symmetrize, sym_eig_extreme, top_singular_triplet,
)
from .iterate import BOUNDARY_TOL, Step

INTERIOR = "interior"
BOUNDARY = "boundary"


class InfeasibleIterateError(ValueError):
    pass


@dataclass(frozen=True)
class FaceDescriptor:
    kind: str
    rank: int
    dim: int

    @property
    def is_boundary(self):
        return self.kind == BOUNDARY


def minimal_face(svd, delta, boundary_tol=BOUNDARY_TOL, on_boundary=None):
    """Classify ``svd`` as lying on the boundary or in the interior of the radius-``delta`` ball.

    ``on_boundary`` overrides the tolerance test for iterates that were built
    by a boundary-hitting step.
    """
    total = svd.nuclear_norm
    if total > delta * (1 + boundary_tol):
        raise InfeasibleIterateError(
            "nuclear norm %.12g exceeds delta %.12g" % (total, delta)
        )
    if on_boundary is None:
        on_boundary = total >= delta * (1 - boundary_tol)
    r = svd.rank
    if on_boundary:
        return FaceDescriptor(BOUNDARY, r, r * (r + 1) // 2 - 1)
    m, n = svd.shape
    return FaceDescriptor(INTERIOR, r, m * n)


def reduced_gradient(grad, U, V):
    """``G = (V.T grad.T U + U.T grad V) / 2`` so that ``<grad, U M V.T> = <G, M>`` for symmetric M."""
    return symmetrize(U.T @ (grad.csr @ V))


@dataclass(frozen=True)
class InFaceDirection:
    """A descent direction that keeps ``Z + alpha d`` in the current minimal face.

    ``kind == "face"``: ``d = U @ delta_mat @ V.T`` with trace-zero ``delta_mat``.
    ``kind == "full"``: ``d = z_coef * Z + atom_coef * u v.T`` (interior iterates).
    ``slope`` is the directional derivative ``<grad, d>``.
    """

    kind: str
    slope: float
    delta_mat: np.ndarray | None = None
    q: np.ndarray | None = None
    z_coef: float = 0.0
    atom_coef: float = 0.0
    u: np.ndarray | None = None
    v: np.ndarray | None = None
    strategy: str = "away"

    def omega_values(self, iterate):
        inst = iterate.instance
        if self.kind == "face":
            U, V = iterate.svd.U, iterate.svd.V
            return np.einsum("ij,ij->i", U[inst.rows] @ self.delta_mat, V[inst.cols])
        return self.z_coef * iterate.z_omega + self.atom_coef * self.u[inst.rows] * self.v[inst.cols]

    def step(self, svd, alpha):
        """The update ``Z + alpha d`` as a :class:`Step`."""
        if self.kind == "face":
            return Step(1.0, svd.U @ (alpha * self.delta_mat), svd.V)
        return Step(1.0 + alpha * self.z_coef, (alpha * self.atom_coef) * self.u, self.v)


def _slope_floor(scale_a, scale_b):
    return 1e-14 * max(scale_a, 1e-300) * max(scale_b, 1e-300)


def _top(grad, top, oracle_kw):
    if top is None:
        top = top_singular_triplet(grad, **(oracle_kw or {}))
    return top


def away_direction(face, iterate, top=None, oracle_kw=None):
    """Direction ``Z - Z_hat`` where ``Z_hat`` maximizes ``<grad, .>`` over the minimal face.

    On a boundary face ``Z_hat = delta * U q q^T V^T`` with ``q`` the top
    eigenvector of the reduced gradient; in the interior ``Z_hat = delta u1 v1^T``
    with ``(u1, v1)`` the top singular pair of the gradient (pass it as ``top``
    to reuse a triplet already computed). Returns ``None`` when no descent
    direction exists.
    """
    delta = iterate.instance.delta
    grad = iterate.grad
    if not np.any(grad.values):
        return None
    if face.is_boundary:
        if face.rank <= 1:
            return None
        svd = iterate.svd
        G = reduced_gradient(grad, svd.U, svd.V)
        lam, q = sym_eig_extreme(G, "largest")
        Dm = np.diag(svd.s)
        Delta = Dm - delta * np.outer(q, q)
        slope = float(np.sum(G * Dm)) - delta * lam
        if slope >= -_slope_floor(np.abs(G).max(), delta):
            return None
        return InFaceDirection("face", slope, Delta, q, strategy="away")
    sigma, u, v, _ = _top(grad, top, oracle_kw)
    slope = iterate.grad_dot_z() - delta * sigma
    if slope >= -_slope_floor(sigma, delta):
        return None
    return InFaceDirection("full", slope, z_coef=1.0, atom_coef=-delta, u=u, v=v, strategy="away")


def inface_fw_direction(face, iterate, top=None, oracle_kw=None):
    """Direction ``Z_tilde - Z`` where ``Z_tilde`` minimizes ``<grad, .>`` over the minimal face."""
    delta = iterate.instance.delta
    grad = iterate.grad
    if not np.any(grad.values):
        return None
    if face.is_boundary:
        if face.rank <= 1:
            return None
        svd = iterate.svd
        G = reduced_gradient(grad, svd.U, svd.V)
        lam, q = sym_eig_extreme(G, "smallest")
        Dm = np.diag(svd.s)
        Delta = delta * np.outer(q, q) - Dm
        slope = delta * lam - float(np.sum(G * Dm))
        if slope >= -_slope_floor(np.abs(G).max(), delta):
            return None
        return InFaceDirection("face", slope, Delta, q, strategy="toward")
    sigma, u, v, _ = _top(grad, top, oracle_kw)
    slope = -delta * sigma - iterate.grad_dot_z()
    if slope >= -_slope_floor(sigma, delta):
        return None
    return InFaceDirection("full", slope, z_coef=-1.0, atom_coef=-delta, u=u, v=v, strategy="toward")


# --- maximal in-face step ----------------------------------------------------

def alpha_stop_away(sigma, q, delta):
    """Closed form for ``Delta = D - delta q q^T``: ``1 / (delta q^T D^{-1} q - 1)``."""
    denom = delta * float(np.sum(q**2 / sigma)) - 1.0
    if denom <= 0:
        return math.inf
    return 1.0 / denom


def alpha_stop_general(sigma, Delta):
    """Largest ``alpha`` with ``D + alpha Delta`` PSD: ``-1 / lambda_min(D^{-1/2} Delta D^{-1/2})``."""
    w = 1.0 / np.sqrt(sigma)
    lam = float(np.linalg.eigvalsh(symmetrize(Delta * np.outer(w, w)))[0])
    if lam >= 0:
        return math.inf
    return -1.0 / lam


def alpha_stop_interior(svd, direction, delta, max_iters=60):
    """Bisection for ``||Z + alpha d||_N1 = delta`` on an interior iterate.

    The bracket is grown by doubling; the returned value is the feasible end of
    the final bracket.
    """
    u = direction.u[:, None]
    v = direction.v[:, None]
    Bu = np.column_stack([svd.U, u])
    Bv = np.column_stack([svd.V, v])
    _, Ru = np.linalg.qr(Bu)
    _, Rv = np.linalg.qr(Bv)
    r = svd.rank
    s = svd.s

    def norm_at(alpha):
        C = np.zeros((r + 1, r + 1))
        C[:r, :r] = np.diag((1.0 + alpha * direction.z_coef) * s)
        C[r, r] = alpha * direction.atom_coef
        return float(np.linalg.svd(Ru @ C @ Rv.T, compute_uv=False).sum())

    lo, hi = 0.0, 1.0
    for _ in range(max_iters):
        if norm_at(hi) > delta:
            break
        lo, hi = hi, 2.0 * hi
    else:
        return math.inf
    for _ in range(max_iters):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if norm_at(mid) <= delta:
            lo = mid
        else:
            hi = mid
    return lo


def alpha_stop(face, svd, direction, delta):
    """Maximal step keeping ``Z + alpha d`` inside the current minimal face (``inf`` if unbounded)."""
    if direction.slope >= 0:
        raise ValueError("alpha_stop needs a descent direction")
    if face.is_boundary:
        if direction.kind != "face":
            raise ValueError("boundary faces need a face direction")
        if direction.strategy == "away" and direction.q is not None:
            return alpha_stop_away(svd.s, direction.q, delta)
        return alpha_stop_general(svd.s, direction.delta_mat)
    return alpha_stop_interior(svd, direction, delta)


# --- optimization over a face ----------------------------------------------

def _expm_sym(A):
    w, R = np.linalg.eigh(symmetrize(A))
    w = w - w.max()
    return (R * np.exp(w)) @ R.T


def _logm_spd(M):
    w, R = np.linalg.eigh(symmetrize(M))
    w = np.clip(w, 1e-300, None)
    return (R * np.log(w)) @ R.T


def face_optimize(face, iterate, inner_budget=50, inner_tol=1e-6, rank_tol=1e-6):
    """Approximately minimize ``f(U M V^T)`` over the spectrahedron ``{M PSD, trace M = delta}``.

    Entropic mirror descent (matrix-exponential multiplicative updates) with a
    backtracked smoothness estimate. Each accepted step satisfies the
    descent-lemma test, so the inner objective is nonincreasing. Eigenvalues
    of the result below ``rank_tol`` are zeroed (with the trace restored); if
    that rounding raises the objective above its starting value the starting
    point ``diag(s)`` is returned with ``info["fallback"] = True``.

    Returns
    -------
    M : ndarray (r x r)
    info : dict
        ``iters``, ``f_start``, ``f_end``, ``fallback``.
    """
    svd = iterate.svd
    inst = iterate.instance
    delta = inst.delta
    D0 = np.diag(svd.s)
    info = {"iters": 0, "f_start": iterate.f, "f_end": iterate.f, "fallback": False}
    if not face.is_boundary or face.rank <= 1:
        return (D0 * (delta / max(np.trace(D0), 1e-300)) if face.rank else D0), info

    s = inst.scale
    x = inst.values
    P = svd.U[inst.rows]
    Q = svd.V[inst.cols]

    def zvals(M):
        return np.einsum("ij,ij->i", P @ M, Q)

    def fval(z):
        r = z - x
        return 0.5 * s * float(r @ r)

    M = D0.copy()
    z = iterate.z_omega
    f = fval(z)
    L = s / 16.0
    it = 0
    for it in range(1, inner_budget + 1):
        w = s * (z - x)
        G = symmetrize((P * w[:, None]).T @ Q)
        logM = _logm_spd(M)
        while True:
            t = 1.0 / (L * delta)
            E = _expm_sym(logM - t * G)
            M_new = symmetrize(delta * E / np.trace(E))
            z_new = zvals(M_new)
            f_new = fval(z_new)
            H = M_new - M
            model = f + float(np.sum(G * H)) + 0.5 * L * np.abs(np.linalg.eigvalsh(H)).sum() ** 2
            if f_new <= model + 1e-15 * abs(f) or L > 1e12 * s:
                break
            L *= 2.0
        if not f_new <= f:
            break
        decrease = f - f_new
        M, z, f = M_new, z_new, f_new
        L = max(L / 2.0, 1e-8 * s)
        if decrease <= inner_tol * max(f, 1e-300):
            break
    info["iters"] = it

    lam, R = np.linalg.eigh(M)
    lam = np.where(lam > rank_tol, lam, 0.0)
    lam *= delta / lam.sum()
    M_round = (R * lam) @ R.T
    f_round = fval(zvals(M_round))
    if f_round <= iterate.f:
        info["f_end"] = f_round
        return symmetrize(M_round), info
    if f <= iterate.f:
        info["f_end"] = f
        return M, info
    info["fallback"] = True
    return D0, info
