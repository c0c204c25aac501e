"""Numerical kernels: sparse top singular triplets, small symmetric eigenproblems,
and thin-SVD maintenance for low-rank iterates.

All functions are pure. Small symmetric matrices are plain ``ndarray`` values
that are symmetrized on entry (``(S + S.T) / 2``), so callers may pass a matrix
with rounding-level asymmetry.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
import warnings

import numpy as np
import scipy.linalg
import scipy.sparse as sp

RANK_TOL = 1e-6
ORTHO_TOL = 1e-9
DENSE_FALLBACK_DIM = 64


class NotPSDError(ValueError):
    """Raised when a matrix expected to be PSD has a clearly negative eigenvalue."""


class InexactOracleWarning(RuntimeWarning):
    """Power iteration hit ``max_iters`` before reaching the residual tolerance."""


def _fix_sign(x):
    """Flip ``x`` so that its first non-negligible entry is positive. Returns the sign used."""
    mag = np.abs(x)
    if mag.size == 0:
        return 1.0
    big = mag.max()
    if big == 0.0:
        return 1.0
    idx = int(np.argmax(mag > 1e-12 * big))
    return -1.0 if x[idx] < 0 else 1.0


def symmetrize(S):
    S = np.asarray(S, dtype=float)
    return 0.5 * (S + S.T)


@dataclass(frozen=True)
class ThinSVD:
    """Thin SVD ``U @ diag(s) @ V.T`` with orthonormal ``U`` (m x r), ``V`` (n x r)
    and ``s`` positive, sorted descending."""

    U: np.ndarray
    s: np.ndarray
    V: np.ndarray

    @classmethod
    def empty(cls, m, n):
        return cls(np.zeros((m, 0)), np.zeros(0), np.zeros((n, 0)))

    @classmethod
    def rank_one(cls, sigma, u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        nu, nv = np.linalg.norm(u), np.linalg.norm(v)
        sigma = sigma * nu * nv
        if sigma < 0:
            sigma, u = -sigma, -u
        u, v = u / nu, v / nv
        sg = _fix_sign(u)
        return cls((sg * u)[:, None], np.array([sigma]), (sg * v)[:, None])

    @classmethod
    def from_dense(cls, Z, rank_tol=RANK_TOL):
        U, s, Vt = np.linalg.svd(np.asarray(Z, dtype=float), full_matrices=False)
        return _canonical(U, s, Vt.T, rank_tol)

    @property
    def shape(self):
        return self.U.shape[0], self.V.shape[0]

    @property
    def rank(self):
        return self.s.size

    @property
    def nuclear_norm(self):
        return float(self.s.sum())

    @property
    def frobenius_norm(self):
        return float(np.sqrt(np.sum(self.s**2)))

    def numerical_rank(self, tol=RANK_TOL):
        return int(np.count_nonzero(self.s > tol))

    def to_dense(self):
        return (self.U * self.s) @ self.V.T

    def orthonormality_drift(self):
        r = self.rank
        eye = np.eye(r)
        return max(
            np.linalg.norm(self.U.T @ self.U - eye),
            np.linalg.norm(self.V.T @ self.V - eye),
        )

    def scaled(self, c):
        """Return the SVD of ``c * Z`` for ``c >= 0``."""
        if c < 0:
            raise ValueError("scale must be nonnegative")
        if c == 0:
            m, n = self.shape
            return ThinSVD.empty(m, n)
        return ThinSVD(self.U, c * self.s, self.V)


def _canonical(U, s, V, rank_tol=RANK_TOL):
    """Sort descending, drop values <= rank_tol, fix column signs."""
    order = np.argsort(-s, kind="stable")
    U, s, V = U[:, order], s[order], V[:, order]
    keep = s > rank_tol
    U, s, V = U[:, keep], s[keep], V[:, keep]
    if s.size:
        signs = np.array([_fix_sign(U[:, j]) for j in range(s.size)])
        U = U * signs
        V = V * signs
    return ThinSVD(np.ascontiguousarray(U), s.copy(), np.ascontiguousarray(V))


class SparseRealMatrix:
    """Sparse ``m x n`` real matrix on a fixed sorted, duplicate-free coordinate set.

    Coordinates are stored row-major sorted. ``with_values`` reuses the CSR
    structure, which matters because the solvers build a new gradient every
    iteration on the same support.
    """

    def __init__(self, shape, rows, cols, values, *, _indptr=None, _checked=False):
        m, n = int(shape[0]), int(shape[1])
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        values = np.asarray(values, dtype=float)
        if not _checked:
            if not (rows.shape == cols.shape == values.shape) or rows.ndim != 1:
                raise ValueError("rows, cols and values must be 1-d arrays of equal length")
            if rows.size:
                if rows.min() < 0 or rows.max() >= m or cols.min() < 0 or cols.max() >= n:
                    raise ValueError("coordinate out of range for shape %r" % ((m, n),))
            key = rows * n + cols
            order = np.argsort(key, kind="stable")
            key = key[order]
            if key.size > 1 and np.any(key[1:] == key[:-1]):
                dup = int(key[1:][key[1:] == key[:-1]][0])
                raise ValueError("duplicate coordinate (%d, %d)" % divmod(dup, n))
            rows, cols, values = rows[order], cols[order], values[order]
        self.shape = (m, n)
        self.rows = rows
        self.cols = cols
        self.values = values
        if _indptr is None:
            _indptr = np.zeros(m + 1, dtype=np.int64)
            np.cumsum(np.bincount(rows, minlength=m), out=_indptr[1:])
        self._indptr = _indptr

    @property
    def nnz(self):
        return self.values.size

    def with_values(self, values):
        values = np.asarray(values, dtype=float)
        if values.shape != self.values.shape:
            raise ValueError("values must align with the existing coordinates")
        return SparseRealMatrix(
            self.shape, self.rows, self.cols, values, _indptr=self._indptr, _checked=True
        )

    @cached_property
    def csr(self):
        return sp.csr_matrix((self.values, self.cols, self._indptr), shape=self.shape)

    def toarray(self):
        A = np.zeros(self.shape)
        A[self.rows, self.cols] = self.values
        return A

    def dot_dense(self, Z):
        """Trace inner product with a dense matrix."""
        return float(self.values @ np.asarray(Z)[self.rows, self.cols])

    def inner(self, values):
        """Trace inner product with another matrix given by its values on the same support."""
        return float(self.values @ values)


def top_singular_triplet(A, tol=1e-9, max_iters=None, seed=0, v0=None, dense_dim=DENSE_FALLBACK_DIM,
                         method="power", u0=None):
    """Leading singular triplet of a sparse matrix by power iteration on ``A.T @ A``.

    Parameters
    ----------
    A : SparseRealMatrix
    tol : float
        Relative residual target: stop once ``||A.T u - sigma v|| <= tol * sigma``
        (``A v = sigma u`` holds exactly by construction of ``u``).
    max_iters : int, optional
        Defaults to ``10 * max(m, n)``.
    seed : int
        Seeds the random start vector when ``v0`` is not given.
    v0 : ndarray, optional
        Warm-start vector.
    dense_dim : int
        If ``min(m, n) <= dense_dim`` a dense SVD is used instead.
    method : {"power", "lanczos", "gram"}
        ``"lanczos"`` runs restarted Golub-Kahan-Lanczos bidiagonalization,
        which copes far better than power iteration with a small gap between
        the two leading singular values. ``"gram"`` takes the top eigenvector
        of the dense Gram matrix on the smaller side, which is the fastest
        choice when ``min(m, n)`` is a few hundred.
    u0 : ndarray, optional
        Left warm-start vector, used by ``"lanczos"`` when ``m < n``.

    Returns
    -------
    sigma, u, v, info
        ``info`` has keys ``iters``, ``residual`` and ``converged``. On
        nonconvergence an :class:`InexactOracleWarning` is emitted and the best
        pair found is returned.
    """
    m, n = A.shape
    if A.nnz == 0 or not np.any(A.values):
        raise ValueError("matrix has no nonzero entries")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iters is None:
        max_iters = 10 * max(m, n)

    if min(m, n) <= dense_dim:
        U, s, Vt = np.linalg.svd(A.toarray(), full_matrices=False)
        u, v = U[:, 0], Vt[0]
        sg = _fix_sign(u)
        return float(s[0]), sg * u, sg * v, {"iters": 0, "residual": 0.0, "converged": True}

    M = A.csr
    if method == "lanczos":
        return _lanczos_triplet(M, tol, max_iters, seed, v0, u0)
    if method == "gram":
        return _gram_triplet(M, tol)
    if method != "power":
        raise ValueError("method must be 'power', 'lanczos' or 'gram'")
    Mt = M.T.tocsr()
    if v0 is None:
        v = np.random.default_rng(seed).standard_normal(n)
    else:
        v = np.array(v0, dtype=float)
        if not np.any(v):
            v = np.random.default_rng(seed).standard_normal(n)
    v /= np.linalg.norm(v)

    best = None
    it = 0
    res = np.inf
    for it in range(1, max_iters + 1):
        w = M @ v
        sigma = np.linalg.norm(w)
        if sigma == 0.0:
            # v landed in the null space; restart from a fresh direction
            v = np.random.default_rng(seed + it).standard_normal(n)
            v /= np.linalg.norm(v)
            continue
        u = w / sigma
        y = Mt @ u
        res = np.linalg.norm(y - sigma * v) / sigma
        if best is None or res < best[0]:
            best = (res, sigma, u, v)
        if res <= tol:
            break
        v = y / np.linalg.norm(y)
    res, sigma, u, v = best
    converged = res <= tol
    if not converged:
        warnings.warn(
            "power iteration stopped at residual %.3g after %d iterations" % (res, it),
            InexactOracleWarning,
            stacklevel=2,
        )
    sg = _fix_sign(u)
    return float(sigma), sg * u, sg * v, {"iters": it, "residual": float(res), "converged": converged}


def _gram_triplet(M, tol):
    m, n = M.shape
    A = M.toarray()
    if m <= n:
        _, Q = scipy.linalg.eigh(A @ A.T, subset_by_index=[m - 1, m - 1], driver="evr")
        v = A.T @ Q[:, 0]
    else:
        _, Q = scipy.linalg.eigh(A.T @ A, subset_by_index=[n - 1, n - 1], driver="evr")
        v = Q[:, 0]
    v /= np.linalg.norm(v)
    w = A @ v
    sigma = float(np.linalg.norm(w))
    u = w / sigma
    res = float(np.linalg.norm(A.T @ u - sigma * v) / sigma)
    converged = res <= tol
    if not converged:
        warnings.warn("Gram eigensolver residual %.3g" % res, InexactOracleWarning, stacklevel=3)
    sg = _fix_sign(u)
    return sigma, sg * u, sg * v, {"iters": 1, "residual": res, "converged": converged}


def _lanczos_triplet(M, tol, max_iters, seed, v0, u0, krylov_dim=60):
    """Golub-Kahan-Lanczos bidiagonalization with full reorthogonalization and
    explicit restarts from the current Ritz vector."""
    m, n = M.shape
    Mt = M.T.tocsr()
    if v0 is not None and np.any(v0):
        v = np.array(v0, dtype=float)
    elif u0 is not None and np.any(u0):
        v = Mt @ np.asarray(u0, dtype=float)
    else:
        v = np.random.default_rng(seed).standard_normal(n)
    if not np.any(v):
        v = np.random.default_rng(seed).standard_normal(n)
    v /= np.linalg.norm(v)
    k_max = max(2, min(krylov_dim, m, n))
    budget = max_iters
    total = 0
    best = None
    while True:
        V = np.zeros((k_max, n))
        U = np.zeros((k_max, m))
        alpha = np.zeros(k_max)
        beta = np.zeros(k_max)
        u_prev = np.zeros(m)
        b_prev = 0.0
        k = 0
        v_next = None
        for k in range(1, k_max + 1):
            j = k - 1
            V[j] = v
            w = M @ v - b_prev * u_prev
            w -= U[:j].T @ (U[:j] @ w)
            a = np.linalg.norm(w)
            scale = max(alpha[:j].max(initial=0.0), beta[:j].max(initial=0.0))
            if a <= 1e-13 * scale or a == 0.0:
                # Krylov space exhausted (or v in the null space): restart
                k, v_next = j, v
                break
            u = w / a
            U[j], alpha[j] = u, a
            z = Mt @ u - a * v
            z -= V[:k].T @ (V[:k] @ z)
            z -= V[:k].T @ (V[:k] @ z)
            b = np.linalg.norm(z)
            beta[j] = b
            total += 1
            if b <= 1e-14 * a:
                v_next = None
                break
            v, u_prev, b_prev = z / b, u, b
            v_next = v
            if k % 10 == 0 or total >= budget:
                Bk = np.diag(alpha[:k]) + np.diag(beta[:k - 1], 1)
                X, S, Yt = np.linalg.svd(Bk)
                if b * abs(X[-1, 0]) <= 0.5 * tol * S[0] or total >= budget:
                    break
        if k == 0:
            v = np.random.default_rng(seed + total + 1).standard_normal(n)
            v /= np.linalg.norm(v)
            total += 1
            if total >= budget:
                raise ValueError("matrix appears to be zero")
            continue
        # Ritz pair from A.T U_k = V_{k+1} B.T, B upper bidiagonal k x (k+1)
        if v_next is not None:
            Bk = np.zeros((k, k + 1))
            Bk[:, :k] = np.diag(alpha[:k]) + np.diag(beta[:k - 1], 1)
            Bk[k - 1, k] = beta[k - 1]
            Vk = np.vstack([V[:k], v_next])
        else:
            Bk = np.diag(alpha[:k]) + np.diag(beta[:k - 1], 1)
            Vk = V[:k]
        X, S, Yt = np.linalg.svd(Bk)
        v = Yt[0] @ Vk
        v /= np.linalg.norm(v)
        w = M @ v
        sigma = float(np.linalg.norm(w))
        u = w / sigma
        res = float(np.linalg.norm(Mt @ u - sigma * v) / sigma)
        if best is None or res < best[0]:
            best = (res, sigma, u, v)
        if res <= tol or total >= budget:
            break
    res, sigma, u, v = best
    converged = res <= tol
    if not converged:
        warnings.warn("Lanczos stopped at residual %.3g after %d steps" % (res, total),
                      InexactOracleWarning, stacklevel=3)
    sg = _fix_sign(u)
    return sigma, sg * u, sg * v, {"iters": total, "residual": res, "converged": converged}


def sym_eig_extreme(S, sense="largest"):
    """Extreme eigenpair of a small symmetric matrix.

    The eigenvector is unit norm with its first nonzero entry positive.
    """
    S = symmetrize(S)
    if S.shape[0] < 1:
        raise ValueError("empty matrix")
    w, Q = np.linalg.eigh(S)
    if sense == "largest":
        idx = w.size - 1
    elif sense == "smallest":
        idx = 0
    else:
        raise ValueError("sense must be 'largest' or 'smallest'")
    q = Q[:, idx]
    return float(w[idx]), _fix_sign(q) * q


def sym_eig_full(S, psd_floor=1e-9):
    """Eigendecomposition ``S = R diag(s) R.T`` of a numerically PSD matrix.

    Eigenvalues are returned descending and clipped at zero. An eigenvalue below
    ``-psd_floor * max(1, ||S||_2)`` raises :class:`NotPSDError`.
    """
    S = symmetrize(S)
    w, R = np.linalg.eigh(S)
    scale = max(1.0, float(np.max(np.abs(w))) if w.size else 0.0)
    if w.size and w[0] < -psd_floor * scale:
        raise NotPSDError("smallest eigenvalue %.3g is below -psd_floor" % w[0])
    w, R = w[::-1], R[:, ::-1]
    for j in range(w.size):
        R[:, j] *= _fix_sign(R[:, j])
    return np.ascontiguousarray(R), np.clip(w, 0.0, None)


def svd_scale_plus_rank1(svd, c, a, b, rank_tol=RANK_TOL):
    """Thin SVD of ``c * U diag(s) V.T + a b.T`` (c >= 0).

    Augments the bases with the normalized residuals of ``a`` and ``b`` and
    recompresses through an ``(r+1) x (r+1)`` dense SVD.
    """
    if c < 0:
        raise ValueError("c must be nonnegative")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    U, s, V = svd.U, svd.s, svd.V
    r = s.size
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return _canonical(U, c * s, V, rank_tol) if c != 1 else svd

    p = U.T @ a
    ra = a - U @ p
    corr = U.T @ ra  # second Gram-Schmidt pass
    p += corr
    ra -= U @ corr
    alpha = np.linalg.norm(ra)
    if alpha <= 1e-14 * na:
        alpha, P = 0.0, np.zeros_like(a)
    else:
        P = ra / alpha

    q = V.T @ b
    rb = b - V @ q
    corr = V.T @ rb
    q += corr
    rb -= V @ corr
    beta = np.linalg.norm(rb)
    if beta <= 1e-14 * nb:
        beta, Q = 0.0, np.zeros_like(b)
    else:
        Q = rb / beta

    K = np.zeros((r + 1, r + 1))
    K[:r, :r] = np.diag(c * s)
    K += np.outer(np.append(p, alpha), np.append(q, beta))
    Uk, sk, Vkt = np.linalg.svd(K)
    Unew = np.column_stack([U, P]) @ Uk
    Vnew = np.column_stack([V, Q]) @ Vkt.T
    return _canonical(Unew, sk, Vnew, rank_tol)


def svd_inface_update(svd, delta, psd_floor=1e-9, rank_tol=RANK_TOL):
    """Thin SVD of ``U (diag(s) + delta) V.T`` for symmetric ``delta`` keeping the sum PSD."""
    R, w = sym_eig_full(np.diag(svd.s) + symmetrize(delta), psd_floor=psd_floor)
    return _canonical(svd.U @ R, w, svd.V @ R, rank_tol)


def reorthogonalize(svd, rank_tol=RANK_TOL):
    """Re-derive orthonormal factors for the same matrix via QR + small SVD."""
    if svd.rank == 0:
        return svd
    Qu, Ru = np.linalg.qr(svd.U)
    Qv, Rv = np.linalg.qr(svd.V)
    Uk, sk, Vkt = np.linalg.svd((Ru * svd.s) @ Rv.T)
    return _canonical(Qu @ Uk, sk, Qv @ Vkt.T, rank_tol)


def sample_lowrank_entries(svd, rows, cols):
    """Entries ``Z[rows[t], cols[t]]`` of ``Z = U diag(s) V.T`` without forming ``Z``."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    if rows.size == 0 or svd.rank == 0:
        return np.zeros(rows.size)
    return np.einsum("ij,ij->i", svd.U[rows] * svd.s, svd.V[cols])


def lowrank_nuclear_norm(blocks_u, coef, blocks_v):
    """Nuclear norm of ``Bu @ coef @ Bv.T`` via QR of the (tall) factor blocks."""
    _, Ru = np.linalg.qr(blocks_u)
    _, Rv = np.linalg.qr(blocks_v)
    return float(np.linalg.svd(Ru @ coef @ Rv.T, compute_uv=False).sum())
