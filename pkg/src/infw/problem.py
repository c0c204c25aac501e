"""Matrix-completion objective, synthetic instances, triplet I/O and radius selection."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
import hashlib
import io
import math
import os

import numpy as np

from .linalg import SparseRealMatrix


@dataclass(frozen=True)
class Instance:
    """Observed entries ``X_Omega`` of an ``m x n`` matrix, a nuclear-norm radius and
    an objective normalization.

    The objective is ``f(Z) = scale / 2 * sum_{Omega} (Z_ij - X_ij)^2`` with
    ``scale = 1 / sum X_ij^2`` so that ``f(0) = 0.5``.
    """

    observed: SparseRealMatrix
    delta: float | None = None
    scale: float = 1.0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.observed.nnz < 1:
            raise ValueError("instance needs at least one observed entry")
        if self.delta is not None and not self.delta > 0:
            raise ValueError("delta must be positive, got %r" % (self.delta,))

    @classmethod
    def from_observed(cls, observed, delta=None, meta=None):
        total = float(np.sum(observed.values**2))
        scale = 1.0 / total if total > 0 else 1.0
        return cls(observed, delta, scale, dict(meta or {}))

    @property
    def shape(self):
        return self.observed.shape

    @property
    def rows(self):
        return self.observed.rows

    @property
    def cols(self):
        return self.observed.cols

    @property
    def values(self):
        return self.observed.values

    @property
    def n_observed(self):
        return self.observed.nnz

    def with_delta(self, delta):
        return replace(self, delta=float(delta))

    def subset(self, mask):
        """Instance restricted to the observed entries selected by boolean ``mask``.

        The scale is recomputed for the subset.
        """
        obs = SparseRealMatrix(
            self.shape, self.rows[mask], self.cols[mask], self.values[mask], _checked=True
        )
        return Instance.from_observed(obs, self.delta, self.meta)

    def omega_hash(self):
        h = hashlib.sha256()
        h.update(np.asarray(self.shape, dtype=np.int64).tobytes())
        h.update(self.rows.tobytes())
        h.update(self.cols.tobytes())
        h.update(self.values.tobytes())
        return h.hexdigest()


def _check_aligned(z_omega, instance):
    z_omega = np.asarray(z_omega, dtype=float)
    if z_omega.shape != instance.values.shape:
        raise ValueError(
            "z_omega has %d entries, instance observes %d" % (z_omega.size, instance.n_observed)
        )
    return z_omega


def objective_value(z_omega, instance):
    r = _check_aligned(z_omega, instance) - instance.values
    return 0.5 * instance.scale * float(r @ r)


def gradient(z_omega, instance):
    """Gradient ``scale * (Z - X)_Omega`` as a sparse matrix on the observed support."""
    r = _check_aligned(z_omega, instance) - instance.values
    return instance.observed.with_values(instance.scale * r)


def exact_linesearch(grad, d_omega, scale, alpha_max=math.inf):
    """Minimizer over ``[0, alpha_max]`` of the objective along direction ``d``.

    ``grad`` is the (scaled) gradient at the current point and ``d_omega`` the
    direction restricted to the observed entries.
    """
    if alpha_max < 0:
        raise ValueError("alpha_max must be nonnegative")
    d_omega = np.asarray(d_omega, dtype=float)
    curv = scale * float(d_omega @ d_omega)
    slope = grad.inner(d_omega)
    if curv == 0.0 or slope >= 0.0:
        return 0.0
    return min(-slope / curv, alpha_max)


@dataclass(frozen=True)
class GenSpec:
    m: int
    n: int
    r: int
    snr: float
    rho: float
    seed: int = 0

    def __post_init__(self):
        if not (1 <= self.r <= min(self.m, self.n)):
            raise ValueError("planted rank must be in [1, min(m, n)]")
        if not self.snr > 0:
            raise ValueError("SNR must be positive")
        if not (0 < self.rho <= 1):
            raise ValueError("rho must be in (0, 1]")


def generate_instance(spec, delta=None):
    """Draw ``X = w1 U V^T + w2 E`` and a Bernoulli(rho) observation mask.

    ``U``, ``V`` and ``E`` are i.i.d. standard normal with
    ``w1 = 1 / ||U V^T||_F`` and ``w2 = 1 / (SNR ||E||_F)``.

    Returns
    -------
    instance : Instance
    truth : dict
        ``signal`` (the dense ``w1 U V^T``), ``X`` (dense full matrix),
        ``U``, ``V``, ``w1``, ``w2``.
    """
    rng = np.random.default_rng(spec.seed)
    m, n = spec.m, spec.n
    U = rng.standard_normal((m, spec.r))
    V = rng.standard_normal((n, spec.r))
    E = rng.standard_normal((m, n))
    signal = U @ V.T
    w1 = 1.0 / np.linalg.norm(signal)
    w2 = 1.0 / (spec.snr * np.linalg.norm(E))
    X = w1 * signal + w2 * E

    redraws = 0
    while True:
        mask = rng.random((m, n)) < spec.rho
        if mask.any():
            break
        redraws += 1
    rows, cols = np.nonzero(mask)  # row-major order
    obs = SparseRealMatrix((m, n), rows, cols, X[rows, cols], _checked=True)
    meta = {
        "m": m, "n": n, "r": spec.r, "snr": spec.snr, "rho": spec.rho,
        "seed": spec.seed, "mask_redraws": redraws,
    }
    inst = Instance.from_observed(obs, delta, meta)
    truth = {"signal": w1 * signal, "X": X, "U": U, "V": V, "w1": w1, "w2": w2}
    return inst, truth


# --- triplet files ---------------------------------------------------------

def load_triplets(source, dims=None):
    """Read ``i j value`` records (1-based indices) into an :class:`Instance`.

    ``source`` is a path or an iterable of text lines. Blank lines and lines
    starting with ``#`` are skipped. ``dims`` defaults to the largest indices seen.
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8") as fh:
            return load_triplets(fh.readlines(), dims)

    rows, cols, vals = [], [], []
    for lineno, line in enumerate(source, start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        parts = text.split()
        if len(parts) != 3:
            raise ValueError("line %d: expected 'i j value', got %r" % (lineno, text))
        try:
            i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise ValueError("line %d: cannot parse %r" % (lineno, text)) from None
        if i < 1 or j < 1:
            raise ValueError("line %d: indices are 1-based, got (%d, %d)" % (lineno, i, j))
        rows.append(i - 1)
        cols.append(j - 1)
        vals.append(v)
    if not rows:
        raise ValueError("no records found")
    rows = np.array(rows)
    cols = np.array(cols)
    if dims is None:
        dims = (int(rows.max()) + 1, int(cols.max()) + 1)
    elif rows.max() >= dims[0] or cols.max() >= dims[1]:
        bad = int(np.argmax((rows >= dims[0]) | (cols >= dims[1])))
        raise ValueError(
            "entry (%d, %d) is outside dims %r" % (rows[bad] + 1, cols[bad] + 1, tuple(dims))
        )
    try:
        obs = SparseRealMatrix(dims, rows, cols, vals)
    except ValueError as exc:
        if "duplicate" in str(exc):
            i, j = (int(t) for t in str(exc).split("(")[1].rstrip(")").split(","))
            raise ValueError("duplicate coordinate (%d, %d)" % (i + 1, j + 1)) from None
        raise
    return Instance.from_observed(obs)


def write_triplets(instance, dest):
    """Write observed entries as 1-based ``i j value`` lines. ``dest`` is a path or text stream."""
    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "w", encoding="utf-8") as fh:
            write_triplets(instance, fh)
        return
    for i, j, v in zip(instance.rows, instance.cols, instance.values):
        dest.write("%d %d %r\n" % (i + 1, j + 1, float(v)))


def write_metadata(instance, dest, **extra):
    info = {
        "m": instance.shape[0],
        "n": instance.shape[1],
        "n_observed": instance.n_observed,
        "delta": "" if instance.delta is None else repr(float(instance.delta)),
        "scale": repr(float(instance.scale)),
        "seed": instance.meta.get("seed", ""),
    }
    info.update(extra)
    with open(dest, "w", encoding="utf-8") as fh:
        for key, val in info.items():
            fh.write("%s=%s\n" % (key, val))


def read_metadata(path):
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                key, _, val = line.partition("=")
                out[key.strip()] = val.strip()
    return out


def save_instance(instance, directory):
    """Write ``observed.txt`` and ``meta.txt`` under ``directory``."""
    os.makedirs(directory, exist_ok=True)
    write_triplets(instance, os.path.join(directory, "observed.txt"))
    write_metadata(instance, os.path.join(directory, "meta.txt"))


def load_instance(path):
    """Load an instance from a directory written by :func:`save_instance` or a bare triplet file."""
    if os.path.isdir(path):
        meta = read_metadata(os.path.join(path, "meta.txt"))
        dims = (int(meta["m"]), int(meta["n"]))
        inst = load_triplets(os.path.join(path, "observed.txt"), dims)
        if meta.get("delta"):
            inst = inst.with_delta(float(meta["delta"]))
        seed = meta.get("seed")
        inst.meta.update({"seed": int(seed)} if seed not in (None, "") else {})
        return inst
    return load_triplets(path)


def triplet_text(instance):
    buf = io.StringIO()
    write_triplets(instance, buf)
    return buf.getvalue()


# --- delta selection -------------------------------------------------------

def holdout_split(instance, holdout_fraction=0.1, seed=0):
    """Partition observed entries into (train, holdout) boolean masks."""
    if not (0 < holdout_fraction < 0.5):
        raise ValueError("holdout_fraction must be in (0, 0.5)")
    n_obs = instance.n_observed
    n_hold = max(1, int(round(holdout_fraction * n_obs)))
    if n_hold >= n_obs:
        raise ValueError("not enough observed entries for a holdout set")
    perm = np.random.default_rng(seed).permutation(n_obs)
    hold = np.zeros(n_obs, dtype=bool)
    hold[perm[:n_hold]] = True
    return ~hold, hold


def default_delta_grid(instance, n_points=10, lo=0.25, hi=8.0):
    """Geometric grid around the estimated full-matrix Frobenius norm ``||X_Omega||_F / sqrt(rho)``."""
    m, n = instance.shape
    rho = instance.n_observed / float(m * n)
    ref = float(np.linalg.norm(instance.values)) / math.sqrt(rho)
    return list(ref * np.geomspace(lo, hi, n_points))


def select_delta(instance, holdout_fraction=0.1, grid=None, budget=500, gap_target=1e-3, seed=0,
                 return_details=False):
    """Pick the radius from ``grid`` with the smallest holdout squared error.

    Frank-Wolfe runs along the increasing grid on the training entries, each
    warm-started from the previous radius's solution (which stays feasible
    because the radii increase). Each radius runs until the relative gap
    reaches ``gap_target`` or ``budget`` iterations pass. Once a radius is
    large enough to interpolate the training entries the lower bound stays at
    zero, so the gap test becomes ``f <= gap_target``.

    A small budget biases the choice toward large radii: an unconverged
    Frank-Wolfe path acts as extra regularization, so holdout error keeps
    improving past the radius a converged path would choose.
    """
    from .solvers import SolverConfig, run_frank_wolfe  # local: solvers imports this module
    from .linalg import sample_lowrank_entries

    if grid is None:
        grid = default_delta_grid(instance)
    grid = [float(g) for g in grid]
    if not grid:
        raise ValueError("delta grid is empty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("delta grid must be strictly increasing")
    if len(grid) == 1:
        return (grid[0], {"grid": grid, "errors": [math.nan]}) if return_details else grid[0]

    train_mask, hold_mask = holdout_split(instance, holdout_fraction, seed)
    train = instance.subset(train_mask)
    h_rows, h_cols = instance.rows[hold_mask], instance.cols[hold_mask]
    h_vals = instance.values[hold_mask]

    errors = []
    warm = None
    for delta in grid:
        cfg = SolverConfig(method="fw", gap_target=gap_target, max_iters=budget, seed=seed)
        trace = run_frank_wolfe(train.with_delta(delta), cfg, init=warm)
        warm = trace.final_svd
        pred = sample_lowrank_entries(warm, h_rows, h_cols)
        errors.append(float(np.sum((pred - h_vals) ** 2)))
    best = int(np.argmin(errors))
    if return_details:
        return grid[best], {"grid": grid, "errors": errors, "holdout_mask": hold_mask}
    return grid[best]
