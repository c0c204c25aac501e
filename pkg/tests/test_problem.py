import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from infw.linalg import SparseRealMatrix
from infw.problem import (
    GenSpec, Instance, default_delta_grid, exact_linesearch, generate_instance, gradient,
    holdout_split, load_instance, load_triplets, objective_value, save_instance, select_delta,
    triplet_text,
)

from conftest import make_instance


def test_objective_basic_values(small_instance):
    inst = small_instance
    assert objective_value(inst.values, inst) == 0.0
    assert objective_value(np.zeros(inst.n_observed), inst) == pytest.approx(0.5, abs=1e-15)
    one = Instance(SparseRealMatrix((1, 1), [0], [0], [3.0]), scale=1.0)
    assert objective_value([1.0], one) == 2.0


def test_objective_rejects_misaligned(small_instance):
    with pytest.raises(ValueError):
        objective_value(np.zeros(3), small_instance)


def test_gradient_cases(small_instance):
    inst = small_instance
    assert not np.any(gradient(inst.values, inst).values)
    g0 = gradient(np.zeros(inst.n_observed), inst)
    assert np.allclose(g0.values, -inst.scale * inst.values)
    assert np.array_equal(g0.rows, inst.rows) and np.array_equal(g0.cols, inst.cols)


@pytest.mark.parametrize("seed", range(20))
def test_gradient_finite_difference(seed):
    inst, _ = make_instance(8, 7, 2, rho=0.5, seed=seed)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(inst.n_observed)
    d = rng.standard_normal(inst.n_observed)
    h = 1e-5
    fd = (objective_value(z + h * d, inst) - objective_value(z - h * d, inst)) / (2 * h)
    an = gradient(z, inst).inner(d)
    assert abs(fd - an) <= 1e-6 * max(abs(an), 1e-12)


def test_convexity_and_lipschitz_surrogate():
    rng = np.random.default_rng(0)
    inst, _ = make_instance(10, 9, 2, rho=0.6)
    for _ in range(50):
        A = rng.standard_normal(inst.shape)
        B = rng.standard_normal(inst.shape)
        a, b = A[inst.rows, inst.cols], B[inst.rows, inst.cols]
        lam = rng.random()
        lhs = objective_value(lam * a + (1 - lam) * b, inst)
        rhs = lam * objective_value(a, inst) + (1 - lam) * objective_value(b, inst)
        assert lhs <= rhs + 1e-12
        # quadratic remainder against L = scale and the nuclear norm
        rem = objective_value(b, inst) - objective_value(a, inst) - gradient(a, inst).inner(b - a)
        nuc = np.linalg.svd(B - A, compute_uv=False).sum()
        assert abs(rem) <= 0.5 * inst.scale * nuc**2 + 1e-12


def test_linesearch_cases(small_instance):
    inst = small_instance
    z = np.zeros(inst.n_observed)
    g = gradient(z, inst)
    assert exact_linesearch(g, -g.values, inst.scale) == pytest.approx(1.0 / inst.scale)
    cap = 0.5 / inst.scale
    assert exact_linesearch(g, -g.values, inst.scale, alpha_max=cap) == cap
    assert exact_linesearch(g, np.zeros_like(z), inst.scale) == 0.0
    assert exact_linesearch(g, g.values, inst.scale) == 0.0
    with pytest.raises(ValueError):
        exact_linesearch(g, -g.values, inst.scale, alpha_max=-1.0)


def test_linesearch_matches_golden_section():
    rng = np.random.default_rng(13)
    x = rng.standard_normal(30)
    z = rng.standard_normal(30)
    d = x - z + 0.3 * rng.standard_normal(30)
    rows, cols = np.divmod(np.arange(30), 6)
    inst = Instance.from_observed(SparseRealMatrix((5, 6), rows, cols, x))
    alpha = exact_linesearch(gradient(z, inst), d, inst.scale, alpha_max=10.0)
    # frozen from a 200-step golden-section search on the same ray
    assert alpha == pytest.approx(0.9869513991439409, rel=1e-8)


def test_generate_definitions():
    inst, truth = generate_instance(GenSpec(20, 30, 3, 5.0, 1.0, seed=4))
    assert inst.n_observed == 600
    assert objective_value(np.zeros(600), inst) == pytest.approx(0.5, abs=1e-15)
    assert truth["w1"] * np.linalg.norm(truth["U"] @ truth["V"].T) == pytest.approx(1.0)
    noise = truth["X"] - truth["signal"]
    assert np.linalg.norm(noise) * 5.0 == pytest.approx(1.0)


def test_generate_table_size():
    inst, _ = generate_instance(GenSpec(200, 400, 10, 5.0, 0.10, seed=0))
    mean = 8000
    sd = math.sqrt(80000 * 0.1 * 0.9)
    assert abs(inst.n_observed - mean) <= 3 * sd


def test_genspec_validation():
    with pytest.raises(ValueError):
        GenSpec(5, 5, 6, 1.0, 0.5)
    with pytest.raises(ValueError):
        GenSpec(5, 5, 2, 0.0, 0.5)
    with pytest.raises(ValueError):
        GenSpec(5, 5, 2, 1.0, 0.0)


def test_instance_validation():
    obs = SparseRealMatrix((2, 2), [0], [0], [1.0])
    with pytest.raises(ValueError):
        Instance.from_observed(obs, delta=0.0)
    with pytest.raises(ValueError):
        Instance(SparseRealMatrix((2, 2), [], [], []))


# --- triplets -------------------------------------------------------------------

def test_load_triplets_basic():
    inst = load_triplets(["# comment", "1 1 2.5", "", "2 3 -1", "3 2 4e-1"])
    assert inst.shape == (3, 3) and inst.n_observed == 3
    assert list(inst.rows) == [0, 1, 2]


def test_load_triplets_errors():
    with pytest.raises(ValueError, match=r"duplicate coordinate \(1, 1\)"):
        load_triplets(["1 1 2", "1 1 3"])
    with pytest.raises(ValueError, match="line 2"):
        load_triplets(["1 1 2", "1 x 3"])
    with pytest.raises(ValueError, match="outside"):
        load_triplets(["4 1 2"], dims=(3, 3))
    with pytest.raises(ValueError, match="1-based"):
        load_triplets(["0 1 2"])


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 1000))
def test_triplet_roundtrip(seed):
    inst, _ = make_instance(7, 5, 2, rho=0.5, seed=seed)
    back = load_triplets(triplet_text(inst).splitlines(), dims=inst.shape)
    assert np.array_equal(back.rows, inst.rows) and np.array_equal(back.cols, inst.cols)
    assert np.array_equal(back.values, inst.values)


def test_save_load_instance(tmp_path, small_instance):
    save_instance(small_instance, tmp_path / "inst")
    back = load_instance(str(tmp_path / "inst"))
    assert back.omega_hash() == small_instance.omega_hash()
    assert back.delta == small_instance.delta
    assert back.scale == pytest.approx(small_instance.scale, rel=1e-15)


# --- radius selection -------------------------------------------------------------

def test_holdout_disjoint(small_instance):
    train, hold = holdout_split(small_instance, 0.1, 0)
    assert not np.any(train & hold) and np.all(train | hold)
    assert hold.sum() == round(0.1 * small_instance.n_observed)
    with pytest.raises(ValueError):
        holdout_split(small_instance, 0.5)


def test_select_delta_trivial_and_errors(small_instance):
    assert select_delta(small_instance, grid=[2.0]) == 2.0
    with pytest.raises(ValueError):
        select_delta(small_instance, grid=[])
    with pytest.raises(ValueError):
        select_delta(small_instance, grid=[2.0, 1.0])


def test_select_delta_prefers_enough_radius():
    # noiseless rank one: the nuclear norm of the full matrix is its Frobenius norm
    rng = np.random.default_rng(3)
    a, b = rng.standard_normal(40), rng.standard_normal(30)
    X = np.outer(a, b)
    mask = rng.random(X.shape) < 0.5
    rows, cols = np.nonzero(mask)
    inst = Instance.from_observed(SparseRealMatrix(X.shape, rows, cols, X[rows, cols]))
    exact = float(np.linalg.norm(X))
    grid = [0.5 * exact, exact, 2.0 * exact]
    best, info = select_delta(inst, grid=grid, budget=100, return_details=True)
    assert best in grid[1:]
    assert min(info["errors"][1:]) < info["errors"][0]


def test_default_grid_is_geometric(small_instance):
    grid = default_delta_grid(small_instance)
    assert len(grid) == 10
    ratios = np.diff(np.log(grid))
    assert np.allclose(ratios, ratios[0])
