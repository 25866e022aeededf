import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import linprog

from confound_bounds.core import ValidationError
from confound_bounds.oracle import (
    CounterfactualTable,
    FiniteInstance,
    check_mixture_identity,
    check_nesting,
    greedy_knapsack,
    lp_coefficients,
    lp_sharp_bounds,
    oracle_suite,
    random_counterfactual_table,
    random_instance,
    vertex_knapsack,
)

FOUR_G = np.array([0.1, 0.2, 0.3, 0.4])
FOUR_P = np.full(4, 0.25)


def test_four_point_knapsack():
    assert greedy_knapsack(FOUR_P, FOUR_G, 0.25) == pytest.approx(0.1)
    assert greedy_knapsack(FOUR_P, FOUR_G, 0.25, maximize=False) == pytest.approx(0.025)
    assert vertex_knapsack(FOUR_P, FOUR_G, 0.25) == pytest.approx(0.1)
    assert vertex_knapsack(FOUR_P, FOUR_G, 0.25, maximize=False) == pytest.approx(0.025)


def test_full_and_empty_mass():
    inst = random_instance(np.random.default_rng(3), 5)
    base = float(np.dot(inst.probs, inst.mu1 - inst.mu0))
    assert lp_sharp_bounds(inst, 0.0, 1.0) == pytest.approx((base, base), abs=1e-15)
    mass, up, _ = lp_coefficients(inst, 1.0, "x")
    assert lp_sharp_bounds(inst, 1.0, 1.0)[1] == pytest.approx(base + np.dot(mass, up), abs=1e-14)


def test_slopes_follow_the_box():
    inst = FiniteInstance(np.array([1.0]), np.array([0.25]), np.array([0.4]), np.array([0.7]))
    _, up, low = lp_coefficients(inst, 1.0, "x")
    assert up[0] == pytest.approx(0.75 * 0.3 + 0.25 * 0.4)
    assert low[0] == pytest.approx(0.75 * -0.7 - 0.25 * 0.6)
    with pytest.raises(ValidationError):
        lp_coefficients(inst, 1.0, "z")


def _linprog_bounds(inst, eps, delta, model):
    mass, up, low = lp_coefficients(inst, delta, model)
    base = float(np.dot(inst.probs, inst.mu1 - inst.mu0))
    box = list(zip(np.zeros_like(mass), mass))
    eq = (np.ones((1, mass.size)), [eps])
    lo = linprog(low, A_eq=eq[0], b_eq=eq[1], bounds=box, method="highs")
    hi = linprog(-up, A_eq=eq[0], b_eq=eq[1], bounds=box, method="highs")
    return base + lo.fun, base - hi.fun


@given(seed=st.integers(0, 2**31), size=st.integers(1, 12), eps=st.floats(0, 1), delta=st.floats(0, 1),
       model=st.sampled_from(["x", "xa"]))
def test_greedy_matches_generic_lp_solver(seed, size, eps, delta, model):
    inst = random_instance(np.random.default_rng(seed), size, ties=True)
    ours = lp_sharp_bounds(inst, eps, delta, model)
    ref = _linprog_bounds(inst, eps, delta, model)
    assert ours == pytest.approx(ref, abs=1e-8)


@given(seed=st.integers(0, 2**31), size=st.integers(1, 6), eps=st.floats(0, 1))
def test_greedy_matches_vertices(seed, size, eps):
    rng = np.random.default_rng(seed)
    mass = rng.dirichlet(np.ones(size))
    value = rng.normal(size=size)
    for maximize in (True, False):
        assert greedy_knapsack(mass, value, eps, maximize) == pytest.approx(
            vertex_knapsack(mass, value, eps, maximize), abs=1e-12
        )


def _table(s):
    rows = [(0, s, 0, 0.1, 0.5, 0.2), (0, s, 1, 0.3, 0.9, 0.3), (1, s, 0, 0.6, 0.2, 0.25), (1, s, 1, 0.0, 1.0, 0.25)]
    arr = np.array(rows)
    return CounterfactualTable(arr[:, 0].astype(int), arr[:, 1].astype(int), arr[:, 2].astype(int),
                               arr[:, 3], arr[:, 4], arr[:, 5])


def test_mixture_identity_all_unconfounded():
    rng = np.random.default_rng(0)
    t = random_counterfactual_table(rng, n_x=3, n_pairs=2, s_values=(1,))
    assert check_mixture_identity(t) <= 1e-12


def test_mixture_identity_all_confounded():
    assert check_mixture_identity(_table(0)) <= 1e-12
    t = random_counterfactual_table(np.random.default_rng(1), n_x=2, n_pairs=3, s_values=(0,))
    assert check_mixture_identity(t) <= 1e-12


@pytest.mark.parametrize("seed", range(10))
def test_mixture_identity_mixed(seed):
    t = random_counterfactual_table(np.random.default_rng(seed), n_x=2, n_pairs=1)
    assert len(t.probs) == 8
    assert check_mixture_identity(t) <= 1e-12


def test_mixture_identity_detects_violation():
    # S = 1 units whose outcome pairs depend on A break the identity
    assert check_mixture_identity(_table(1)) > 1e-3


def test_nesting_edges():
    inst = random_instance(np.random.default_rng(5), 6)
    assert check_nesting(inst, [0.0], 0.7) == 0.0
    x_hi = lp_sharp_bounds(inst, 1.0, 0.7, "x")[1]
    xa_hi = lp_sharp_bounds(inst, 1.0, 0.7, "xa")[1]
    assert x_hi == pytest.approx(xa_hi, abs=1e-14)


@pytest.mark.parametrize("seed", range(50))
def test_nesting_random(seed):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, int(rng.integers(1, 13)))
    assert check_nesting(inst, np.linspace(0, 1, 11), float(rng.uniform())) <= 1e-12


def test_instance_json_roundtrip():
    inst = random_instance(np.random.default_rng(2), 4)
    back = FiniteInstance.from_json(inst.to_json())
    for f in ("probs", "pi1", "mu0", "mu1"):
        assert np.array_equal(getattr(back, f), getattr(inst, f))
    assert (back.y_min, back.y_max) == (inst.y_min, inst.y_max)


def test_suite_passes():
    results = oracle_suite(40, seed=7)
    assert all(c.passed for c in results)
    assert {c.name for c in results} == {"sharpness", "vertex", "width", "mixture", "nesting"}


def test_suite_reports_injected_offset():
    results = {c.name: c for c in oracle_suite(3, seed=7, offset=1e-3)}
    assert not results["sharpness"].passed
    payload = json.loads(results["sharpness"].failing)
    assert set(payload) == {"delta", "instance"}
    FiniteInstance.from_json(json.dumps(payload["instance"]))


def test_empty_suite_is_vacuous():
    assert all(c.passed and c.count == 0 for c in oracle_suite(0, seed=0))
