import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from confound_bounds.bounds import (
    BoundsCurve,
    MisalignedFit,
    Population,
    bound_width,
    estimate_bounds,
    lower_tail_mass_mean,
    plug_in_bounds,
    rearrange,
    tail_mean_width,
    trim_terms,
    upper_tail_mass_mean,
)
from confound_bounds.core import Dataset, FoldPlan, SensitivityConfig, ValidationError, as_arrays
from confound_bounds.influence import nu_if
from confound_bounds.nuisance import LearnerSet, OracleLearner, fit_cross_fitted
from confound_bounds.oracle import FiniteInstance, lp_sharp_bounds, random_instance

# --- sample estimator ------------------------------------------------------------------


@pytest.fixture(scope="module")
def fitted(sim_data):
    cfg = SensitivityConfig(eps_grid=np.r_[np.linspace(0, 0.2, 11), 1.0], delta_grid=(0.0, 0.5, 1.0))
    return cfg, fit_cross_fitted(sim_data, cfg)


@pytest.mark.parametrize("model", ["x", "xa"])
def test_zero_eps_is_aipw(sim_data, fitted, model):
    cfg, fit = fitted
    curve = estimate_bounds(sim_data, fit, cfg, model)
    _, a, y = as_arrays(sim_data)
    aipw = nu_if(fit.eta(a, y)).mean()
    assert np.all(curve.psi_l[0] == aipw) and np.all(curve.psi_u[0] == aipw)


@pytest.mark.parametrize("model", ["x", "xa"])
def test_zero_delta_collapses(sim_data, fitted, model):
    cfg, fit = fitted
    curve = estimate_bounds(sim_data, fit, cfg, model)
    j = curve.column(0.0)
    assert np.all(curve.psi_l[:, j] == curve.psi_l[0, j])
    assert np.all(curve.psi_u[:, j] == curve.psi_l[0, j])


@pytest.mark.parametrize("model", ["x", "xa"])
def test_full_eps_width(sim_data, fitted, model):
    cfg, fit = fitted
    curve = estimate_bounds(sim_data, fit, cfg, model)
    assert bound_width(curve, 1.0, 1.0) == pytest.approx(1.0, abs=1e-12)
    assert bound_width(curve, 1.0, 0.5) == pytest.approx(0.5, abs=1e-12)


def test_sample_width_grows_with_delta(sim_data, fitted):
    cfg, fit = fitted
    curve = estimate_bounds(sim_data, fit, cfg)
    width = curve.psi_u - curve.psi_l
    assert np.all(np.diff(width, axis=1) >= -1e-12)


def test_misaligned_fit(sim_data, fitted):
    cfg, fit = fitted
    short = Dataset(sim_data.covariates[:10], sim_data.treatment[:10], sim_data.outcome[:10], 0.0, 1.0)
    with pytest.raises(MisalignedFit):
        trim_terms(short, fit, [0.1], 1.0)


def test_variance_matches_definition(sim_data, fitted):
    cfg, fit = fitted
    _, a, y = as_arrays(sim_data)
    terms = trim_terms(sim_data, fit, [0.1], 1.0)
    c = terms.phi_u[:, 0] - terms.lam[:, 0] * terms.q_u[:, 0] + 0.1 * terms.q_u[:, 0] - terms.phi_u[:, 0].mean()
    assert terms.sigma_u()[0] == pytest.approx(np.sqrt(np.mean(c**2)), rel=1e-14)


def _two_point():
    """Two covariate values, four rows each, residuals zero, two folds mirroring each other."""
    pi1 = {0: 0.5, 1: 0.5}
    mu0 = {0: 0.2, 1: 0.6}
    mu1 = {0: 0.7, 1: 0.5}
    rows = []
    for fold in (1, 2):
        for x in (0, 1):
            for a in (0, 1):
                rows.append((x, a, mu1[x] if a else mu0[x], fold))
    arr = np.array(rows, dtype=float)
    data = Dataset(arr[:, :1], arr[:, 1], arr[:, 2], 0.0, 1.0)
    plan = FoldPlan(arr[:, 3].astype(int), 2)
    look = lambda d: (lambda z: np.array([d[int(v)] for v in z[:, 0]]))  # noqa: E731
    learners = LearnerSet(OracleLearner(look(pi1)), OracleLearner(look(mu0)), OracleLearner(look(mu1)))
    inst = FiniteInstance(np.array([0.5, 0.5]), np.array([0.5, 0.5]), np.array([0.2, 0.6]), np.array([0.7, 0.5]))
    return data, plan, learners, inst


@pytest.mark.parametrize("model, eps", [("x", [0.0, 0.5, 1.0]), ("xa", [0.0, 0.25, 0.5, 0.75, 1.0])])
@pytest.mark.parametrize("delta", [1.0, 0.4])
def test_two_point_estimator_matches_lp(model, eps, delta):
    data, plan, learners, inst = _two_point()
    cfg = SensitivityConfig(eps_grid=eps, delta_grid=(delta,), folds=2, model=model)
    fit = fit_cross_fitted(data, cfg, learners=learners, folds=plan)
    curve = estimate_bounds(data, fit, cfg)
    for i, e in enumerate(eps):
        lo, hi = lp_sharp_bounds(inst, e, delta, model)
        assert curve.psi_l[i, 0] == pytest.approx(lo, abs=1e-10)
        assert curve.psi_u[i, 0] == pytest.approx(hi, abs=1e-10)


# --- rearrangement ----------------------------------------------------------------------


def _curve(psi_l, psi_u):
    psi_l = np.asarray(psi_l, dtype=float)[:, None]
    psi_u = np.asarray(psi_u, dtype=float)[:, None]
    eps = np.linspace(0, 0.2, len(psi_l))
    return BoundsCurve(eps, np.array([1.0]), psi_l, psi_u, np.ones_like(psi_l), np.ones_like(psi_u))


def test_rearrange_sorts_upper():
    out = rearrange(_curve([0.1, 0.0, -0.1], [0.1, 0.3, 0.2]))
    assert out.psi_u[:, 0].tolist() == [0.1, 0.2, 0.3]
    assert out.rearranged


def test_rearrange_identity_on_monotone_and_constant():
    c = _curve([0.1, 0.0, -0.1], [0.1, 0.2, 0.3])
    assert np.array_equal(rearrange(c).psi_l, c.psi_l)
    flat = _curve([0.2] * 4, [0.2] * 4)
    assert np.array_equal(rearrange(flat).psi_u, flat.psi_u)


@given(st.lists(st.floats(-1, 1), min_size=1, max_size=20), st.lists(st.floats(-1, 1), min_size=1, max_size=20))
def test_rearrange_monotone_permutation(lo, hi):
    m = min(len(lo), len(hi))
    c = _curve(lo[:m], hi[:m])
    r = rearrange(c)
    assert np.all(np.diff(r.psi_l[:, 0]) <= 0) and np.all(np.diff(r.psi_u[:, 0]) >= 0)
    assert sorted(r.psi_l[:, 0]) == sorted(c.psi_l[:, 0])


def test_curve_lookup_errors():
    c = _curve([0.0, 0.0], [0.0, 0.0])
    with pytest.raises(KeyError):
        c.column(0.5)
    with pytest.raises(KeyError):
        c.row(0.05)


# --- population bounds --------------------------------------------------------------------


def _four_point():
    # pi1 = 0.5, mu1 = 1 - mu0 makes g = mu0 at delta = 1
    mu0 = np.array([0.1, 0.2, 0.3, 0.4])
    return Population(np.full(4, 0.25), np.full(4, 0.5), mu0, 1 - mu0)


def test_four_point_upper_trim():
    pop = _four_point()
    _, g = pop.atoms(1.0)
    assert np.allclose(g, [0.1, 0.2, 0.3, 0.4])
    lo, hi = plug_in_bounds(pop, 0.25, 1.0)
    assert hi == pytest.approx(pop.mu_diff + 0.1, abs=1e-15)
    assert lo == pytest.approx(pop.mu_diff + 0.025 - 0.25, abs=1e-15)


def test_four_point_width():
    pop = _four_point()
    lo, hi = plug_in_bounds(pop, 0.25, 1.0)
    p, g = pop.atoms(1.0)
    assert hi - lo == pytest.approx(0.325, abs=1e-15)
    assert tail_mean_width(p, g, 0.25) == pytest.approx(0.325, abs=1e-15)


def test_tail_mass_means_fractional():
    p, g = np.full(4, 0.25), np.array([0.1, 0.2, 0.3, 0.4])
    assert upper_tail_mass_mean(p, g, 0.3) == pytest.approx(0.25 * 0.4 + 0.05 * 0.3)
    assert lower_tail_mass_mean(p, g, 0.3) == pytest.approx(0.25 * 0.1 + 0.05 * 0.2)
    assert upper_tail_mass_mean(p, g, 1.0) == pytest.approx(0.25)
    assert upper_tail_mass_mean(p, g, 0.0) == 0.0


def test_population_eps_outside_unit_interval():
    with pytest.raises(ValidationError):
        plug_in_bounds(_four_point(), 1.1, 1.0)


inst_seed = st.integers(0, 2**31)


@given(seed=inst_seed, size=st.integers(1, 12), delta=st.floats(0, 1), model=st.sampled_from(["x", "xa"]))
def test_population_edges(seed, size, delta, model):
    inst = random_instance(np.random.default_rng(seed), size)
    pop = inst.population()
    assert plug_in_bounds(pop, 0.0, delta, model) == (pop.mu_diff, pop.mu_diff)
    lo, hi = plug_in_bounds(pop, 0.37, 0.0, model)
    assert lo == pytest.approx(pop.mu_diff, abs=1e-14) and hi == pytest.approx(pop.mu_diff, abs=1e-14)
    lo, hi = plug_in_bounds(pop, 1.0, delta, model)
    assert hi - lo == pytest.approx(delta * (inst.y_max - inst.y_min), abs=1e-12)


@given(seed=inst_seed, size=st.integers(1, 12), model=st.sampled_from(["x", "xa"]))
def test_population_monotone_in_eps_and_delta(seed, size, model):
    inst = random_instance(np.random.default_rng(seed), size)
    pop = inst.population()
    eps = np.linspace(0, 1, 21)
    for delta in (0.3, 1.0):
        b = np.array([plug_in_bounds(pop, e, delta, model) for e in eps])
        assert np.all(np.diff(b[:, 0]) <= 1e-12) and np.all(np.diff(b[:, 1]) >= -1e-12)
    widths = []
    for delta in np.linspace(0, 1, 6):
        lo, hi = plug_in_bounds(pop, 0.3, delta, model)
        widths.append(hi - lo)
    assert np.all(np.diff(widths) >= -1e-12)


@given(seed=inst_seed, size=st.integers(1, 12), delta=st.floats(0, 1), eps=st.floats(0, 1))
def test_arm_relabelling_reflects_bounds(seed, size, delta, eps):
    inst = random_instance(np.random.default_rng(seed), size)
    flipped = Population(inst.probs, 1 - inst.pi1, inst.mu1, inst.mu0, inst.y_min, inst.y_max)
    lo, hi = plug_in_bounds(inst.population(), eps, delta)
    lo_f, hi_f = plug_in_bounds(flipped, eps, delta)
    assert hi_f == pytest.approx(-lo, abs=1e-12)
    assert lo_f == pytest.approx(-hi, abs=1e-12)


@given(seed=inst_seed, m=st.integers(1, 12), k=st.integers(0, 12), delta=st.floats(0, 1))
def test_tail_mean_width_on_mass_boundaries(seed, m, k, delta):
    rng = np.random.default_rng(seed)
    k = min(k, m)
    # equal masses and distinct g, so eps = k/m is a boundary for both tails
    g = rng.permutation(np.arange(m)) / m + rng.uniform(0, 1e-3)
    p = np.full(m, 1.0 / m)
    eps = k / m
    span = float(rng.uniform(0.5, 3))
    direct = eps * delta * span + upper_tail_mass_mean(p, g, eps) - lower_tail_mass_mean(p, g, eps)
    assert tail_mean_width(p, g, eps, delta, span) == pytest.approx(direct, abs=1e-12)
