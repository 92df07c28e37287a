import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import wasserstein_distance

from riesz_lab import (
    Circle,
    DiscreteMeasure,
    ExpressionField,
    GibbsSpec,
    MeasureBall,
    PointCloud,
    RieszKernel,
    empirical_measure,
    j_functional_estimate,
    ldp_scan,
    measure_distance,
    partition_function_quadrature,
    rate_function,
    solve_equilibrium,
)
from riesz_lab.ldp import projection_directions, scan_to_csv

K1 = RieszKernel(1.0, 3)
A, B = [0.0, 0, 0], [1.0, 2, 0]


def test_empirical_examples():
    mu = empirical_measure([A, B])
    assert mu.weights.tolist() == [0.5, 0.5]
    mu = empirical_measure([A, A, B])
    assert np.array_equal(mu.support, [A, B])
    assert np.allclose(mu.weights, [2 / 3, 1 / 3], rtol=0, atol=1e-16)
    assert empirical_measure(np.random.default_rng(0).normal(size=(9, 3))).mass == pytest.approx(1.0, abs=1e-15)


def test_distance_examples():
    mu = DiscreteMeasure([A], [1.0])
    assert measure_distance(mu, mu) == 0.0
    delta = np.array([0.3, -0.4, 1.2])
    nu = DiscreteMeasure([delta], [1.0])
    U = projection_directions(3)
    d = measure_distance(mu, nu)
    assert d == pytest.approx(np.abs(U @ delta).mean(), rel=1e-12)
    assert d <= np.linalg.norm(delta)


@given(st.integers(0, 2**32 - 1))
def test_collinear_against_exact_1d_transport(seed):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=6), rng.normal(size=4)
    wx, wy = rng.uniform(0.1, 1, 6), rng.uniform(0.1, 1, 4)
    line = lambda t: np.column_stack([t, np.zeros_like(t), np.zeros_like(t)])
    mu, nu = DiscreteMeasure(line(x), wx), DiscreteMeasure(line(y), wy)
    exact = wasserstein_distance(x, y, wx, wy)
    aligned = measure_distance(mu, nu, directions=np.array([[1.0, 0, 0], [-1.0, 0, 0]]))
    assert aligned == pytest.approx(exact, rel=1e-12, abs=1e-14)
    # default directions: the line's transport cost scaled by the mean |cos| to the line
    sliced = measure_distance(mu, nu)
    factor = np.abs(projection_directions(3)[:, 0]).mean()
    assert sliced == pytest.approx(factor * exact, rel=1e-12, abs=1e-14)
    assert exact / 2 <= sliced <= 2 * exact


def _random_measure(rng):
    k = int(rng.integers(1, 7))
    return DiscreteMeasure(rng.normal(size=(k, 3)), rng.uniform(0.1, 1, k))


@given(st.integers(0, 2**32 - 1))
def test_pseudometric(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (_random_measure(rng) for _ in range(3))
    assert measure_distance(a, b) == measure_distance(b, a)
    assert measure_distance(a, c) <= measure_distance(a, b) + measure_distance(b, c) + 1e-12


@given(st.integers(0, 2**32 - 1), st.integers(2, 9))
def test_config_distances_match_cdf_formula(seed, n):
    # two routes: quantile integral over configurations versus CDF integral per measure
    rng = np.random.default_rng(seed)
    center = _random_measure(rng)
    ball = MeasureBall(center, 1.0, directions=16, seed=3)
    configs = rng.normal(size=(5, n, 3))
    configs[0, 1] = configs[0, 0]  # a repeated point
    fast = ball.config_distances(configs)
    slow = [measure_distance(empirical_measure(c), center, 16, 3) for c in configs]
    assert np.allclose(fast, slow, rtol=1e-12, atol=1e-13)


def two_point():
    base = DiscreteMeasure([[0.0, 0, 0], [1.0, 0, 0]], [0.5, 0.5])
    return GibbsSpec(PointCloud(base.support), base, K1, None, 2)


def test_full_space_equals_log_z():
    est = j_functional_estimate(None, two_point(), samples=100)
    assert est.method == "enumerate"
    assert est.log_j == pytest.approx((-2 - math.log(2)) / 4, abs=1e-15)
    assert est.log_sigma == 0.0


@pytest.fixture(scope="module")
def circle_problem():
    mesh = Circle().mesh(60)
    k = RieszKernel(0.5, 3)
    eq = solve_equilibrium(mesh, k, gap_tol=1e-10)
    base = DiscreteMeasure.from_mesh(mesh, normalize=True)
    half = np.where(mesh.points[:, 1] >= 0, 1.0, 0.0)
    mu2 = DiscreteMeasure(mesh.points, half / half.sum())
    spec = GibbsSpec(Circle(), base, k, None, 8)
    return mesh, eq, mu2, spec


def test_full_space_monte_carlo_matches_quadrature():
    mesh = Circle().mesh(40)
    base = DiscreteMeasure.from_mesh(mesh, normalize=True)
    spec = GibbsSpec(Circle(), base, K1, None, 3)
    exact = partition_function_quadrature(spec) / 9
    est = j_functional_estimate(None, spec, samples=50000, method="importance", seed=2)
    assert abs(est.log_j - exact) < 0.01


def test_ball_ordering_at_n8(circle_problem):
    mesh, eq, mu2, spec = circle_problem
    r = 0.15
    j1 = j_functional_estimate(MeasureBall(eq.measure, r), spec, samples=20000, proposal_centers=[eq.measure, mu2])
    j2 = j_functional_estimate(MeasureBall(mu2, r), spec, samples=20000, proposal_centers=[eq.measure, mu2])
    assert rate_function(eq.measure, eq) < rate_function(mu2, eq)
    assert j1.hit_count > 0 and j2.hit_count > 0
    assert j1.log_j >= j2.log_j


def test_tiny_ball_is_flagged(circle_problem):
    _, eq, _, spec = circle_problem
    est = j_functional_estimate(MeasureBall(eq.measure, 1e-9), spec, samples=1000)
    assert est.flagged and est.hit_count == 0 and est.log_j == -math.inf
    with pytest.raises(ValueError):
        MeasureBall(eq.measure, 0.0)
    with pytest.raises(ValueError):
        j_functional_estimate(None, spec, samples=10)


def test_rate_examples(circle_problem):
    mesh, eq, mu2, _ = circle_problem
    assert abs(rate_function(eq.measure, eq)) <= 10 * eq.gap_tol
    x = mesh.points[5]
    single = DiscreteMeasure([x], [1.0])
    Q = ExpressionField("x1", 3)
    eqQ = solve_equilibrium(mesh, RieszKernel(0.5, 3), Q, gap_tol=1e-10)
    excl = rate_function(single, eqQ, diagonal="exclude")
    assert excl == pytest.approx(2 * x[0] - eqQ.value, abs=1e-12)
    M = 40.0
    trunc = rate_function(single, eqQ, kernel=RieszKernel(0.5, 3, M), diagonal="truncate")
    assert trunc == pytest.approx(M - eqQ.value + 2 * x[0], abs=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_rate_nonnegative(seed):
    mesh = Circle().mesh(30)
    eq = _eq30()
    rng = np.random.default_rng(seed)
    mu = DiscreteMeasure(mesh.points, rng.dirichlet(np.full(30, 0.3)))
    assert rate_function(mu, eq) >= -10 * eq.gap_tol


_CACHE = {}


def _eq30():
    if "eq" not in _CACHE:
        _CACHE["eq"] = solve_equilibrium(Circle().mesh(30), RieszKernel(0.5, 3), ExpressionField("x2^2", 3), gap_tol=1e-11)
    return _CACHE["eq"]


@given(st.floats(-1, 1))
def test_constant_shift_covariance(c):
    mesh = Circle().mesh(20)
    base = DiscreteMeasure.from_mesh(mesh, normalize=True)
    Q = ExpressionField("x1", 3)
    spec = GibbsSpec(Circle(), base, K1, Q, 3)
    ball = MeasureBall(base, 0.3)
    j0 = j_functional_estimate(ball, spec, samples=500, seed=1, method="importance")
    j1 = j_functional_estimate(ball, spec.with_field(Q.shifted(c)), samples=500, seed=1, method="importance")
    assert j1.log_j - j0.log_j == pytest.approx(-2 * c, abs=1e-10)
    eq0 = solve_equilibrium(mesh, K1, Q, gap_tol=1e-11)
    eq1 = solve_equilibrium(mesh, K1, Q.shifted(c), gap_tol=1e-11)
    mu = DiscreteMeasure(mesh.points, np.linspace(1, 2, 20) / np.linspace(1, 2, 20).sum())
    assert rate_function(mu, eq1) == pytest.approx(rate_function(mu, eq0), abs=1e-9)


def test_scan_full_space_and_csv(circle_problem):
    _, eq, mu2, spec = circle_problem
    reps = ldp_scan([eq.measure, mu2], math.inf, spec, n_list=(4, 8), samples=2000, equilibrium=eq)
    for rep in reps:
        for n, value, hits, flagged in rep.per_n:
            assert value == 0.0 and math.copysign(1, value) == 1 and not flagged
    text = scan_to_csv(reps)
    assert text.splitlines()[0] == "center_id,n,neg_log_mass_over_n2,rate"
    assert "-0.0" not in text


def test_scan_equilibrium_ball_concentrates(circle_problem):
    _, eq, mu2, spec = circle_problem
    reps = ldp_scan([eq.measure], 0.12, spec, n_list=(8, 12, 16), samples=20000, equilibrium=eq)
    vals = [v for _, v, _, _ in reps[0].per_n]
    assert vals[-1] < vals[0] and vals[-1] < 1e-3
