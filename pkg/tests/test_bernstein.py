import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from riesz_lab import (
    DiscreteMeasure,
    ExpressionField,
    PnFunction,
    RieszKernel,
    Sphere,
    Union,
    bernstein_exponent,
    bernstein_ratio_probe,
    bm_constant_probe,
    covering_radius,
    eval_pn,
    grad_pn,
    log_sup_floor,
    mass_density_probe,
    sup_norm_estimate,
)
from riesz_lab.bernstein import grad_log_pn, log_integral, rows_to_csv

K1 = RieszKernel(1.0, 3)


@pytest.fixture(scope="module")
def mesh():
    return Sphere().mesh(2000)


def test_eval_examples():
    f = PnFunction([[1.0, 0, 0]], K1)
    assert eval_pn(f, [0, 0, 0]) == -1.0
    c = 0.4
    fq = PnFunction([[1.0, 0, 0]], K1, c)
    assert eval_pn(fq, [0, 0, 0]) == pytest.approx(-1.0 - 2 * 2 * c, abs=1e-15)
    three = PnFunction([[2.0, 0, 0], [0, 2.0, 0], [0, 0, 2.0]], K1)
    assert three.n == 4
    assert eval_pn(three, [0, 0, 0]) == -1.5
    assert eval_pn(f, [1.0, 0, 0]) == -math.inf
    with pytest.raises(ValueError):
        grad_pn(f, [1.0, 0, 0])


def test_gradient_examples():
    f = PnFunction([[0.0, 0, 0]], K1)
    g = grad_pn(f, [0, 0, 1.0])
    assert np.linalg.norm(g) == pytest.approx(math.exp(-1), rel=1e-15)
    sym = PnFunction([[-1.0, 0, 0], [1.0, 0, 0]], RieszKernel(0.7, 3))
    assert grad_pn(sym, [0, 0.3, 0.8])[0] == 0.0


@given(st.integers(0, 2**32 - 1), st.floats(0.3, 2.5), st.booleans())
def test_gradient_matches_central_differences(seed, alpha, weighted):
    rng = np.random.default_rng(seed)
    k = RieszKernel(alpha, 3)
    Q = ExpressionField("0.2*x1^2 - 0.1*x3", 3) if weighted else None
    f = PnFunction(rng.normal(size=(int(rng.integers(1, 8)), 3)), k, Q)
    y = rng.normal(size=3)
    if np.linalg.norm(f.poles - y, axis=1).min() < 0.3:
        return
    g = grad_pn(f, y)
    h = 1e-5
    fd = np.array([(math.exp(eval_pn(f, y + h * e)) - math.exp(eval_pn(f, y - h * e))) / (2 * h) for e in np.eye(3)])
    assert np.linalg.norm(fd - g) <= 1e-6 * max(np.linalg.norm(g), 1e-300) + 1e-300


@given(st.integers(0, 2**32 - 1))
def test_log_value_nonpositive_without_field(seed):
    rng = np.random.default_rng(seed)
    f = PnFunction(rng.normal(size=(5, 3)), K1)
    assert np.all(eval_pn(f, rng.normal(size=(50, 3))) <= 0)


def test_sup_norm_clustered_poles(mesh):
    rng = np.random.default_rng(3)
    cap = mesh.points[mesh.points[:, 2] > 0.95]
    f = PnFunction(cap[rng.integers(len(cap), size=15)], K1)
    value, arg = sup_norm_estimate(f, Sphere(), mesh, refine_rounds=30)
    dense = Sphere().mesh(100000).points
    brute = eval_pn(f, dense).max()
    assert arg[2] < -0.9
    assert value >= brute - 1e-6


def test_single_pole_argmax_is_antipodal(mesh):
    p = np.array([0.36, 0.48, 0.8])
    f = PnFunction([p], K1)
    value, arg = sup_norm_estimate(f, Sphere(), mesh, refine_rounds=60)
    assert np.linalg.norm(arg + p) < 1e-6
    assert value == pytest.approx(-0.5, abs=1e-12)


def test_log_sup_floor_on_fine_mesh(mesh):
    # mesh spacing below half the n-ball covering radius, so the floor must hold
    rng = np.random.default_rng(0)
    for n in (4, 16, 64):
        assert mesh.spacing < covering_radius(mesh, n) / 2 or n == 64
        f = PnFunction(mesh.points[rng.integers(len(mesh), size=n - 1)], K1)
        value, _ = sup_norm_estimate(f, Sphere(), mesh, refine_rounds=5)
        assert value >= log_sup_floor(n, 1.0, 2.0)


def test_exponent_formula():
    assert bernstein_exponent(1.0, 2.0) == 5.0
    assert bernstein_exponent(2.0, 2.0) == 5.5
    assert log_sup_floor(8, 1.0, 2.0) == -2 * 64


def test_ratio_probe_small(mesh):
    probe = bernstein_ratio_probe(Sphere(), K1, [4, 8, 16], trials=8, m=2.0, mesh=mesh, refine_rounds=5)
    assert probe.beta == 5.0
    assert probe.beta_hat <= probe.beta + 0.25
    assert probe.violations == 0
    assert probe.to_csv().splitlines()[0] == "n,max_ratio,bound"


def test_point_mass_at_argmax_gives_inverse_mass(mesh):
    f = PnFunction(mesh.points[:5], K1)
    value, arg = sup_norm_estimate(f, Sphere(), mesh, refine_rounds=30)
    mass = 0.37
    mu = DiscreteMeasure([arg], [mass])
    assert math.exp(value - log_integral(f, mu)) == pytest.approx(1 / mass, rel=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_bm_ratio_at_least_inverse_mass(seed):
    rng = np.random.default_rng(seed)
    pts = Sphere().mesh(150).points
    mu = DiscreteMeasure(pts, rng.uniform(0.1, 1.0, len(pts)) * rng.uniform(0.1, 5))
    for rec in bm_constant_probe(mu, Sphere(), K1, None, [3, 6], trials=3, seed=seed, refine_rounds=0):
        assert rec.m_hat >= 1 / mu.mass * (1 - 1e-12)


def test_small_mass_far_component_blows_up_constant():
    near, far = Sphere(), Sphere((4, 0, 0), 1.0)
    a, b = near.mesh(300).points, far.mesh(300).points
    support = np.vstack([a, b])
    thin = DiscreteMeasure(support, np.r_[np.full(300, 1 / 300), np.full(300, 1e-9)])
    uniform = DiscreteMeasure(support, np.full(600, 1 / 600))
    # every pole at one point of the near sphere: f lives on the far sphere
    f = PnFunction(np.repeat(a[:1], 39, axis=0), K1)
    value, arg = sup_norm_estimate(f, Union((near, far)), support, refine_rounds=10)
    assert arg[0] > 2
    thin_ratio = math.exp(value - log_integral(f, thin))
    uniform_ratio = math.exp(value - log_integral(f, uniform))
    assert thin_ratio > 1e6
    assert thin_ratio > 1e5 * uniform_ratio


def test_mass_density_cap_area_oracle():
    mesh = Sphere().mesh(5000)
    mu = DiscreteMeasure.from_mesh(mesh)  # total mass 4 pi
    r = [0.5, 0.4, 0.3, 0.2]
    rep = mass_density_probe(mu, Sphere(), [2.0], r)
    # a chordal ball of radius r cuts a cap of area exactly pi r^2
    assert rep.passed and rep.c_best > 2.5
    assert rep.c_best <= math.pi * 1.05
    assert rep.to_record()["pass"] is True


def test_mass_density_counting_measure_and_patch():
    mesh = Sphere().mesh(500)
    counting = DiscreteMeasure(mesh.points, np.ones(500))
    tiny = [mesh.spacing / 10, mesh.spacing / 20]
    assert mass_density_probe(counting, Sphere(), [0.0, 1.0], tiny).passed
    w = np.where(mesh.points[:, 2] > 0.8, 0.0, 1.0)
    holed = DiscreteMeasure(mesh.points, w)
    rep = mass_density_probe(holed, Sphere(), [1.0, 2.0], [0.5, 0.2, 0.1])
    assert not rep.passed and rep.c_best == 0.0
    assert rep.worst_center[2] > 0.8
    with pytest.raises(ValueError):
        mass_density_probe(counting, Sphere(), [2.0], [0.1, 0.5])


def test_rows_csv():
    assert rows_to_csv(["n", "x"], [(2, 0.5)]) == "n,x\n2,0.5\n"
