import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from riesz_lab import (
    Box,
    Circle,
    Configuration,
    DiscreteMeasure,
    ExpressionField,
    RieszKernel,
    Sphere,
    energy,
    log_vdm,
    normalized_energy,
    optimize_fekete,
    solve_equilibrium,
    transfinite_diameter_sequence,
)
from riesz_lab.fekete import fekete_empirical_convergence, grad_L, sequence_to_csv
from riesz_lab.ldp import empirical_measure

K1 = RieszKernel(1.0, 3)
PAIR = np.array([[0.0, 0, 0], [1.0, 0, 0]])
TRIANGLE = np.array([[0, 0, 0], [1, 0, 0], [0.5, math.sqrt(3) / 2, 0]])


def test_log_vdm_examples():
    assert log_vdm(PAIR, K1) == -2.0
    c = 0.3
    assert log_vdm(PAIR, K1, c) == pytest.approx(-2 - 8 * c, abs=1e-14)
    assert log_vdm(TRIANGLE, K1) == pytest.approx(-6.0, abs=1e-14)
    assert log_vdm(np.zeros((2, 3)), K1) == -math.inf


def test_normalized_energy_examples(rng):
    assert normalized_energy(PAIR, K1) == 1.0
    assert normalized_energy(PAIR, K1, 0.25) == pytest.approx(2.0, abs=1e-15)
    X = rng.normal(size=(10, 3))
    Q = ExpressionField("x1^2 - x3", 3)
    n = 10
    mu = empirical_measure(X)
    rhs = energy(K1, mu, "exclude") * n / (n - 1) + 2.0 / (n - 1) * float(Q(X).sum())
    assert abs(normalized_energy(X, K1, Q) - rhs) < 1e-12


configs = st.integers(2, 9).flatmap(lambda n: arrays(float, (n, 3), elements=st.floats(-2, 2, allow_nan=False)))


def _separated(X, eps=1e-2):
    D = np.linalg.norm(X[:, None] - X[None], axis=-1)
    np.fill_diagonal(D, np.inf)
    return D.min() > eps


@given(configs, st.randoms(use_true_random=False))
def test_log_vdm_permutation_symmetric(X, rnd):
    perm = list(range(len(X)))
    rnd.shuffle(perm)
    Q = ExpressionField("x1*x2 + norm()", 3)
    assert log_vdm(X[perm], K1, Q) == pytest.approx(log_vdm(X, K1, Q), rel=1e-14, abs=1e-14)


@given(configs, st.floats(0.3, 2.5))
def test_gradient_matches_central_differences(X, alpha):
    if not _separated(X, 0.05):
        return
    k = RieszKernel(alpha, 3)
    Q = ExpressionField("x1^2 + 0.5*x3", 3)
    G = grad_L(X, k, Q)
    h = 1e-5
    fd = np.zeros_like(X)
    for i in range(len(X)):
        for a in range(3):
            E = np.zeros_like(X)
            E[i, a] = h
            fd[i, a] = (log_vdm(X - E, k, Q) - log_vdm(X + E, k, Q)) / (2 * h)
    scale = np.abs(G).max()
    assert np.abs(fd - G).max() <= 1e-6 * max(scale, 1.0)


def test_two_points_on_sphere_are_antipodal():
    res = optimize_fekete(Sphere(), K1, n=2, restarts=3, seed=1)
    assert res.d_n == pytest.approx(0.5, abs=1e-9)
    assert res.log_vdm == pytest.approx(-1.0, abs=1e-9)


def test_two_points_reach_diameter():
    box = Box((0, 0, 0), (1, 2, 0))
    res = optimize_fekete(box, RieszKernel(0.5, 3), n=2, restarts=3)
    assert res.d_n == pytest.approx(math.sqrt(5) ** -0.5, abs=1e-9)


def test_tetrahedron():
    res = optimize_fekete(Sphere(), K1, n=4, restarts=6, seed=0)
    assert abs(res.d_n - math.sqrt(3 / 8)) < 1e-6
    X = res.config.points
    D = np.linalg.norm(X[:, None] - X[None], axis=-1)[np.triu_indices(4, 1)]
    assert np.allclose(D, math.sqrt(8 / 3), atol=1e-4)


@given(st.integers(0, 10**6))
def test_any_configuration_is_no_better_than_optimum(seed):
    res = optimize_fekete(Sphere(), K1, n=5, restarts=4, seed=3)
    X = Sphere().sample(5, np.random.default_rng(seed))
    assert normalized_energy(X, K1) >= res.d_n - 1e-9


def test_discrete_fekete_monotone_by_exhaustive_search():
    # D_n over a finite set is nondecreasing in n; exhaustive over a 30-point circle mesh
    mesh = Circle().mesh(30)
    P = mesh.points
    Q = ExpressionField("0.3*x1", 3)
    best = {}
    for n in (2, 3):
        best[n] = min(normalized_energy(P[list(c)], K1, Q) for c in itertools.combinations(range(30), n))
    assert best[2] <= best[3] + 1e-12
    seq, _ = transfinite_diameter_sequence(Circle(), K1, Q, (2, 3), restarts=4)
    # the continuum optimizer can only do better than the mesh search
    assert seq[0][2] <= best[2] + 1e-9
    assert seq[1][2] <= best[3] + 1e-9
    assert seq[0][2] <= seq[1][2] + 1e-3


def test_sequence_csv():
    rows = [(2, -0.25, 0.5), (4, -0.459, 0.61)]
    text = sequence_to_csv(rows)
    assert text.splitlines()[0] == "n,log_delta_n,d_n"
    assert text.splitlines()[1] == "2,-0.25,0.5"
    with pytest.raises(ValueError):
        transfinite_diameter_sequence(Sphere(), K1, None, (4, 2))


def test_confining_field_clusters_points():
    Q = ExpressionField("5*dist(0,0,1)^2", 3)
    res = optimize_fekete(Sphere(), K1, Q, n=12, restarts=3, seed=2)
    assert np.all(res.config.points[:, 2] > 0.3)


def test_mesh_sized_fekete_matches_uniform_equilibrium():
    # K = the mesh itself: n = mesh size forces every point, matching the uniform measure
    from riesz_lab import PointCloud

    mesh = Circle().mesh(6)
    eq = solve_equilibrium(mesh, K1, gap_tol=1e-12)
    rows = fekete_empirical_convergence(PointCloud(mesh.points), K1, None, [6], eq, restarts=2)
    assert rows[0][1] < 1e-12


def test_fekete_json_record():
    res = optimize_fekete(Sphere(), K1, n=3, restarts=2)
    rec = res.to_record()
    assert rec["n"] == 3 and "global optimality not certified" in rec["note"]
    assert len(rec["restart_d_n"]) == 2
    with pytest.raises(ValueError):
        Configuration([[0, 0, 0]])
