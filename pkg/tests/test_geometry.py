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
    Mesh,
    PointCloud,
    Sphere,
    Union,
    box_counting_dimension,
    cantor_set,
    covering_radius,
    generate_mesh,
    local_dimension,
    project,
)

coords = st.floats(-5, 5, allow_nan=False)
point3 = arrays(float, 3, elements=coords)


def test_sphere_mesh_weights_sum_to_area():
    mesh = generate_mesh(Sphere(), 500)
    assert len(mesh) == 500
    assert abs(mesh.total_mass - 4 * math.pi) < 1e-9
    assert np.all(Sphere().distance(mesh.points) < 1e-12)


def test_circle_mesh_equal_weights():
    mesh = generate_mesh(Circle(), 100)
    assert np.allclose(mesh.cell_weights, 2 * math.pi / 100, rtol=0, atol=1e-15)
    assert np.all(np.abs(mesh.points[:, 2]) == 0)


def test_point_cloud_mesh_is_identity(rng):
    pts = rng.normal(size=(7, 3))
    mesh = generate_mesh(PointCloud(pts), 10)
    assert np.array_equal(mesh.points, pts)
    assert np.array_equal(mesh.cell_weights, np.ones(7))


def test_mesh_spacing_matches_nearest_neighbour_gap():
    mesh = generate_mesh(Sphere(), 800)
    d = np.linalg.norm(mesh.points[:, None] - mesh.points[None], axis=-1)
    np.fill_diagonal(d, np.inf)
    gap = d.min(axis=1).max()
    assert gap / 2 <= mesh.spacing <= 2 * gap


def test_higher_dimensional_sphere_and_box_masses():
    s4 = Sphere((0, 0, 0, 0), 2.0)
    mesh = s4.mesh(300)
    assert abs(mesh.total_mass - 2 * math.pi**2 * 8) < 1e-9
    assert np.all(s4.distance(mesh.points) < 1e-12)
    face = Box((0, 0, 0), (2, 3, 0))
    assert abs(face.mesh(10).total_mass - 6.0) < 1e-12


def test_rejects_low_dimension_and_bad_resolution():
    with pytest.raises(ValueError):
        Sphere((0, 0))
    with pytest.raises(ValueError):
        Sphere().mesh(1)
    with pytest.raises(TypeError):
        generate_mesh("sphere", 10)


def test_project_examples():
    assert np.allclose(project(Sphere(), [2, 0, 0]), [1, 0, 0])
    on = np.array([0.0, 0.6, 0.8])
    assert np.array_equal(project(Sphere(), on), on)
    box = Box((0, 0, 0), (1, 1, 0))
    assert np.array_equal(project(box, [2, -1, 3]), [1, 0, 0])


@pytest.mark.parametrize(
    "kset",
    [
        Sphere(),
        Circle((1, 0, 0), 2.0, (1, 2)),
        Box((0, 0, 0), (1, 2, 0)),
        PointCloud(np.random.default_rng(0).normal(size=(30, 3))),
        Union((Sphere(), Sphere((5, 0, 0), 0.5))),
    ],
)
@given(y=point3)
def test_project_idempotent_and_on_set(kset, y):
    p = kset.project(y[None])
    assert np.array_equal(kset.project(p), p)
    assert kset.distance(p)[0] < 1e-9
    # nearest point: no mesh point is closer than the projection
    mesh = kset.mesh(64)
    assert np.linalg.norm(y - p[0]) <= np.linalg.norm(mesh.points - y, axis=1).min() + 1e-9


def test_covering_radius_examples():
    square = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]], float)
    r = covering_radius(square, 1)
    opt = math.sqrt(2) / 2
    assert opt <= r + 1e-12 and r <= 2 * opt + 1e-12
    mesh = Sphere().mesh(50)
    assert covering_radius(mesh, 50) == 0.0
    assert covering_radius(mesh, 60) == 0.0


def test_covering_radius_against_exhaustive_centres():
    mesh = Circle().mesh(24)
    pts = mesh.points
    D = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
    for n in (1, 2, 3):
        best = min(D[list(c)].min(axis=0).max() for c in itertools.combinations(range(24), n))
        greedy = covering_radius(mesh, n)
        assert best - 1e-12 <= greedy <= 2 * best + 1e-12
    # two antipodal centres: chord sqrt(2) to the quarter points
    best2 = min(D[list(c)].min(axis=0).max() for c in itertools.combinations(range(24), 2))
    assert abs(best2 - math.sqrt(2)) < 1e-12


@given(st.integers(1, 40))
def test_covering_radius_monotone(n):
    mesh = Sphere().mesh(120)
    assert covering_radius(mesh, n + 1) <= covering_radius(mesh, n) + 1e-12


def test_box_dimension_sphere_and_cantor():
    dense = Sphere().mesh(200000)
    assert abs(box_counting_dimension(dense, [0.2, 0.01]).dimension - 2) < 0.15
    cantor = cantor_set(9)
    est = box_counting_dimension(cantor, [0.1, 1e-4]).dimension
    assert abs(est - math.log(2) / math.log(3)) < 0.05
    single = np.zeros((1, 3))
    assert box_counting_dimension(single, [1.0, 0.01]).dimension == 0.0


def test_box_dimension_bad_ranges():
    pts = Sphere().mesh(100).points
    with pytest.raises(ValueError):
        box_counting_dimension(pts, [0.1, 0.05])
    with pytest.raises(ValueError):
        box_counting_dimension(pts, [0.01, 0.2])


def test_box_dimension_union_at_least_components():
    a = Sphere().mesh(20000).points
    b = cantor_set(9) + np.array([4.0, 0, 0])
    da = box_counting_dimension(a, [0.2, 0.01]).dimension
    db = box_counting_dimension(b, [0.2, 0.01]).dimension
    du = box_counting_dimension(np.vstack([a, b]), [0.2, 0.01]).dimension
    assert du >= max(da, db) - 0.05


def test_local_dimension_examples():
    mesh = Sphere().mesh(100000)
    x = mesh.points[0]
    ld = local_dimension(mesh, x, [0.8, 0.6, 0.4])
    assert abs(ld.dimension - 2) < 0.2
    seg = Box((0, 0, 0), (1, 0, 0)).mesh(100000)
    ls = local_dimension(seg, [0.5, 0, 0], [0.4, 0.2])
    assert abs(ls.dimension - 1) < 0.15
    union_pts = np.vstack([Sphere().mesh(500).points, [[5.0, 0, 0]]])
    iso = local_dimension(union_pts, [5.0, 0, 0], [0.5, 0.1])
    assert iso.dimension == 0.0


def test_local_dimension_too_few_points():
    with pytest.raises(ValueError, match="points"):
        local_dimension(Sphere().mesh(200), [0, 0, 1.0], [0.05, 0.01])


def test_union_overlap_flagged():
    u = Union((Sphere(), Sphere((1.5, 0, 0))))
    assert u.overlapping_pairs() == [(0, 1)]
    assert Union((Sphere(), Sphere((5, 0, 0)))).overlapping_pairs() == []


def test_mesh_is_read_only():
    mesh = Sphere().mesh(10)
    with pytest.raises(ValueError):
        mesh.points[0, 0] = 3.0
    assert isinstance(mesh, Mesh)


@given(st.integers(0, 2**31 - 1))
def test_samples_lie_on_sets(seed):
    rng = np.random.default_rng(seed)
    for kset in (Sphere(), Circle(), Box((0, 0, 0), (1, 1, 1)), Union((Sphere(), Circle((4, 0, 0))))):
        assert np.all(kset.distance(kset.sample(20, rng)) < 1e-12)
