"""Compact sets in R^d, quasi-uniform meshes, and covering/dimension estimates.

Every set lives in ambient coordinates of R^d with d >= 3.  A set knows how
to measure the distance to itself, project onto itself, sample its natural
reference measure and build a mesh whose weights discretize that measure.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import qmc

__all__ = [
    "CompactSet",
    "Sphere",
    "Circle",
    "Box",
    "PointCloud",
    "Union",
    "Mesh",
    "generate_mesh",
    "project",
    "covering_radius",
    "box_counting_dimension",
    "local_dimension",
    "cantor_set",
    "BoxDimension",
    "LocalDimension",
]

GEOMETRY_TOL = 1e-12
_GOLDEN = (1.0 + 5.0**0.5) / 2.0


def _as_points(x, d=None) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    if d is not None and pts.shape[1] != d:
        raise ValueError(f"expected points in R^{d}, got shape {pts.shape}")
    return pts


def _check_dim(d: int) -> int:
    d = int(d)
    if d <= 2:
        raise ValueError(f"ambient dimension must exceed 2, got {d}")
    return d


def _nn_spacing(points: np.ndarray) -> float:
    if len(points) < 2:
        return 1.0
    dist, _ = cKDTree(points).query(points, k=2)
    return float(dist[:, 1].max())


@dataclass(frozen=True)
class Mesh:
    """Points on K with reference-measure mass per point.

    ``spacing`` is the largest nearest-neighbour gap.  Arrays are made
    read-only so a mesh can be shared freely.
    """

    points: np.ndarray
    cell_weights: np.ndarray
    spacing: float

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        w = np.array(self.cell_weights, dtype=float)
        if pts.ndim != 2 or len(pts) != len(w):
            raise ValueError("points must be (N, d) with one weight per point")
        if np.any(w < 0):
            raise ValueError("cell weights must be nonnegative")
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "cell_weights", w)
        object.__setattr__(self, "spacing", float(self.spacing))

    @classmethod
    def from_points(cls, points, weights=None) -> "Mesh":
        pts = _as_points(points)
        w = np.ones(len(pts)) if weights is None else np.asarray(weights, dtype=float)
        return cls(pts, w, _nn_spacing(pts))

    def __len__(self) -> int:
        return len(self.points)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def total_mass(self) -> float:
        return float(self.cell_weights.sum())

    def normalized_weights(self) -> np.ndarray:
        return self.cell_weights / self.cell_weights.sum()


class CompactSet:
    """Base class; concrete kinds implement the geometric primitives."""

    ambient_dim: int

    def distance(self, points) -> np.ndarray:
        raise NotImplementedError

    def project(self, points) -> np.ndarray:
        raise NotImplementedError

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        """Independent draws from the normalized reference measure."""
        raise NotImplementedError

    def mesh(self, resolution: int) -> Mesh:
        raise NotImplementedError

    @property
    def reference_mass(self) -> float:
        raise NotImplementedError

    @property
    def diameter(self) -> float:
        raise NotImplementedError

    def contains(self, points, tol: float = GEOMETRY_TOL) -> np.ndarray:
        return self.distance(points) <= tol

    def reflect_step(self, points, steps) -> np.ndarray:
        """Move ``points`` by ``steps`` and bring the result back onto K.

        The default is nearest-point projection, which is a symmetric
        proposal for the rotation-invariant kinds.  ``Box`` overrides it
        with reflection at the faces.
        """
        return self.project(np.asarray(points) + steps)


@dataclass(frozen=True)
class Sphere(CompactSet):
    """The round sphere S^{d-1}(center, radius) in R^d."""

    center: Sequence[float] = (0.0, 0.0, 0.0)
    radius: float = 1.0

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float)
        object.__setattr__(self, "center", tuple(c.tolist()))
        object.__setattr__(self, "ambient_dim", _check_dim(len(c)))
        if self.radius <= 0:
            raise ValueError("sphere radius must be positive")

    @property
    def _c(self):
        return np.asarray(self.center)

    def distance(self, points):
        pts = _as_points(points, self.ambient_dim)
        return np.abs(np.linalg.norm(pts - self._c, axis=1) - self.radius)

    def project(self, points):
        pts = _as_points(points, self.ambient_dim)
        v = pts - self._c
        r = np.linalg.norm(v, axis=1, keepdims=True)
        # the center projects to an arbitrary (fixed) pole
        pole = np.zeros(self.ambient_dim)
        pole[-1] = 1.0
        v = np.where(r > 0, v / np.where(r > 0, r, 1.0), pole)
        out = self._c + self.radius * v
        # points already on the set (within tolerance) are fixed, so projection is idempotent
        on = np.abs(r[:, 0] - self.radius) <= GEOMETRY_TOL
        out[on] = pts[on]
        return out

    def sample(self, size, rng):
        g = rng.standard_normal((size, self.ambient_dim))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        return self._c + self.radius * g

    @property
    def reference_mass(self):
        d = self.ambient_dim
        return 2.0 * math.pi ** (d / 2) / math.gamma(d / 2) * self.radius ** (d - 1)

    @property
    def diameter(self):
        return 2.0 * self.radius

    def mesh(self, resolution):
        n = int(resolution)
        if n < 2:
            raise ValueError("resolution must be at least 2")
        d = self.ambient_dim
        if d == 3:
            i = np.arange(n) + 0.5
            polar = np.arccos(1.0 - 2.0 * i / n)
            azim = 2.0 * math.pi * i / _GOLDEN
            unit = np.column_stack(
                (np.cos(azim) * np.sin(polar), np.sin(azim) * np.sin(polar), np.cos(polar))
            )
        else:
            # scrambled Sobol pushed through the Gaussian quantile, then normalized
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", UserWarning)  # n need not be a power of 2
                u = qmc.Sobol(d, scramble=True, seed=0).random(n)
            from scipy.special import ndtri

            g = ndtri(np.clip(u, 1e-12, 1 - 1e-12))
            unit = g / np.linalg.norm(g, axis=1, keepdims=True)
        pts = self._c + self.radius * unit
        return Mesh(pts, np.full(n, self.reference_mass / n), _nn_spacing(pts))


@dataclass(frozen=True)
class Circle(CompactSet):
    """Circle of given radius in the coordinate plane spanned by ``plane``."""

    center: Sequence[float] = (0.0, 0.0, 0.0)
    radius: float = 1.0
    plane: tuple[int, int] = (0, 1)

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float)
        object.__setattr__(self, "center", tuple(c.tolist()))
        object.__setattr__(self, "ambient_dim", _check_dim(len(c)))
        i, j = self.plane
        if i == j or not (0 <= i < len(c) and 0 <= j < len(c)):
            raise ValueError(f"invalid coordinate plane {self.plane}")
        if self.radius <= 0:
            raise ValueError("circle radius must be positive")

    @property
    def _c(self):
        return np.asarray(self.center)

    def _embed(self, theta):
        i, j = self.plane
        pts = np.tile(self._c, (len(theta), 1))
        pts[:, i] += self.radius * np.cos(theta)
        pts[:, j] += self.radius * np.sin(theta)
        return pts

    def distance(self, points):
        pts = _as_points(points, self.ambient_dim) - self._c
        i, j = self.plane
        rho = np.hypot(pts[:, i], pts[:, j])
        mask = np.ones(self.ambient_dim, bool)
        mask[[i, j]] = False
        off = np.linalg.norm(pts[:, mask], axis=1)
        return np.hypot(rho - self.radius, off)

    def project(self, points):
        pts = _as_points(points, self.ambient_dim)
        i, j = self.plane
        rel = pts - self._c
        out = self._embed(np.arctan2(rel[:, j], rel[:, i]))
        on = self.distance(pts) <= GEOMETRY_TOL
        out[on] = pts[on]
        return out

    def sample(self, size, rng):
        return self._embed(rng.uniform(0.0, 2.0 * math.pi, size))

    @property
    def reference_mass(self):
        return 2.0 * math.pi * self.radius

    @property
    def diameter(self):
        return 2.0 * self.radius

    def mesh(self, resolution):
        n = int(resolution)
        if n < 2:
            raise ValueError("resolution must be at least 2")
        pts = self._embed(2.0 * math.pi * np.arange(n) / n)
        return Mesh(pts, np.full(n, self.reference_mass / n), _nn_spacing(pts))


@dataclass(frozen=True)
class Box(CompactSet):
    """Axis-aligned box; axes with lower == upper make it a lower-dimensional face."""

    lower: Sequence[float]
    upper: Sequence[float]

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or np.any(hi < lo):
            raise ValueError("box needs matching bounds with lower <= upper")
        object.__setattr__(self, "lower", tuple(lo.tolist()))
        object.__setattr__(self, "upper", tuple(hi.tolist()))
        object.__setattr__(self, "ambient_dim", _check_dim(len(lo)))

    @property
    def _lo(self):
        return np.asarray(self.lower)

    @property
    def _hi(self):
        return np.asarray(self.upper)

    @property
    def free_axes(self) -> np.ndarray:
        return np.flatnonzero(self._hi > self._lo)

    def distance(self, points):
        pts = _as_points(points, self.ambient_dim)
        return np.linalg.norm(pts - self.project(pts), axis=1)

    def project(self, points):
        return np.clip(_as_points(points, self.ambient_dim), self._lo, self._hi)

    def reflect_step(self, points, steps):
        lo, hi = self._lo, self._hi
        width = hi - lo
        y = np.asarray(points) + steps - lo
        safe = np.where(width > 0, width, 1.0)
        period = np.mod(y, 2.0 * safe)
        y = np.where(period > safe, 2.0 * safe - period, period)
        return np.where(width > 0, lo + y, lo)

    def sample(self, size, rng):
        return rng.uniform(self._lo, self._hi, (size, self.ambient_dim))

    @property
    def reference_mass(self):
        free = self.free_axes
        if len(free) == 0:
            return 1.0
        return float(np.prod((self._hi - self._lo)[free]))

    @property
    def diameter(self):
        return float(np.linalg.norm(self._hi - self._lo))

    def mesh(self, resolution):
        n = int(resolution)
        if n < 2:
            raise ValueError("resolution must be at least 2")
        free = self.free_axes
        if len(free) == 0:
            return Mesh(self._lo[None, :], np.ones(1), 1.0)
        axes = []
        for k in free:
            h = (self._hi[k] - self._lo[k]) / n
            axes.append(self._lo[k] + h * (np.arange(n) + 0.5))
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(free))
        pts = np.tile(self._lo, (len(grid), 1))
        pts[:, free] = grid
        return Mesh(pts, np.full(len(pts), self.reference_mass / len(pts)), _nn_spacing(pts))


@dataclass(frozen=True, eq=False)
class PointCloud(CompactSet):
    """Finite set of points carrying counting (or user-weighted) measure."""

    points: np.ndarray
    spacing: float | None = None
    weights: np.ndarray | None = None

    def __post_init__(self):
        pts = np.array(_as_points(self.points), dtype=float)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "ambient_dim", _check_dim(pts.shape[1]))
        if self.weights is not None:
            w = np.array(self.weights, dtype=float)
            if w.shape != (len(pts),) or np.any(w < 0):
                raise ValueError("point-cloud weights must be nonnegative, one per point")
            w.setflags(write=False)
            object.__setattr__(self, "weights", w)
        object.__setattr__(self, "_tree", cKDTree(pts))

    @property
    def _w(self):
        return np.ones(len(self.points)) if self.weights is None else self.weights

    def distance(self, points):
        dist, _ = self._tree.query(_as_points(points, self.ambient_dim))
        return dist

    def nearest_index(self, points):
        _, idx = self._tree.query(_as_points(points, self.ambient_dim))
        return idx

    def project(self, points):
        return self.points[self.nearest_index(points)]

    def sample(self, size, rng):
        w = self._w
        return self.points[rng.choice(len(w), size=size, p=w / w.sum())]

    @property
    def reference_mass(self):
        return float(self._w.sum())

    @property
    def diameter(self):
        pts = self.points
        if len(pts) > 2000:
            from scipy.spatial import ConvexHull

            try:
                pts = pts[ConvexHull(pts).vertices]
            except Exception:
                pass
        diffs = pts[:, None, :] - pts[None, :, :]
        return float(np.sqrt((diffs**2).sum(-1)).max())

    def mesh(self, resolution=None):
        spacing = self.spacing if self.spacing is not None else _nn_spacing(self.points)
        return Mesh(self.points, self._w, spacing)


@dataclass(frozen=True, eq=False)
class Union(CompactSet):
    """Finite union of compact sets; overlaps are allowed but can be queried."""

    components: tuple = field(default_factory=tuple)

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ValueError("union needs at least one component")
        dims = {c.ambient_dim for c in comps}
        if len(dims) != 1:
            raise ValueError("union components must share the ambient dimension")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "ambient_dim", dims.pop())

    def overlapping_pairs(self, resolution: int = 200, tol: float | None = None):
        """Index pairs of components that meet, up to ``tol``.

        The default tolerance is the coarser mesh spacing of the pair, so
        crossing surfaces are caught even though no mesh point lies exactly
        on the other component.
        """
        meshes = [c.mesh(resolution) for c in self.components]
        pairs = []
        for a in range(len(meshes)):
            for b in range(a + 1, len(meshes)):
                t = max(meshes[a].spacing, meshes[b].spacing) if tol is None else tol
                if np.any(self.components[b].distance(meshes[a].points) <= t):
                    pairs.append((a, b))
        return pairs

    def _all_distances(self, points):
        pts = _as_points(points, self.ambient_dim)
        return np.stack([c.distance(pts) for c in self.components])

    def distance(self, points):
        return self._all_distances(points).min(axis=0)

    def component_of(self, points) -> np.ndarray:
        return self._all_distances(points).argmin(axis=0)

    def project(self, points):
        pts = _as_points(points, self.ambient_dim)
        which = self.component_of(pts)
        out = np.empty_like(pts)
        for k, comp in enumerate(self.components):
            sel = which == k
            if np.any(sel):
                out[sel] = comp.project(pts[sel])
        return out

    def reflect_step(self, points, steps):
        pts = np.asarray(points, dtype=float)
        which = self.component_of(pts)
        out = np.empty_like(pts)
        for k, comp in enumerate(self.components):
            sel = which == k
            if np.any(sel):
                out[sel] = comp.reflect_step(pts[sel], np.asarray(steps)[sel])
        return out

    def sample(self, size, rng):
        masses = np.array([c.reference_mass for c in self.components])
        which = rng.choice(len(masses), size=size, p=masses / masses.sum())
        out = np.empty((size, self.ambient_dim))
        for k, comp in enumerate(self.components):
            sel = which == k
            if np.any(sel):
                out[sel] = comp.sample(int(sel.sum()), rng)
        return out

    @property
    def reference_mass(self):
        return float(sum(c.reference_mass for c in self.components))

    @property
    def diameter(self):
        pts = np.concatenate([c.mesh(64).points for c in self.components])
        diffs = pts[:, None, :] - pts[None, :, :]
        return float(np.sqrt((diffs**2).sum(-1)).max())

    def mesh(self, resolution):
        parts = [c.mesh(resolution) for c in self.components]
        pts = np.concatenate([m.points for m in parts])
        w = np.concatenate([m.cell_weights for m in parts])
        return Mesh(pts, w, _nn_spacing(pts))


def generate_mesh(set: CompactSet, resolution: int) -> Mesh:
    """Quasi-uniform mesh of ``set`` whose weights sum to its reference mass."""
    if not isinstance(set, CompactSet):
        raise TypeError(f"unsupported set kind: {type(set).__name__}")
    return set.mesh(resolution)


def project(set: CompactSet, y) -> np.ndarray:
    """Nearest point of ``set`` to ``y`` (a single point or an (N, d) array)."""
    y = np.asarray(y, dtype=float)
    out = set.project(y)
    return out[0] if y.ndim == 1 else out


def _points_of(points) -> np.ndarray:
    return points.points if isinstance(points, Mesh) else _as_points(points)


def covering_radius(points, n: int) -> float:
    """Greedy farthest-point estimate of the n-ball covering radius M_n.

    The returned radius is at most twice the optimum with centers on the mesh.
    """
    pts = _points_of(points)
    if n < 1:
        raise ValueError("n must be at least 1")
    if n >= len(pts):
        return 0.0
    centroid = pts.mean(axis=0)
    first = int(np.argmax(np.linalg.norm(pts - centroid, axis=1)))
    dist = np.linalg.norm(pts - pts[first], axis=1)
    for _ in range(n - 1):
        nxt = int(np.argmax(dist))
        dist = np.minimum(dist, np.linalg.norm(pts - pts[nxt], axis=1))
    return float(dist.max())


@dataclass(frozen=True)
class BoxDimension:
    dimension: float
    lower: float
    upper: float
    fit_log: list  # rows (delta, N_delta, used_in_fit)


def _count_boxes(pts: np.ndarray, delta: float, origin: np.ndarray) -> int:
    keys = np.floor((pts - origin) / delta).astype(np.int64)
    keys -= keys.min(axis=0)
    flat = np.ravel_multi_index(keys.T, keys.max(axis=0) + 1)
    return len(np.unique(flat))


def box_counting_dimension(points, delta_range, offsets: int = 3) -> BoxDimension:
    """Box-counting dimension from occupied-box counts on dyadic grids.

    ``delta_range`` is a descending list of box sides whose first and last
    entries bound the dyadic scales used; it must span at least one decade.
    The slope is an OLS fit of log N_delta against -log delta over the
    central 80% of the log range.  ``lower``/``upper`` are the extreme local
    slopes between consecutive fitted scales.  Each count is the minimum over
    a few shifted grid origins.
    """
    pts = _points_of(points)
    deltas = np.asarray(delta_range, dtype=float)
    if deltas.size < 2 or np.any(deltas <= 0):
        raise ValueError("delta_range needs at least two positive lengths")
    if np.any(np.diff(deltas) > 0):
        raise ValueError("delta_range must be descending")
    dmax, dmin = deltas[0], deltas[-1]
    if dmax / dmin < 10.0 * (1 - 1e-12):
        raise ValueError("delta_range must span at least one decade")

    k = int(math.floor(math.log2(dmax / dmin) + 1e-12))
    scales = dmax * 2.0 ** -np.arange(k + 1)
    base = pts.min(axis=0)
    counts = []
    for delta in scales:
        best = None
        for s in range(offsets):
            origin = base - delta * (s / offsets + 1e-9)
            c = _count_boxes(pts, delta, origin)
            best = c if best is None else min(best, c)
        counts.append(best)
    counts = np.asarray(counts, dtype=float)

    x = -np.log(scales)
    y = np.log(counts)
    span = x[-1] - x[0]
    used = (x >= x[0] + 0.1 * span - 1e-12) & (x <= x[-1] - 0.1 * span + 1e-12)
    if used.sum() < 2:
        used[:] = True
    xs, ys = x[used], y[used]
    slope = float(np.polyfit(xs, ys, 1)[0]) if np.ptp(ys) > 0 else 0.0
    local = np.diff(ys) / np.diff(xs)
    fit_log = [(float(s), int(c), bool(u)) for s, c, u in zip(scales, counts, used)]
    return BoxDimension(slope, float(local.min()), float(local.max()), fit_log)


@dataclass(frozen=True)
class LocalDimension:
    dimension: float
    radius: float  # smallest radius that produced a usable estimate
    points_used: int
    per_radius: list


def local_dimension(points, x, radii, min_points: int = 200, spacing: float | None = None) -> LocalDimension:
    """Box-counting dimension of the mesh restricted to B(x, r), shrinking r.

    For each radius (descending) the ball's points are box-counted over
    scales from r/2 down to one decade below.  Radii whose ball holds fewer
    than ``min_points`` points, or whose smallest scale would fall below
    twice the mesh spacing, are unusable; the estimate at the smallest
    usable radius is returned together with that radius.
    """
    mesh_pts = _points_of(points)
    if spacing is None:
        spacing = points.spacing if isinstance(points, Mesh) else _nn_spacing(mesh_pts)
    x = np.asarray(x, dtype=float)
    radii = np.asarray(radii, dtype=float)
    if np.any(np.diff(radii) > 0):
        raise ValueError("radii must be descending")
    tree = cKDTree(mesh_pts)
    per_radius = []
    best = None
    for r in radii:
        idx = tree.query_ball_point(x, r)
        sub = mesh_pts[idx]
        if len(sub) == 1:
            per_radius.append((float(r), 1, 0.0))
            best = (0.0, float(r), 1)
            continue
        hi = r / 2.0
        lo = hi / 10.0
        if len(sub) < min_points or lo < 2.0 * spacing:
            per_radius.append((float(r), len(sub), None))
            continue
        est = box_counting_dimension(sub, [hi, lo]).dimension
        per_radius.append((float(r), len(sub), est))
        best = (est, float(r), len(sub))
    if best is None:
        raise ValueError(
            f"no usable radius: largest ball holds {per_radius[0][1] if per_radius else 0} points"
        )
    return LocalDimension(best[0], best[1], best[2], per_radius)


def cantor_set(depth: int, ambient_dim: int = 3, axis: int = 0) -> np.ndarray:
    """Left endpoints of the middle-thirds Cantor intervals at ``depth``, on a segment in R^d."""
    left = np.zeros(1)
    for k in range(depth):
        left = np.concatenate([left, left + 2.0 * 3.0 ** -(k + 1)])
    pts = np.zeros((len(left), _check_dim(ambient_dim)))
    pts[:, axis] = np.sort(left)
    return pts
