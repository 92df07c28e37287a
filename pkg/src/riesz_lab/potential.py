"""Riesz kernel, discrete measures, potentials and (weighted) energies.

Atoms make the continuum energy infinite, so every energy or potential that
could touch the diagonal takes a ``diagonal`` policy:

``"exclude"``
    drop self-interaction terms (the diagonal-free sums used for L_n);
``"truncate"``
    use the capped kernel h_M = min(M, |x - y|^-alpha) everywhere, with
    h_M(x, x) = M, where M is ``kernel.truncation``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .field import ExternalField, as_field

__all__ = [
    "RieszKernel",
    "DiscreteMeasure",
    "InfiniteEnergyError",
    "kernel_eval",
    "kernel_matrix",
    "potential",
    "energy",
    "weighted_energy",
    "DIAGONAL_POLICIES",
]

DIAGONAL_POLICIES = ("exclude", "truncate")
_CHUNK = 2048


class InfiniteEnergyError(ArithmeticError):
    """A kernel evaluation hit a coincidence without truncation (value is +inf)."""


@dataclass(frozen=True)
class RieszKernel:
    """W(y) = |y|^-alpha on R^d, optionally capped at ``truncation``."""

    alpha: float
    d: int = 3
    truncation: float | None = None

    def __post_init__(self):
        if self.d <= 2:
            raise ValueError("ambient dimension must exceed 2")
        if not 0.0 < self.alpha < self.d:
            raise ValueError(f"need 0 < alpha < d, got alpha={self.alpha}, d={self.d}")
        if self.truncation is not None and self.truncation < 0:
            raise ValueError("truncation level must be nonnegative")

    def truncated(self, M: float | None) -> "RieszKernel":
        return replace(self, truncation=None if M is None else float(M))

    def of_distance(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            w = r ** (-self.alpha)
        if self.truncation is not None:
            w = np.minimum(w, self.truncation)
        return w

    def default_truncation(self, spacing: float) -> float:
        """Cap used by the equilibrium solver: the kernel at half the mesh spacing."""
        return (0.5 * spacing) ** (-self.alpha)


def _policy(kernel: RieszKernel, diagonal: str) -> str:
    if diagonal not in DIAGONAL_POLICIES:
        raise ValueError(f"diagonal policy must be one of {DIAGONAL_POLICIES}, got {diagonal!r}")
    if diagonal == "truncate" and kernel.truncation is None:
        raise ValueError("truncate policy needs a kernel with a truncation level")
    return diagonal


@dataclass(frozen=True)
class DiscreteMeasure:
    """Finitely supported nonnegative measure."""

    support: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.array(np.atleast_2d(self.support), dtype=float)
        w = np.array(self.weights, dtype=float).ravel()
        if len(pts) != len(w):
            raise ValueError("one weight per support point required")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "support", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, points) -> "DiscreteMeasure":
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return cls(pts, np.full(len(pts), 1.0 / len(pts)))

    @classmethod
    def from_mesh(cls, mesh, normalize: bool = False) -> "DiscreteMeasure":
        w = mesh.cell_weights
        return cls(mesh.points, w / w.sum() if normalize else w)

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    def normalized(self) -> "DiscreteMeasure":
        return DiscreteMeasure(self.support, self.weights / self.mass)

    def integrate(self, f) -> float:
        """∫ f dmu for a callable f on (N, d) arrays, or an array of node values."""
        vals = f(self.support) if callable(f) else np.asarray(f, dtype=float)
        return float(np.dot(self.weights, vals))

    def __len__(self):
        return len(self.weights)


def kernel_eval(kernel: RieszKernel, x, y) -> float:
    """|x - y|^-alpha, capped at M when truncated.

    Raises InfiniteEnergyError for x == y without truncation.
    """
    r = float(np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(y, dtype=float)))
    if r == 0.0:
        if kernel.truncation is None:
            raise InfiniteEnergyError("kernel evaluated at coincident points without truncation")
        return float(kernel.truncation)
    w = r ** (-kernel.alpha)
    if kernel.truncation is not None:
        w = min(w, kernel.truncation)
    return float(w)


def _pair_kernel(kernel, X, Y):
    d2 = ((X[:, None, :] - Y[None, :, :]) ** 2).sum(-1)
    with np.errstate(divide="ignore"):
        K = d2 ** (-0.5 * kernel.alpha)
    if kernel.truncation is not None:
        np.minimum(K, kernel.truncation, out=K)
    return K


def kernel_matrix(kernel: RieszKernel, points, diagonal: str = "exclude", other=None) -> np.ndarray:
    """Dense kernel matrix.  With ``other`` given, the rectangular cross matrix.

    For the square case the diagonal is 0 under ``exclude`` and M under
    ``truncate``; off-diagonal coincidences are +inf unless truncated.
    """
    X = np.atleast_2d(np.asarray(points, dtype=float))
    if other is not None:
        return _pair_kernel(kernel, X, np.atleast_2d(np.asarray(other, dtype=float)))
    policy = _policy(kernel, diagonal)
    K = np.empty((len(X), len(X)))
    for s in range(0, len(X), _CHUNK):
        K[s : s + _CHUNK] = _pair_kernel(kernel, X[s : s + _CHUNK], X)
    np.fill_diagonal(K, 0.0 if policy == "exclude" else kernel.truncation)
    return K


def potential(kernel: RieszKernel, mu: DiscreteMeasure, x, exclude: int | None = None) -> float | np.ndarray:
    """U^mu(x) = sum_j w_j W(x - y_j), skipping support index ``exclude``.

    ``x`` may be one point or an (P, d) array.  Untruncated coincidence with
    a (non-excluded) support point raises InfiniteEnergyError.
    """
    xs = np.asarray(x, dtype=float)
    single = xs.ndim == 1
    xs = np.atleast_2d(xs)
    out = np.empty(len(xs))
    for s in range(0, len(xs), _CHUNK):
        K = _pair_kernel(kernel, xs[s : s + _CHUNK], mu.support)
        w = mu.weights
        if exclude is not None:
            K[:, exclude] = 0.0
        hit = np.isinf(K) & (w > 0)
        if np.any(hit):
            raise InfiniteEnergyError("potential evaluated on an untruncated atom")
        K[np.isinf(K)] = 0.0
        out[s : s + _CHUNK] = K @ w
    return float(out[0]) if single else out


def energy(kernel: RieszKernel, mu: DiscreteMeasure, diagonal: str = "exclude") -> float:
    """Discrete Riesz energy sum_{i,j} w_i w_j k(x_i, x_j) under the diagonal policy.

    Off-diagonal coincident atoms give +inf unless the kernel is truncated.
    """
    policy = _policy(kernel, diagonal)
    X, w = mu.support, mu.weights
    total = 0.0
    for s in range(0, len(X), _CHUNK):
        K = _pair_kernel(kernel, X[s : s + _CHUNK], X)
        rows = np.arange(s, min(s + _CHUNK, len(X)))
        K[rows - s, rows] = 0.0
        bad = np.isinf(K)
        if np.any(bad):
            if np.any(bad & (w[rows][:, None] > 0) & (w[None, :] > 0)):
                return math.inf
            K[bad] = 0.0
        total += float(w[rows] @ K @ w)
    if policy == "truncate":
        total += float(kernel.truncation) * float(np.dot(w, w))
    return total


def weighted_energy(kernel: RieszKernel, mu: DiscreteMeasure, Q, diagonal: str = "exclude") -> float:
    """I^Q(mu) = I(mu) + 2 ∫ Q dmu."""
    field: ExternalField = as_field(Q, mu.support.shape[1])
    return energy(kernel, mu, diagonal) + 2.0 * mu.integrate(field)
