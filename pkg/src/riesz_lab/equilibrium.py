"""Weighted equilibrium measures on a mesh, Frostman checks, and the inverse problem.

The discrete problem is the quadratic program

    minimize  w^T A w + 2 q^T w   over the probability simplex,

with A the kernel matrix on the mesh (diagonal per policy) and q_i = Q(x_i).
At a minimizer the potential-plus-field p = A w + q equals the Robin-type
constant F_w on the support and is >= F_w everywhere, the discrete form of
the Frostman conditions.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from ._util import dump_json, sha256_file
from .field import ExternalField, GridField, as_field
from .geometry import Mesh, _nn_spacing
from .potential import DiscreteMeasure, RieszKernel, kernel_matrix

__all__ = [
    "EquilibriumSolution",
    "FrostmanReport",
    "solve_equilibrium",
    "frostman_check",
    "inverse_equilibrium",
    "solver_kernel",
]


@dataclass(frozen=True)
class FrostmanReport:
    min_on_support: float
    max_on_support: float
    global_min: float
    violation_count: int
    robin: float
    tol: float
    support_size: int

    def as_dict(self):
        return dict(self.__dict__)


@dataclass(frozen=True)
class EquilibriumSolution:
    measure: DiscreteMeasure
    value: float  # V_w
    robin: float  # F_w
    gap: float  # Frank-Wolfe duality gap at exit
    away_gap: float
    converged: bool
    iterations: int
    kernel: RieszKernel
    diagonal: str
    gap_tol: float
    frostman_report: FrostmanReport | None = None
    face_positive_definite: bool | None = None
    min_eigenvalue: float | None = None
    objective_trace: list = field(default_factory=list, repr=False)
    Q: object = None  # the external field the solution was computed for

    @property
    def weights(self) -> np.ndarray:
        return self.measure.weights

    def support_mask(self, threshold: float | None = None) -> np.ndarray:
        w = self.weights
        thr = 1e-8 * w.max() if threshold is None else threshold
        return w > thr

    def to_record(self, mesh_path=None) -> dict:
        rec = {
            "weights": self.weights,
            "V_w": self.value,
            "F_w": self.robin,
            "gap": self.gap,
            "away_gap": self.away_gap,
            "converged": self.converged,
            "iterations": self.iterations,
            "alpha": self.kernel.alpha,
            "d": self.kernel.d,
            "truncation": self.kernel.truncation,
            "diagonal": self.diagonal,
            "gap_tol": self.gap_tol,
            "face_positive_definite": self.face_positive_definite,
            "min_eigenvalue": self.min_eigenvalue,
            "frostman": None if self.frostman_report is None else self.frostman_report.as_dict(),
        }
        if mesh_path is not None:
            rec["mesh"] = {"path": str(mesh_path), "sha256": sha256_file(mesh_path)}
        return rec

    def to_json(self, path=None, mesh_path=None) -> str:
        rec = self.to_record(mesh_path)
        if path is not None and mesh_path is not None:
            # relative, so the record does not depend on where the run lives
            rec["mesh"]["path"] = os.path.relpath(mesh_path, os.path.dirname(os.path.abspath(path)))
        return dump_json(rec, path)


def _points_and_spacing(mesh):
    if isinstance(mesh, Mesh):
        return mesh.points, mesh.spacing
    if isinstance(mesh, DiscreteMeasure):
        return mesh.support, _nn_spacing(mesh.support)
    pts = np.atleast_2d(np.asarray(mesh, dtype=float))
    return pts, _nn_spacing(pts)


def solver_kernel(kernel: RieszKernel, spacing: float, diagonal: str) -> RieszKernel:
    """Kernel actually used by the solver: truncated at the default level if needed."""
    if diagonal == "truncate" and kernel.truncation is None:
        return kernel.truncated(kernel.default_truncation(spacing))
    return kernel


def _kkt_on_face(A_SS, q_S):
    """Minimizer of the quadratic over the affine hull of a face, or None if A_SS is not PD."""
    try:
        L = np.linalg.cholesky(A_SS)
    except np.linalg.LinAlgError:
        return None
    ones = np.ones(len(q_S))

    def solve(b):
        return np.linalg.solve(L.T, np.linalg.solve(L, b))

    u = solve(ones)
    v = solve(q_S)
    lam = (1.0 + v.sum()) / u.sum()
    return lam * u - v


def _objective(w, Aw, q):
    return float(w @ Aw + 2.0 * q @ w)


def _drop_negatives(A, q, S, rounds=60):
    """Re-solve the face problem, discarding every negative component each round.

    Returns simplex weights on a subset of S, or None if no nonnegative
    face solution turns up.  Not monotone by itself; the caller compares
    objectives.
    """
    for _ in range(rounds):
        x = _kkt_on_face(A[np.ix_(S, S)], q[S])
        if x is None:
            return None
        if np.all(x >= 0):
            w = np.zeros(len(q))
            w[S] = x
            return w / w.sum()
        S = S[x > 0]
        if len(S) == 0:
            return None
    return None


def _corrective(A, q, w):
    """Active-set descent on the current face; returns (new w, face was PD).

    A guarded shortcut first drops all negative components at once, which
    saves one factorization per removed point when the support shrinks a
    lot.  If that does not lower the objective, the classical one-at-a-time
    ratio step takes over.
    """
    S = np.flatnonzero(w > 0)
    f0 = _objective(w, A @ w, q)
    fast = _drop_negatives(A, q, S)
    if fast is not None and _objective(fast, A @ fast, q) < f0:
        return fast, True
    for _ in range(len(S)):
        x = _kkt_on_face(A[np.ix_(S, S)], q[S])
        if x is None:
            return w, False
        cur = w[S]
        if np.all(x >= 0):
            step = 1.0
        else:
            neg = x < cur
            ratios = np.where(neg, cur / np.where(neg, cur - x, 1.0), np.inf)
            step = min(1.0, float(ratios.min()))
        new = w.copy()
        new[S] = cur + step * (x - cur)
        new[S] = np.where(new[S] < 1e-300, 0.0, new[S])
        if step < 1.0:
            new[S[int(np.argmin(ratios))]] = 0.0
        new = np.maximum(new, 0.0)
        new /= new.sum()
        if np.array_equal(new, w):
            return w, True
        if _objective(new, A @ new, q) > _objective(w, A @ w, q) + 1e-14 * (1 + abs(_objective(w, A @ w, q))):
            return w, True
        w = new
        if step >= 1.0:
            return w, True
        S = np.flatnonzero(w > 0)
    return w, True


def solve_equilibrium(
    mesh,
    kernel: RieszKernel,
    Q=None,
    max_iters: int = 20000,
    gap_tol: float = 1e-8,
    diagonal: str = "truncate",
    init="uniform",
    corrective: bool = True,
    corrective_every: int = 25,
    eigen_check_limit: int = 2500,
) -> EquilibriumSolution:
    """Discrete weighted equilibrium measure by away-step Frank-Wolfe.

    Parameters
    ----------
    mesh : Mesh, DiscreteMeasure or (N, d) array
        Carrier of the measure.
    kernel : RieszKernel
        Under ``diagonal="truncate"`` with no truncation set, the cap
        (spacing/2)^-alpha is used.
    Q : field, number, expression string or None
    init : "uniform" or int
        Starting point: the barycenter or the given simplex vertex.
    corrective : bool
        Interleave exact minimization over the active face (an active-set
        pass) every ``corrective_every`` iterations.  This keeps the
        Frank-Wolfe iterates but removes the zig-zag tail.

    Convergence means both the Frank-Wolfe gap and the away gap are at most
    ``gap_tol``; non-convergence is flagged, not raised.
    """
    points, spacing = _points_and_spacing(mesh)
    n = len(points)
    if n == 0:
        raise ValueError("empty mesh")
    if gap_tol <= 0:
        raise ValueError("gap_tol must be positive")
    kern = solver_kernel(kernel, spacing, diagonal)
    field_ = as_field(Q, points.shape[1])
    q = np.asarray(field_(points), dtype=float)
    if not np.all(np.isfinite(q)):
        raise ValueError("external field is not finite on the mesh")
    A = kernel_matrix(kern, points, diagonal)
    if not np.all(np.isfinite(A)):
        raise ValueError("kernel matrix has infinite entries; use distinct points or truncation")

    if isinstance(init, str):
        if init != "uniform":
            raise ValueError(f"unknown init {init!r}")
        w = np.full(n, 1.0 / n)
    else:
        w = np.zeros(n)
        w[int(init)] = 1.0
    Aw = A @ w
    trace = [_objective(w, Aw, q)]
    face_pd = None
    converged = False
    it = 0
    fw_gap = away_gap = np.inf

    for it in range(1, max_iters + 1):
        p = Aw + q
        F = float(w @ p)
        s = int(np.argmin(p))
        on = np.flatnonzero(w > 0)
        v = int(on[np.argmax(p[on])])
        fw_gap = 2.0 * (F - p[s])
        away_gap = 2.0 * (p[v] - F)
        if max(fw_gap, away_gap) <= gap_tol:
            converged = True
            it -= 1
            break

        if corrective and (it % corrective_every == 1 or corrective_every == 1):
            w_new, pd = _corrective(A, q, w)
            face_pd = pd if face_pd is None else (face_pd and pd)
            if w_new is not w:
                w = w_new
                Aw = A @ w
                trace.append(_objective(w, Aw, q))
                continue

        if fw_gap >= away_gap:
            d = -w.copy()
            d[s] += 1.0
            Ad = A[:, s] - Aw
            gmax = 1.0
        else:
            d = w.copy()
            d[v] -= 1.0
            Ad = Aw - A[:, v]
            gmax = w[v] / (1.0 - w[v]) if w[v] < 1.0 else np.inf
        slope = float(p @ d)
        curv = float(d @ Ad)
        gamma = gmax if curv <= 0 else min(gmax, max(0.0, -slope / curv))
        if not np.isfinite(gamma) or gamma <= 0:
            break
        w = w + gamma * d
        if gamma == gmax and fw_gap < away_gap:
            w[v] = 0.0
        w = np.maximum(w, 0.0)
        Aw = Aw + gamma * Ad
        if it % 500 == 0:
            w /= w.sum()
            Aw = A @ w
        trace.append(_objective(w, Aw, q))

    w /= w.sum()
    Aw = A @ w
    p = Aw + q
    F = float(w @ p)
    on = np.flatnonzero(w > 0)
    fw_gap = float(2.0 * (F - p.min()))
    away_gap = float(2.0 * (p[on].max() - F))
    converged = converged or max(fw_gap, away_gap) <= gap_tol

    min_eig = None
    if eigen_check_limit and n <= eigen_check_limit:
        min_eig = float(np.linalg.eigvalsh(A)[0])

    measure = DiscreteMeasure(points, w)
    value = _objective(w, Aw, q)
    report = _frostman_from_potential(p, w, F, None, 10.0 * gap_tol)
    return EquilibriumSolution(
        measure=measure,
        value=value,
        robin=F,
        gap=fw_gap,
        away_gap=away_gap,
        converged=bool(converged),
        iterations=it,
        kernel=kern,
        diagonal=diagonal,
        gap_tol=gap_tol,
        frostman_report=report,
        face_positive_definite=face_pd,
        min_eigenvalue=min_eig,
        objective_trace=trace,
        Q=field_,
    )


def _frostman_from_potential(p, w, F, support_threshold, tol):
    thr = 1e-8 * w.max() if support_threshold is None else support_threshold
    sup = w > thr
    return FrostmanReport(
        min_on_support=float(p[sup].min()),
        max_on_support=float(p[sup].max()),
        global_min=float(p.min()),
        violation_count=int(np.sum(p < F - tol)),
        robin=float(F),
        tol=float(tol),
        support_size=int(sup.sum()),
    )


def frostman_check(
    sol,
    kernel: RieszKernel | None = None,
    Q=None,
    mesh=None,
    support_threshold: float | None = None,
    tol: float | None = None,
    diagonal: str | None = None,
) -> FrostmanReport:
    """Evaluate U^mu + Q on the mesh and compare with F_w = ∫ (U^mu + Q) dmu.

    ``sol`` is an EquilibriumSolution or any probability DiscreteMeasure on
    the mesh (e.g. a perturbed solution).  Kernel, policy and tolerance
    (and the field) default to the solution's.  Every mesh point counts: there is no
    exceptional set, so points with U^mu + Q < F_w - tol are reported as
    violations.
    """
    if isinstance(sol, EquilibriumSolution):
        mu = sol.measure
        kernel = sol.kernel if kernel is None or (kernel.truncation is None and sol.diagonal == "truncate") else kernel
        diagonal = diagonal or sol.diagonal
        tol = 10.0 * sol.gap_tol if tol is None else tol
        Q = sol.Q if Q is None else Q
    else:
        mu = sol
        if kernel is None:
            raise ValueError("kernel required when checking a bare measure")
        diagonal = diagonal or "truncate"
        tol = 1e-9 if tol is None else tol
    points = mu.support
    if mesh is not None:
        mesh_pts, spacing = _points_and_spacing(mesh)
        if mesh_pts.shape != points.shape or not np.allclose(mesh_pts, points):
            raise ValueError("measure must live on the given mesh")
    else:
        spacing = _nn_spacing(points)
    kern = solver_kernel(kernel, spacing, diagonal)
    q = as_field(Q, points.shape[1])(points)
    w = mu.weights / mu.mass
    p = kernel_matrix(kern, points, diagonal) @ w + q
    F = float(w @ p)
    return _frostman_from_potential(p, w, F, support_threshold, tol)


def inverse_equilibrium(tau: DiscreteMeasure, kernel: RieszKernel, diagonal: str = "truncate") -> ExternalField:
    """Field Q = -U^tau on tau's support, for which tau is the equilibrium measure.

    Self-interaction follows ``diagonal``; with ``truncate`` and no level set
    on the kernel the solver's default cap for tau's support is used, so that
    ``solve_equilibrium(tau.support, kernel, Q)`` recovers tau.
    """
    if not np.isclose(tau.mass, 1.0, rtol=0, atol=1e-12):
        raise ValueError("tau must be a probability measure")
    points = tau.support
    kern = solver_kernel(kernel, _nn_spacing(points), diagonal)
    A = kernel_matrix(kern, points, diagonal)
    if not np.all(np.isfinite(A)):
        raise ValueError("infinite potential at a node; use truncation or distinct points")
    return GridField(points, -(A @ tau.weights))
