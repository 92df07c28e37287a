"""The class P_n^Q, gradient-to-sup ratios and Bernstein-Markov constant probes.

Members of the class are

    f(y) = exp(-sum_{j=2}^n |y - x_j|^-alpha - 2 n Q(y))

with poles x_2..x_n on K.  All values are handled as logs: f underflows
for moderate n.  The probes below give lower bounds for the true constants
(they maximize over a finite sample of pole sets).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from ._util import dump_json, logsumexp, make_rng
from .field import as_field
from .geometry import CompactSet, Mesh, box_counting_dimension
from .potential import DiscreteMeasure, RieszKernel

__all__ = [
    "PnFunction",
    "eval_pn",
    "grad_log_pn",
    "grad_pn",
    "sup_norm_estimate",
    "grad_sup_estimate",
    "bernstein_exponent",
    "log_sup_floor",
    "estimate_m",
    "sample_poles",
    "BernsteinProbe",
    "bernstein_ratio_probe",
    "BMRecord",
    "log_integral",
    "bm_constant_probe",
    "MassDensityReport",
    "mass_density_probe",
    "rows_to_csv",
]


@dataclass(frozen=True)
class PnFunction:
    """f_n^Q with the given poles; ``Q=None`` is the unweighted class P_n."""

    poles: np.ndarray
    kernel: RieszKernel
    Q: object = None

    def __post_init__(self):
        p = np.array(np.atleast_2d(self.poles), dtype=float)
        p.setflags(write=False)
        object.__setattr__(self, "poles", p)

    @property
    def n(self) -> int:
        return len(self.poles) + 1

    @property
    def weighted(self) -> bool:
        return self.Q is not None


def _diffs(f, Y):
    D = Y[:, None, :] - f.poles[None, :, :]
    return D, np.sqrt((D**2).sum(-1))


def eval_pn(f: PnFunction, y) -> float | np.ndarray:
    """log f(y); -inf at a pole.  ``y`` is one point or an (P, d) array."""
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    Y = np.atleast_2d(y)
    _, r = _diffs(f, Y)
    with np.errstate(divide="ignore"):
        val = -f.kernel.of_distance(r).sum(axis=1)
    if f.weighted:
        val = val - 2.0 * f.n * as_field(f.Q, Y.shape[1])(Y)
    return float(val[0]) if single else val


def grad_log_pn(f: PnFunction, y) -> np.ndarray:
    """Gradient of log f: alpha sum_j (y - x_j)/|y - x_j|^(alpha+2) - 2n grad Q."""
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    Y = np.atleast_2d(y)
    D, r = _diffs(f, Y)
    if np.any(r == 0):
        raise ValueError("gradient requested at a pole")
    a = f.kernel.alpha
    g = a * (D * (r ** (-a - 2.0))[:, :, None]).sum(axis=1)
    if f.weighted:
        g = g - 2.0 * f.n * as_field(f.Q, Y.shape[1]).gradient(Y)
    return g[0] if single else g


def grad_pn(f: PnFunction, y) -> np.ndarray:
    """Gradient of f itself, formed as exp(log f) times the log-gradient."""
    y = np.asarray(y, dtype=float)
    g = grad_log_pn(f, y)
    v = np.exp(eval_pn(f, y))
    return g * (v if np.ndim(v) == 0 else v[:, None])


def _log_grad_norm(f, Y):
    """log |grad f| = log f + log |grad log f|, finite-safe."""
    D, r = _diffs(f, Y)
    with np.errstate(divide="ignore", invalid="ignore"):
        lv = eval_pn(f, Y)
        a = f.kernel.alpha
        g = a * (D * (r ** (-a - 2.0))[:, :, None]).sum(axis=1)
        if f.weighted:
            g = g - 2.0 * f.n * as_field(f.Q, Y.shape[1]).gradient(Y)
        out = lv + np.log(np.linalg.norm(g, axis=1))
    out[~np.isfinite(out)] = -np.inf
    return out


def _points(mesh):
    if isinstance(mesh, Mesh):
        return mesh.points
    if isinstance(mesh, DiscreteMeasure):
        return mesh.support
    return np.atleast_2d(np.asarray(mesh, dtype=float))


def _ascend(set_, objective, grad, y, rounds):
    """Projected gradient ascent with backtracking, one point."""
    val = objective(y[None])[0]
    step = 0.05 * set_.diameter
    for _ in range(rounds):
        g = grad(y)
        gn = np.linalg.norm(g)
        if not np.isfinite(gn) or gn == 0:
            break
        while step > 1e-12 * set_.diameter:
            z = set_.project((y + step * g / gn)[None])[0]
            zv = objective(z[None])[0]
            if zv > val:
                y, val = z, zv
                step *= 1.5
                break
            step *= 0.5
        else:
            break
    return y, val


def _fd_grad(fun, y, h):
    g = np.empty_like(y)
    for k in range(len(y)):
        e = np.zeros_like(y)
        e[k] = h
        g[k] = (fun((y + e)[None])[0] - fun((y - e)[None])[0]) / (2 * h)
    return g


def sup_norm_estimate(f: PnFunction, set: CompactSet, mesh, refine_rounds: int = 30, top: int = 5):
    """(log ||f||_K estimate, argmax).

    Scans the mesh, then refines the best ``top`` candidates by projected
    gradient ascent on log f.  The result is never below the mesh maximum.
    """
    pts = _points(mesh)
    vals = eval_pn(f, pts)
    order = np.argsort(vals)[::-1][:top]
    best_y, best_v = pts[order[0]].copy(), float(vals[order[0]])
    if refine_rounds <= 0:
        return best_v, best_y

    def obj(Y):
        return eval_pn(f, Y)

    def grad(y):
        try:
            return grad_log_pn(f, y)
        except ValueError:
            return np.zeros_like(y)

    for i in order:
        y, v = _ascend(set, obj, grad, pts[i].copy(), refine_rounds)
        if v > best_v:
            best_y, best_v = y, float(v)
    return best_v, best_y


def grad_sup_estimate(f: PnFunction, set: CompactSet, mesh, refine_rounds: int = 20, top: int = 5):
    """(log ||grad f||_{2,K} estimate, argmax), same scan-then-refine scheme.

    The refinement climbs log|grad f| using central differences.
    """
    pts = _points(mesh)
    vals = _log_grad_norm(f, pts)
    order = np.argsort(vals)[::-1][:top]
    best_y, best_v = pts[order[0]].copy(), float(vals[order[0]])
    if refine_rounds <= 0:
        return best_v, best_y
    h = 1e-6 * set.diameter

    def obj(Y):
        return _log_grad_norm(f, Y)

    for i in order:
        y, v = _ascend(set, obj, lambda y: _fd_grad(obj, y, h), pts[i].copy(), refine_rounds)
        if v > best_v:
            best_y, best_v = y, float(v)
    return best_v, best_y


def bernstein_exponent(alpha: float, m: float) -> float:
    """beta = 2 + 1/alpha + 2 alpha/m + 2/m."""
    return 2.0 + 1.0 / alpha + 2.0 * alpha / m + 2.0 / m


def log_sup_floor(n: int, alpha: float, m: float) -> float:
    """log A_n = -2^alpha n^(1 + 2 alpha/m): a lower bound for log ||f||_K."""
    return -(2.0**alpha) * n ** (1.0 + 2.0 * alpha / m)


def estimate_m(set: CompactSet, samples: int = 200_000, seed: int = 0) -> float:
    """Box-counting dimension of a large uniform sample, rounded to the nearest 0.5."""
    pts = set.sample(samples, make_rng(seed, 0))
    D = set.diameter
    dim = box_counting_dimension(pts, [D / 4.0, D / 64.0]).dimension
    return max(0.5, round(2.0 * dim) / 2.0)


def sample_poles(pts: np.ndarray, count: int, rng, cluster: bool = False, cap_fraction: float = 0.05):
    """``count`` poles drawn uniformly from mesh points, or from one small cap."""
    if not cluster:
        return pts[rng.integers(len(pts), size=count)]
    centre = pts[rng.integers(len(pts))]
    d = np.linalg.norm(pts - centre, axis=1)
    k = max(1, int(cap_fraction * len(pts)))
    near = np.argsort(d)[:k]
    return pts[near[rng.integers(k, size=count)]]


@dataclass(frozen=True)
class BernsteinProbe:
    rows: list  # (n, max ratio, bound)
    beta: float
    beta_hat: float
    C: float
    calibration_n: int
    instances: list  # (n, ratio, clustered)
    m: float

    @property
    def violations(self) -> int:
        bound = {n: b for n, _, b in self.rows}
        return sum(1 for n, r, _ in self.instances if r > bound[n])

    def to_csv(self, path=None) -> str:
        return rows_to_csv(["n", "max_ratio", "bound"], self.rows, path)


def bernstein_ratio_probe(
    set: CompactSet,
    kernel: RieszKernel,
    n_list,
    trials: int,
    seed: int = 0,
    m: float | None = None,
    mesh=None,
    resolution: int = 2000,
    refine_rounds: int = 10,
    calibration_n: int | None = None,
    slack: float = 1.01,
) -> BernsteinProbe:
    """Observed ||grad f_n||_{2,K} / ||f_n||_K over random unweighted P_n instances.

    Half the trials draw poles uniformly from the mesh, half from a single
    cap.  The constant C is fitted as the largest ratio / n^beta among the
    ``calibration_n`` instances (default: the smallest n) and the reported
    bound is ``slack * C * n^beta``; every other n is a genuine check.
    beta_hat is the log-log slope of the per-n maximum ratios.
    """
    if m is None:
        m = estimate_m(set, seed=seed)
    beta = bernstein_exponent(kernel.alpha, m)
    mesh = mesh if mesh is not None else set.mesh(resolution)
    pts = _points(mesh)
    n_list = sorted(int(n) for n in n_list)
    calibration_n = n_list[0] if calibration_n is None else calibration_n
    instances = []
    for i, n in enumerate(n_list):
        for t in range(trials):
            rng = make_rng(seed, i, t)
            f = PnFunction(sample_poles(pts, n - 1, rng, cluster=t % 2 == 1), kernel)
            ls, _ = sup_norm_estimate(f, set, mesh, refine_rounds)
            lg, _ = grad_sup_estimate(f, set, mesh, refine_rounds)
            instances.append((n, float(math.exp(lg - ls)), t % 2 == 1))
    C = max(r / n**beta for n, r, _ in instances if n == calibration_n)
    rows = []
    for n in n_list:
        mx = max(r for k, r, _ in instances if k == n)
        rows.append((n, mx, slack * C * n**beta))
    if len(n_list) > 1:
        beta_hat = float(np.polyfit(np.log([r[0] for r in rows]), np.log([r[1] for r in rows]), 1)[0])
    else:
        beta_hat = float("nan")
    return BernsteinProbe(rows, beta, beta_hat, C, calibration_n, instances, m)


@dataclass(frozen=True)
class BMRecord:
    n: int
    m_hat: float
    root: float
    trials: int
    log_m_hat: float = 0.0


def log_integral(f: PnFunction, mu: DiscreteMeasure) -> float:
    """log ∫ f dmu by max-shifted summation."""
    lv = eval_pn(f, mu.support)
    with np.errstate(divide="ignore"):
        lw = np.log(mu.weights)
    return float(logsumexp(lv + lw))


def bm_constant_probe(
    mu: DiscreteMeasure,
    set: CompactSet,
    kernel: RieszKernel,
    Q=None,
    n_list=(8, 16, 32, 64),
    trials: int = 200,
    seed: int = 0,
    refine_rounds: int = 10,
    cluster_fraction: float = 0.5,
) -> list:
    """Largest sampled ||f_n^Q||_K / ∫ f_n^Q dmu per n, with its n-th root.

    The sup norm scans mu's support before refining, so each ratio is at
    least 1/mass(mu).
    """
    records = []
    for i, n in enumerate(n_list):
        best = -math.inf
        for t in range(trials):
            rng = make_rng(seed, i, t)
            cluster = rng.random() < cluster_fraction
            f = PnFunction(sample_poles(mu.support, n - 1, rng, cluster=cluster), kernel, Q)
            ls, _ = sup_norm_estimate(f, set, mu.support, refine_rounds)
            best = max(best, ls - log_integral(f, mu))
        records.append(BMRecord(int(n), float(math.exp(best)), float(math.exp(best / n)), trials, float(best)))
    return records


@dataclass(frozen=True)
class MassDensityReport:
    T_best: float
    c_best: float
    r0: float
    passed: bool
    c_per_T: dict
    worst_center: np.ndarray

    def to_record(self) -> dict:
        return {
            "T_best": self.T_best,
            "c_best": self.c_best,
            "r0": self.r0,
            "pass": self.passed,
            "c_per_T": {repr(float(k)): v for k, v in self.c_per_T.items()},
            "worst_center": self.worst_center,
        }

    def to_json(self, path=None) -> str:
        return dump_json(self.to_record(), path)


def mass_density_probe(mu: DiscreteMeasure, set: CompactSet | None, T_grid, r_grid, margin: float = 1e-12, centers=None):
    """min over centres x and radii r of mu(B(x, r)) / r^T, for each T.

    Centres default to every support point of mu (zero-weight ones
    included, so a vanishing patch gives c = 0).  ``pass`` means the best
    c exceeds ``margin``.
    """
    r = np.asarray(r_grid, dtype=float)
    if np.any(np.diff(r) > 0) or np.any(r <= 0):
        raise ValueError("r_grid must be positive and descending")
    if set is not None and r[0] > set.diameter * (1 + 1e-12):
        raise ValueError("radii must not exceed the set diameter")
    X = mu.support if centers is None else np.atleast_2d(np.asarray(centers, dtype=float))
    tree = cKDTree(mu.support)
    w = mu.weights
    ball = np.empty((len(X), len(r)))
    for k, rk in enumerate(r):
        lists = tree.query_ball_point(X, rk * (1 + 1e-12))
        ball[:, k] = [w[idx].sum() for idx in lists]
    c_per_T, worst = {}, {}
    for T in T_grid:
        ratio = ball / r[None, :] ** T
        flat = int(np.argmin(ratio))
        c_per_T[float(T)] = float(ratio.flat[flat])
        worst[float(T)] = X[flat // len(r)]
    T_best = max(c_per_T, key=lambda T: c_per_T[T])
    c_best = c_per_T[T_best]
    return MassDensityReport(T_best, c_best, float(r[0]), bool(c_best > margin), c_per_T, worst[T_best])


def rows_to_csv(header, rows, path=None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text
