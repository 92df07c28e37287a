"""Weighted Fekete configurations and the discrete energy L_n.

    L_n(x_1..x_n) = sum_{i != j} |x_i - x_j|^-alpha + 2 n sum_j Q(x_j)

and VDM_n^Q = exp(-L_n).  Everything is kept in the log domain; VDM itself
underflows long before the sizes used here.  Optimized configurations are
local optima: multistart descent certifies nothing global.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._util import dump_json, make_rng
from .field import as_field
from .geometry import CompactSet, PointCloud
from .potential import RieszKernel

__all__ = [
    "Configuration",
    "FeketeResult",
    "pair_energy",
    "log_vdm",
    "normalized_energy",
    "grad_L",
    "optimize_fekete",
    "transfinite_diameter_sequence",
    "fekete_empirical_convergence",
    "sequence_to_csv",
    "MIN_SEPARATION",
]

MIN_SEPARATION = 1e-9


@dataclass(frozen=True)
class Configuration:
    points: np.ndarray

    def __post_init__(self):
        pts = np.array(np.atleast_2d(self.points), dtype=float)
        if len(pts) < 2:
            raise ValueError("a configuration needs n >= 2 points")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return len(self.points)


def _pts(config) -> np.ndarray:
    return config.points if isinstance(config, Configuration) else np.atleast_2d(np.asarray(config, dtype=float))


def _pair_matrix(kernel: RieszKernel, X: np.ndarray) -> np.ndarray:
    diff = X[:, None, :] - X[None, :, :]
    r2 = (diff**2).sum(-1)
    np.fill_diagonal(r2, np.inf)
    with np.errstate(divide="ignore"):
        K = r2 ** (-0.5 * kernel.alpha)
    if kernel.truncation is not None:
        np.minimum(K, kernel.truncation, out=K)
        np.fill_diagonal(K, 0.0)
    return K


def pair_energy(kernel: RieszKernel, X) -> float:
    """sum_{i != j} W(x_i - x_j) (ordered pairs); +inf on coincidence."""
    return float(_pair_matrix(kernel, np.asarray(X, dtype=float)).sum())


def _L(kernel, Q, X):
    n = len(X)
    return pair_energy(kernel, X) + 2.0 * n * float(Q(X).sum())


def log_vdm(config, kernel: RieszKernel, Q=None) -> float:
    """log VDM_n^Q = -L_n; -inf for coincident points (untruncated kernel)."""
    X = _pts(config)
    return -_L(kernel, as_field(Q, X.shape[1]), X)


def normalized_energy(config, kernel: RieszKernel, Q=None) -> float:
    """L_n / (n (n - 1)).

    Relative to the empirical measure mu_n this equals
    ``energy(mu_n, exclude) * n/(n-1) + (2/(n-1)) * sum_j Q(x_j)``.
    """
    X = _pts(config)
    n = len(X)
    return -log_vdm(X, kernel, Q) / (n * (n - 1))


def grad_L(X, kernel: RieszKernel, Q=None) -> np.ndarray:
    """Gradient of L_n with respect to every point, shape (n, d)."""
    X = np.asarray(X, dtype=float)
    n = len(X)
    diff = X[:, None, :] - X[None, :, :]
    r2 = (diff**2).sum(-1)
    np.fill_diagonal(r2, np.inf)
    a = kernel.alpha
    coef = -2.0 * a * r2 ** (-0.5 * a - 1.0)
    if kernel.truncation is not None:
        with np.errstate(divide="ignore"):
            capped = r2 ** (-0.5 * a) >= kernel.truncation
        coef[capped] = 0.0
    g = (coef[:, :, None] * diff).sum(axis=1)
    field = as_field(Q, X.shape[1])
    return g + 2.0 * n * field.gradient(X)


@dataclass(frozen=True)
class FeketeResult:
    config: Configuration
    log_vdm: float
    d_n: float
    restarts_used: int
    restart_values: tuple = ()
    restarts_disagree: bool = False
    seed: int = 0
    note: str = "local optimum from multistart descent; global optimality not certified"

    @property
    def n(self):
        return self.config.n

    @property
    def log_delta_n(self) -> float:
        return self.log_vdm / self.n**2

    def to_record(self) -> dict:
        return {
            "n": self.n,
            "points": self.config.points,
            "log_vdm": self.log_vdm,
            "d_n": self.d_n,
            "log_delta_n": self.log_delta_n,
            "restarts": self.restarts_used,
            "restart_d_n": list(self.restart_values),
            "restarts_disagree": self.restarts_disagree,
            "seed": self.seed,
            "note": self.note,
        }

    def to_json(self, path=None) -> str:
        return dump_json(self.to_record(), path)


def _min_sep(X):
    if len(X) < 2:
        return math.inf
    r2 = ((X[:, None, :] - X[None, :, :]) ** 2).sum(-1)
    np.fill_diagonal(r2, np.inf)
    return float(np.sqrt(r2.min()))


def _descend(set_, kernel, Q, X, max_iters, step_init, tol):
    """Projected gradient descent with Armijo backtracking; L never increases."""
    X = set_.project(X)
    Lx = _L(kernel, Q, X)
    G = grad_L(X, kernel, Q)
    gmax = np.linalg.norm(G, axis=1).max()
    t = step_init * set_.diameter / gmax if gmax > 0 else step_init
    stall = 0
    for _ in range(max_iters):
        Y = set_.project(X - t * G)
        move = Y - X
        if not np.any(move):
            t *= 0.5
            if t < 1e-300:
                break
            continue
        if _min_sep(Y) < MIN_SEPARATION:
            t *= 0.5
            continue
        LY = _L(kernel, Q, Y)
        if LY <= Lx + 1e-4 * float((G * move).sum()):
            decrease = Lx - LY
            X, Lx = Y, LY
            G = grad_L(X, kernel, Q)
            t *= 1.5
            stall = stall + 1 if decrease <= tol * abs(Lx) else 0
            if stall >= 10:
                break
        else:
            t *= 0.5
            if t * np.linalg.norm(G, axis=1).max() < 1e-15 * set_.diameter:
                break
    return X, Lx


def _farthest_subset(cands, n, rng):
    first = int(rng.integers(len(cands)))
    chosen = [first]
    dist = np.linalg.norm(cands - cands[first], axis=1)
    for _ in range(n - 1):
        nxt = int(np.argmax(dist))
        chosen.append(nxt)
        dist = np.minimum(dist, np.linalg.norm(cands - cands[nxt], axis=1))
    return cands[chosen]


def _starts(set_, n, restarts, seed, equilibrium):
    starts = []
    n_strat = restarts - (1 if equilibrium is not None else 0)
    for r in range(max(n_strat, 1)):
        rng = make_rng(seed, r)
        X0 = set_.sample(n, rng) if r % 2 else None
        if X0 is None or _min_sep(X0) < MIN_SEPARATION:
            # coincident draws (possible on finite sets) would start at L = inf
            X0 = _farthest_subset(set_.sample(20 * n, rng), n, rng)
        starts.append(X0)
    if equilibrium is not None:
        rng = make_rng(seed, restarts)
        mu = equilibrium.measure if hasattr(equilibrium, "measure") else equilibrium
        idx = rng.choice(len(mu.weights), size=n, p=mu.weights / mu.mass)
        jitter = 1e-3 * set_.diameter * rng.standard_normal((n, set_.ambient_dim))
        starts.append(set_.project(mu.support[idx] + jitter))
    return starts


def optimize_fekete(
    set: CompactSet,
    kernel: RieszKernel,
    Q=None,
    n: int = 2,
    restarts: int = 6,
    max_iters: int = 20000,
    step_init: float = 0.05,
    seed: int = 0,
    equilibrium=None,
    tol: float = 1e-15,
    workers: int = 1,
) -> FeketeResult:
    """Best weighted Fekete configuration found by multistart projected descent.

    Restarts alternate between farthest-point subsets of a uniform sample
    and plain uniform samples; an equilibrium measure, if given, seeds one
    extra start.  The best restart has the lowest L_n (ties broken by the
    lexicographically smallest point list).  d_n = L_n / (n(n-1)) is an
    upper bound for D_n(K); ``restarts_disagree`` flags spreads above 1e-6.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    if isinstance(set, PointCloud) and n > len(set.points):
        raise ValueError(f"a {len(set.points)}-point set cannot hold {n} distinct points")
    field_ = as_field(Q, set.ambient_dim)
    starts = _starts(set, n, restarts, seed, equilibrium)

    def run(X0):
        return _descend(set, kernel, field_, X0, max_iters, step_init, tol)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, starts))
    else:
        results = [run(X0) for X0 in starts]

    norm = n * (n - 1)
    best = min(results, key=lambda r: (r[1], tuple(np.round(np.sort(r[0], axis=0).ravel(), 12))))
    values = tuple(float(L / norm) for _, L in results)
    X, L = best
    return FeketeResult(
        config=Configuration(X),
        log_vdm=-float(L),
        d_n=float(L / norm),
        restarts_used=len(results),
        restart_values=values,
        restarts_disagree=bool(max(values) - min(values) > 1e-6),
        seed=seed,
    )


def transfinite_diameter_sequence(set, kernel, Q=None, n_list=(10, 20, 40, 80), **opts):
    """Rows (n, log delta_n estimate, d_n) from optimize_fekete at each n."""
    n_list = list(n_list)
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be increasing")
    rows, results = [], []
    for n in n_list:
        res = optimize_fekete(set, kernel, Q, n, **opts)
        results.append(res)
        rows.append((n, res.log_delta_n, res.d_n))
    return rows, results


def sequence_to_csv(rows, path=None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["n", "log_delta_n", "d_n"])
    for n, ld, dn in rows:
        writer.writerow([n, repr(float(ld)), repr(float(dn))])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


def fekete_empirical_convergence(set, kernel, Q, n_list, equilibrium, directions=64, seed=0, **opts):
    """Rows (n, sliced-W1 distance between the Fekete empirical measure and mu_{K,Q})."""
    from .ldp import empirical_measure, measure_distance

    mu = equilibrium.measure if hasattr(equilibrium, "measure") else equilibrium
    rows = []
    for n in n_list:
        res = optimize_fekete(set, kernel, Q, n, seed=seed, **opts)
        dist = measure_distance(empirical_measure(res.config), mu.normalized(), directions, seed)
        rows.append((n, dist))
    return rows
