"""Empirical measures, a sliced transport metric, J functionals and rates.

Weak neighbourhoods are realized as balls in the sliced 1-Wasserstein
distance over a fixed, seed-determined set of projection directions.  The
ball masses sigma_n(G) = Prob_n(empirical measure in G) are estimated by
importance sampling over the base product measure, optionally through a
defensive mixture with product measures of the ball centres, so that balls
around atypical measures still receive hits.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.stats import norm as _normal
from scipy.stats import qmc

from ._util import dump_json, logsumexp, make_rng
from .potential import DiscreteMeasure, weighted_energy

__all__ = [
    "empirical_measure",
    "projection_directions",
    "measure_distance",
    "MeasureBall",
    "JEstimate",
    "j_functional_estimate",
    "rate_function",
    "RateReport",
    "ldp_scan",
    "scan_to_csv",
]


def empirical_measure(config) -> DiscreteMeasure:
    """(1/n) sum_j delta_{x_j}; coincident points merge their weights."""
    pts = config.points if hasattr(config, "points") else np.atleast_2d(np.asarray(config, dtype=float))
    uniq, first, counts = np.unique(pts, axis=0, return_index=True, return_counts=True)
    order = np.argsort(first)
    return DiscreteMeasure(uniq[order], counts[order] / len(pts))


@lru_cache(maxsize=64)
def _directions(d: int, count: int, seed: int) -> np.ndarray:
    sob = qmc.Sobol(d, scramble=True, seed=int(seed) & 0xFFFFFFFF)
    u = sob.random(count)
    z = _normal.ppf(np.clip(u, 1e-12, 1 - 1e-12))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    z.setflags(write=False)
    return z


def projection_directions(d: int, count: int = 64, seed: int = 0) -> np.ndarray:
    """Unit vectors from a scrambled Sobol sequence mapped through the normal quantile."""
    return _directions(int(d), int(count), int(seed))


def _w1_1d(x, wx, y, wy):
    """∫|F - G| for weighted samples; last axis holds the atoms."""
    z = np.concatenate([x, y], axis=-1)
    s = np.concatenate([wx, -wy], axis=-1)
    order = np.argsort(z, axis=-1, kind="stable")
    z = np.take_along_axis(z, order, -1)
    c = np.cumsum(np.take_along_axis(s, order, -1), axis=-1)
    return (np.abs(c[..., :-1]) * np.diff(z, axis=-1)).sum(-1)


def measure_distance(mu: DiscreteMeasure, sigma: DiscreteMeasure, directions=64, seed: int = 0) -> float:
    """Sliced 1-Wasserstein distance averaged over fixed projection directions.

    Both measures are normalized to probability first.  ``directions`` is a
    count (directions drawn by ``projection_directions``) or an explicit
    (D, d) array of unit vectors.
    """
    d = mu.support.shape[1]
    U = projection_directions(d, directions, seed) if np.isscalar(directions) else np.asarray(directions, dtype=float)
    wx = np.broadcast_to(mu.weights / mu.mass, (len(U), len(mu)))
    wy = np.broadcast_to(sigma.weights / sigma.mass, (len(U), len(sigma)))
    return float(_w1_1d(U @ mu.support.T, wx, U @ sigma.support.T, wy).mean())


@dataclass(frozen=True)
class MeasureBall:
    """Open ball {nu : measure_distance(nu, center) < radius}."""

    center: DiscreteMeasure
    radius: float
    directions: int = 64
    seed: int = 0

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be positive")

    def distance(self, measure: DiscreteMeasure) -> float:
        return measure_distance(measure, self.center, self.directions, self.seed)

    def contains(self, measure: DiscreteMeasure) -> bool:
        return self.distance(measure) < self.radius

    def config_distances(self, configs, chunk: int = 2048) -> np.ndarray:
        """Distances of the empirical measures of many (S, n, d) configurations.

        Uses the quantile form W1 = ∫_0^1 |F^-1(u) - G^-1(u)| du on the merged
        breakpoints {k/n} and the centre's cumulative weights.
        """
        X = np.asarray(configs, dtype=float)
        S, n, d = X.shape
        U = projection_directions(d, self.directions, self.seed)
        c = self.center.normalized()
        cp = U @ c.support.T  # (D, Nc)
        order = np.argsort(cp, axis=1, kind="stable")
        cs = np.take_along_axis(cp, order, 1)
        cw = np.cumsum(np.take_along_axis(np.broadcast_to(c.weights, cp.shape), order, 1), axis=1)
        out = np.empty(S)
        for s in range(0, S, chunk):
            proj = np.sort(np.einsum("snd,kd->skn", X[s : s + chunk], U), axis=2)  # (B, D, n)
            tot = np.zeros(len(proj))
            for k in range(len(U)):
                grid = np.unique(np.concatenate([np.arange(n + 1) / n, cw[k], [0.0, 1.0]]).clip(0, 1))
                mid = 0.5 * (grid[1:] + grid[:-1])
                length = np.diff(grid)
                qi = np.minimum((mid * n).astype(np.int64), n - 1)
                qc = np.minimum(np.searchsorted(cw[k], mid, side="right"), len(cw[k]) - 1)
                tot += (np.abs(proj[:, k, qi] - cs[k, qc][None, :]) * length).sum(1)
            out[s : s + chunk] = tot / len(U)
        return out

    def contains_configs(self, configs) -> np.ndarray:
        return self.config_distances(configs) < self.radius


@dataclass(frozen=True)
class JEstimate:
    log_j: float  # (1/n^2) log ∫_{G_n} VDM^e dnu^n
    log_sigma: float  # log sigma_n(G), self-normalized over the same draws
    hit_count: int
    samples: int
    flagged: bool  # zero hits: only a lower-bound statement is possible
    method: str
    log_z: float  # the draws' own estimate of log Z_n


def _mixture_logq(S_idx, base_logp, comp_logps):
    """log of the equal-weight mixture density of product measures at index configs."""
    terms = [base_logp[S_idx].sum(1)] + [lp[S_idx].sum(1) for lp in comp_logps]
    return logsumexp(np.stack(terms), axis=0) - math.log(len(terms))


def _draw_discrete(rng, samples, n, base_p, comps):
    """Draws from the mixture; component 0 is the normalized base."""
    dists = [base_p] + list(comps)
    which = rng.integers(len(dists), size=samples)
    S = np.empty((samples, n), dtype=np.int64)
    for k, p in enumerate(dists):
        sel = np.flatnonzero(which == k)
        if len(sel):
            S[sel] = rng.choice(len(p), size=(len(sel), n), p=p)
    return S


def _enumerate(N, n):
    import itertools

    return np.array(list(itertools.product(range(N), repeat=n)), dtype=np.int64)


def _draws(spec, n, samples, seed, proposal_centers, method):
    """Index or coordinate draws with log weights dnu^n / dq (log domain)."""
    from .gibbs import QUADRATURE_LIMIT

    rng = make_rng(seed, 7, n)
    if spec.discrete:
        base = spec.base
        keep = base.weights > 0
        N = len(base)
        with np.errstate(divide="ignore"):
            logw = np.log(base.weights)
        base_p = base.weights / base.mass
        comps = []
        for c in proposal_centers or ():
            if len(c) != N or not np.allclose(c.support, base.support):
                raise ValueError("proposal centres must live on the base support")
            comps.append(c.weights / c.mass)
        if method == "enumerate" or (method == "auto" and N**n <= 20000):
            if N**n > QUADRATURE_LIMIT:
                raise ValueError("enumeration too large")
            S = _enumerate(N, n)
            S = S[keep[S].all(axis=1)]
            return S, base.support[S], logw[S].sum(1), "enumerate"
        S = _draw_discrete(rng, samples, n, base_p, comps)
        with np.errstate(divide="ignore"):
            logq = _mixture_logq(S, np.log(base_p), [np.log(p) for p in comps])
        log_weight = logw[S].sum(1) - logq
        return S, base.support[S], log_weight - math.log(samples), "importance"
    if proposal_centers:
        raise ValueError("centre-mixture proposals need a discrete base")
    X = spec.set.sample(samples * n, rng).reshape(samples, n, -1)
    return None, X, np.full(samples, n * math.log(spec.base_mass) - math.log(samples)), "monte-carlo"


def _energies(spec, S, X):
    from .gibbs import _discrete_parts

    if S is not None:
        _, _, K, q = _discrete_parts(spec)
        n = S.shape[1]
        M = K[S[:, :, None], S[:, None, :]]
        ar = np.arange(n)
        M[:, ar, ar] = 0.0
        return M.sum(axis=(1, 2)) + 2.0 * n * q[S].sum(1)
    from .gibbs import _ContinuousModel

    return _ContinuousModel(spec).energy(X)


def _estimate_from_draws(ball, spec, n, S, X, log_weight, method, L=None):
    if L is None:
        L = _energies(spec, S, X)
    with np.errstate(invalid="ignore"):
        a = -spec.exponent * L + log_weight
    a = np.where(np.isnan(a), -np.inf, a)
    hits = ball.contains_configs(X) if ball is not None else np.ones(len(a), dtype=bool)
    log_num = float(logsumexp(np.where(hits, a, -np.inf))) if hits.any() else -math.inf
    log_z = float(logsumexp(a))
    count = int(hits.sum())
    return JEstimate(
        log_j=log_num / n**2,
        log_sigma=log_num - log_z if count else -math.inf,
        hit_count=count,
        samples=len(a),
        flagged=count == 0,
        method=method,
        log_z=log_z,
    )


def j_functional_estimate(
    ball: MeasureBall | None,
    spec,
    n: int | None = None,
    samples: int = 10000,
    seed: int = 0,
    proposal_centers=None,
    method: str = "auto",
) -> JEstimate:
    """(1/n^2) log ∫_{G_n} VDM_n^Q(a)^e dnu^n(a), G_n = {a : empirical measure in ball}.

    ``ball=None`` means the whole space.  Discrete bases with mesh_size^n
    up to 2e4 are enumerated exactly (``method='auto'``); otherwise draws
    come from nu^n or, with ``proposal_centers``, from the equal mixture of
    the normalized nu^n and each centre's product measure, reweighted
    exactly.  Zero hits give -inf and ``flagged``.
    """
    if samples < 100:
        raise ValueError("need at least 100 samples")
    n = spec.n if n is None else int(n)
    spec = spec.with_n(n)
    S, X, lw, used = _draws(spec, n, samples, seed, proposal_centers, method)
    return _estimate_from_draws(ball, spec, n, S, X, lw, used)


def rate_function(center: DiscreteMeasure, equilibrium, kernel=None, Q=None, diagonal: str | None = None) -> float:
    """I^Q(center) - V_w, with the equilibrium's kernel (and cap) and policy by default.

    An untruncated coincidence under ``exclude`` cannot occur for a
    DiscreteMeasure with distinct atoms; infinite energies return +inf.
    """
    kernel = equilibrium.kernel if kernel is None else kernel
    Q = getattr(equilibrium, "Q", None) if Q is None else Q
    diagonal = equilibrium.diagonal if diagonal is None else diagonal
    e = weighted_energy(kernel, center.normalized(), Q, diagonal)
    if math.isinf(e):
        return math.inf
    return float(e - equilibrium.value)


@dataclass
class RateReport:
    center_id: int
    I_Q_center: float
    I_Q_eq: float
    rate: float
    per_n: list = field(default_factory=list)  # (n, -(1/n^2) log sigma_n, hits, flagged)

    def to_record(self) -> dict:
        return {
            "center_id": self.center_id,
            "I_Q_center": self.I_Q_center,
            "I_Q_eq": self.I_Q_eq,
            "rate": self.rate,
            "per_n": [
                {"n": n, "neg_log_mass_over_n2": v, "hits": h, "flagged": f} for n, v, h, f in self.per_n
            ],
        }

    def to_json(self, path=None) -> str:
        return dump_json(self.to_record(), path)


def ldp_scan(
    centers,
    radius: float,
    spec,
    n_list=(4, 8, 12, 16),
    samples: int = 20000,
    seed: int = 0,
    equilibrium=None,
    log_z: dict | None = None,
    mixture: bool = True,
    directions: int = 64,
) -> list:
    """-(1/n^2) log sigma_n(ball around each centre) against the rate.

    One set of draws per n is shared by all centres.  sigma_n is the hit
    weight over the total weight of those draws (so the whole space gets
    exactly 0).  If ``log_z`` maps n to an external log Z_n (quadrature or
    AIS), the numerator is divided by that instead.
    """
    centers = list(centers)
    reports = []
    for cid, c in enumerate(centers):
        if equilibrium is not None:
            I_c = rate_function(c, equilibrium) + equilibrium.value
            reports.append(RateReport(cid, I_c, float(equilibrium.value), I_c - float(equilibrium.value)))
        else:
            reports.append(RateReport(cid, float("nan"), float("nan"), float("nan")))
    for n in n_list:
        sp = spec.with_n(n)
        S, X, lw, used = _draws(sp, n, samples, seed, centers if (mixture and sp.discrete) else None, "auto")
        L = _energies(sp, S, X)
        for cid, c in enumerate(centers):
            ball = MeasureBall(c, radius, directions, seed) if radius != math.inf else None
            est = _estimate_from_draws(ball, sp, n, S, X, lw, used, L=L)
            if log_z is not None and n in log_z and est.hit_count:
                value = -(est.log_j * n**2 - log_z[n]) / n**2
            else:
                value = -est.log_sigma / n**2 + 0.0  # avoid -0.0 for the full space
            reports[cid].per_n.append((n, value, est.hit_count, est.flagged))
    return reports


def scan_to_csv(reports, path=None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["center_id", "n", "neg_log_mass_over_n2", "rate"])
    for rep in reports:
        for n, v, _, _ in rep.per_n:
            writer.writerow([rep.center_id, n, repr(float(v)), repr(float(rep.rate))])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text
