"""The Gibbs ensemble Prob_n on K^n and its normalizing constant Z_n.

Prob_n has density proportional to exp(-e * L_n(x)) against nu^n, where
nu is a base measure on K and e is the ensemble exponent (1 by default;
``exponent=2`` gives the |VDM|^2 variant).

Two kinds of base measure are supported:

* a ``DiscreteMeasure`` (mesh weights, point clouds); states are index
  vectors into its support and every kernel value is precomputed;
* the set's own reference measure, tagged ``"continuous"`` (mass as
  reported by the set) or ``"continuous-probability"`` (scaled to mass 1).

Sampling is single-site Metropolis with all chains advanced in lockstep.
A move picks a random site and proposes, with probability 0.9, a local
step (Gaussian step brought back onto K, or a walk on a k-nearest-neighbour
graph for discrete bases) and otherwise an independent draw from nu.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree

from ._util import dump_json, logmeanexp, logsumexp, make_rng, sha256_bytes
from .field import as_field
from .geometry import CompactSet, Mesh, PointCloud
from .potential import DiscreteMeasure, RieszKernel, kernel_matrix

__all__ = [
    "CONTINUOUS",
    "CONTINUOUS_PROBABILITY",
    "GibbsSpec",
    "ChainState",
    "MCMCResult",
    "mcmc_sample",
    "transition_matrix",
    "partition_function_quadrature",
    "AISResult",
    "partition_function_ais",
    "geometric_ladder",
    "ZnRow",
    "zn_scaling_check",
    "OnePointResult",
    "one_point_correlation",
    "RareEventRecord",
    "rare_event_bound",
    "rare_event_probability",
    "QUADRATURE_LIMIT",
]

CONTINUOUS = "continuous"
CONTINUOUS_PROBABILITY = "continuous-probability"
QUADRATURE_LIMIT = 10**7
JUMP_PROB = 0.1
TARGET_ACCEPT = 0.3
_BLOCK = 2_000_000


@dataclass(frozen=True, eq=False)
class GibbsSpec:
    set: CompactSet
    base: object
    kernel: RieszKernel
    Q: object = None
    n: int = 2
    exponent: float = 1.0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("the ensemble needs n >= 2")
        base = self.base
        if isinstance(base, str):
            if base not in (CONTINUOUS, CONTINUOUS_PROBABILITY):
                raise ValueError(f"unknown base measure tag {base!r}")
            if isinstance(self.set, PointCloud):
                base = DiscreteMeasure(self.set.points, self.set.mesh().cell_weights)
                if self.base == CONTINUOUS_PROBABILITY:
                    base = base.normalized()
        elif isinstance(base, Mesh):
            base = DiscreteMeasure.from_mesh(base)
        elif not isinstance(base, DiscreteMeasure):
            raise TypeError("base must be a DiscreteMeasure, a Mesh or a reference-measure tag")
        object.__setattr__(self, "base", base)
        if not (self.base_mass > 0 and math.isfinite(self.base_mass)):
            raise ValueError("base measure needs finite positive mass")
        if self.exponent <= 0:
            raise ValueError("ensemble exponent must be positive")

    @property
    def discrete(self) -> bool:
        return isinstance(self.base, DiscreteMeasure)

    @property
    def base_mass(self) -> float:
        if self.discrete:
            return self.base.mass
        return 1.0 if self.base == CONTINUOUS_PROBABILITY else float(self.set.reference_mass)

    @property
    def field(self):
        return as_field(self.Q, self.set.ambient_dim)

    def with_n(self, n: int) -> "GibbsSpec":
        return replace(self, n=int(n))

    def with_base(self, base) -> "GibbsSpec":
        return replace(self, base=base)

    def with_field(self, Q) -> "GibbsSpec":
        return replace(self, Q=Q)

    def log_density(self, points) -> float:
        """-e * L_n of one configuration (density against nu^n, unnormalized)."""
        from .fekete import log_vdm

        return self.exponent * log_vdm(points, self.kernel, self.field)

    def describe(self) -> dict:
        base = (
            {"kind": "discrete", "support": self.base.support, "weights": self.base.weights}
            if self.discrete
            else {"kind": self.base}
        )
        return {
            "set": repr(self.set) if not self.discrete else type(self.set).__name__,
            "base": base,
            "alpha": self.kernel.alpha,
            "d": self.kernel.d,
            "truncation": self.kernel.truncation,
            "field": self.field.describe(),
            "n": self.n,
            "exponent": self.exponent,
        }

    def hash(self) -> str:
        return sha256_bytes(dump_json(self.describe()).encode())


# ---------------------------------------------------------------- models


class _DiscreteModel:
    """States are (C, n) index arrays into the positive-weight support."""

    def __init__(self, spec: GibbsSpec, k_neighbours: int = 6):
        mu = spec.base
        keep = np.flatnonzero(mu.weights > 0)
        self.keep = keep
        self.points = mu.support[keep]
        self.w = mu.weights[keep]
        self.logw = np.log(self.w)
        self.n = spec.n
        self.max_scale = math.inf
        N = len(self.w)
        K = kernel_matrix(spec.kernel, self.points, diagonal="exclude")
        np.fill_diagonal(K, math.inf if spec.kernel.truncation is None else spec.kernel.truncation)
        self.K = K
        self.q = spec.field(self.points)
        k = min(k_neighbours, N - 1)
        if k > 0:
            _, nb = cKDTree(self.points).query(self.points, k + 1)
            adj = [set() for _ in range(N)]
            for a in range(N):
                for b in np.atleast_1d(nb[a])[1:]:
                    adj[a].add(int(b))
                    adj[int(b)].add(a)
        else:
            adj = [set() for _ in range(N)]
        self.deg = np.array([len(s) for s in adj])
        width = max(1, self.deg.max())
        self.nbr = np.zeros((N, width), dtype=np.int64)
        for a, s in enumerate(adj):
            lst = sorted(s)
            self.nbr[a, : len(lst)] = lst if lst else a

    def init(self, C, rng):
        return rng.choice(len(self.w), size=(C, self.n), p=self.w / self.w.sum())

    def energy(self, S):
        n = S.shape[1]
        M = self.K[S[:, :, None], S[:, None, :]]
        ar = np.arange(n)
        M[:, ar, ar] = 0.0
        return M.sum(axis=(1, 2)) + 2.0 * n * self.q[S].sum(axis=1)

    def propose(self, S, i, jump, scales, rng):
        C = len(S)
        cur = S[np.arange(C), i]
        pick = (rng.random(C) * np.maximum(self.deg[cur], 1)).astype(np.int64)
        local = np.where(self.deg[cur] > 0, self.nbr[cur, pick], cur)
        far = rng.choice(len(self.w), size=C, p=self.w / self.w.sum())
        new = np.where(jump, far, local)
        corr = np.where(
            jump,
            0.0,
            self.logw[new] - self.logw[cur] + np.log(np.maximum(self.deg[cur], 1)) - np.log(np.maximum(self.deg[new], 1)),
        )
        return new, corr

    def delta(self, S, i, new):
        C, n = S.shape
        rows = np.arange(C)
        cur = S[rows, i]
        Kn = self.K[new[:, None], S]
        Ko = self.K[cur[:, None], S]
        Kn[rows, i] = 0.0
        Ko[rows, i] = 0.0
        with np.errstate(invalid="ignore"):
            return 2.0 * (Kn.sum(1) - Ko.sum(1)) + 2.0 * n * (self.q[new] - self.q[cur])

    def assign(self, S, i, new, acc):
        rows = np.flatnonzero(acc)
        S[rows, i[rows]] = new[rows]

    def coords(self, S):
        return self.points[S]


class _ContinuousModel:
    """States are (C, n, d) coordinate arrays on K."""

    def __init__(self, spec: GibbsSpec):
        self.set = spec.set
        self.kernel = spec.kernel
        self.field = spec.field
        self.n = spec.n
        self.max_scale = spec.set.diameter

    def init(self, C, rng):
        return self.set.sample(C * self.n, rng).reshape(C, self.n, -1)

    def energy(self, X):
        C, n, _ = X.shape
        r = np.linalg.norm(X[:, :, None, :] - X[:, None, :, :], axis=3)
        W = self.kernel.of_distance(r)
        ar = np.arange(n)
        W[:, ar, ar] = 0.0
        q = self.field(X.reshape(C * n, -1)).reshape(C, n)
        return W.sum(axis=(1, 2)) + 2.0 * n * q.sum(axis=1)

    def propose(self, X, i, jump, scales, rng):
        C, n, d = X.shape
        cur = X[np.arange(C), i]
        local = self.set.reflect_step(cur, scales[:, None] * rng.standard_normal((C, d)))
        far = self.set.sample(C, rng)
        return np.where(jump[:, None], far, local), np.zeros(C)

    def delta(self, X, i, new):
        C, n, _ = X.shape
        rows = np.arange(C)
        cur = X[rows, i]
        rn = np.linalg.norm(new[:, None, :] - X, axis=2)
        ro = np.linalg.norm(cur[:, None, :] - X, axis=2)
        Wn = self.kernel.of_distance(rn)
        Wo = self.kernel.of_distance(ro)
        Wn[rows, i] = 0.0
        Wo[rows, i] = 0.0
        with np.errstate(invalid="ignore"):
            return 2.0 * (Wn.sum(1) - Wo.sum(1)) + 2.0 * n * (self.field(new) - self.field(cur))

    def assign(self, X, i, new, acc):
        rows = np.flatnonzero(acc)
        X[rows, i[rows]] = new[rows]

    def coords(self, X):
        return X


def _model(spec):
    return _DiscreteModel(spec) if spec.discrete else _ContinuousModel(spec)


def _sweeps(model, state, L, beta, nsweeps, rng, scales, counts, adapt=False, record=None, window=20):
    """Advance every chain by ``nsweeps`` sweeps of n single-site moves.

    ``L`` is updated in place.  A chain sitting on a zero-density state
    (coincident atoms) accepts any move.
    """
    C = len(L)
    n = model.n
    acc_w = np.zeros(C)
    prop_w = 0
    for s in range(nsweeps):
        for _ in range(n):
            i = rng.integers(n, size=C)
            jump = rng.random(C) < JUMP_PROB
            new, corr = model.propose(state, i, jump, scales, rng)
            dL = model.delta(state, i, new)
            if beta == 0.0:
                acc = np.ones(C, dtype=bool)
            else:
                with np.errstate(invalid="ignore"):
                    logr = -beta * dL + corr
                logr = np.where(np.isinf(L) | np.isnan(logr), np.inf, logr)
                acc = np.log(rng.random(C)) < logr
            model.assign(state, i, new, acc)
            with np.errstate(invalid="ignore"):
                L[:] = np.where(acc, L + dL, L)
            bad = acc & ~np.isfinite(L)
            if np.any(bad):
                L[bad] = model.energy(state[bad])
            counts[0] += acc
            counts[1] += 1
            acc_w += acc
            prop_w += 1
        L[:] = model.energy(state)  # exact refresh, no drift
        if adapt and (s + 1) % window == 0:
            scales *= np.exp(2.0 * (acc_w / prop_w - TARGET_ACCEPT))
            np.minimum(scales, model.max_scale, out=scales)
            acc_w[:] = 0
            prop_w = 0
        if record is not None:
            record(s)
    return state, L


# ---------------------------------------------------------------- MCMC


@dataclass
class ChainState:
    config: np.ndarray
    log_density: float
    step_scale: float
    accepts: int
    proposals: int
    indices: np.ndarray | None = None


def _split_rhat(traces: np.ndarray) -> float:
    """Split-chain potential scale reduction for traces of shape (C, T)."""
    C, T = traces.shape
    half = T // 2
    if half < 2:
        return float("nan")
    parts = np.concatenate([traces[:, :half], traces[:, half : 2 * half]])
    m, t = parts.shape
    means = parts.mean(axis=1)
    W = parts.var(axis=1, ddof=1).mean()
    B = t * means.var(ddof=1)
    if W == 0:
        return 1.0 if B == 0 else float("inf")
    var = (t - 1) / t * W + B / t
    return float(np.sqrt(var / W))


@dataclass
class MCMCResult:
    samples: np.ndarray  # (C, T, n, d)
    indices: np.ndarray | None  # (C, T, n) for discrete bases, indices into base support
    energies: np.ndarray  # (C, T) values of L_n
    acceptance: np.ndarray
    step_scales: np.ndarray
    rhat: float
    acceptance_warning: bool
    seed: int
    spec_hash: str
    states: list = field(default_factory=list)
    rng_state: dict | None = None

    @property
    def configurations(self) -> np.ndarray:
        C, T, n, d = self.samples.shape
        return self.samples.reshape(C * T, n, d)

    @property
    def normalized_energies(self) -> np.ndarray:
        n = self.samples.shape[2]
        return self.energies / (n * (n - 1))

    def diagnostics(self) -> dict:
        return {
            "acceptance": self.acceptance,
            "step_scales": self.step_scales,
            "rhat": self.rhat,
            "acceptance_warning": self.acceptance_warning,
            "seed": self.seed,
            "spec_hash": self.spec_hash,
            "chains": int(self.samples.shape[0]),
            "draws_per_chain": int(self.samples.shape[1]),
        }

    def to_csv(self, path=None) -> str:
        cfg = self.configurations
        S, n, d = cfg.shape
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([f"p{j + 1}_x{k + 1}" for j in range(n) for k in range(d)])
        for row in cfg.reshape(S, n * d):
            writer.writerow([repr(float(v)) for v in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text

    def diagnostics_json(self, path=None) -> str:
        return dump_json(self.diagnostics(), path)


def mcmc_sample(
    spec: GibbsSpec,
    chains: int = 4,
    steps: int = 2000,
    burn_in: int = 500,
    seed: int = 0,
    thin: int = 1,
    init: list | None = None,
    rng_state: dict | None = None,
    step_scale: float | None = None,
) -> MCMCResult:
    """Metropolis sampling of Prob_n.

    ``steps`` and ``burn_in`` count sweeps (one sweep = n single-site
    moves).  Step scales adapt toward 0.3 acceptance during burn-in only.
    A resumed run passes the ``states`` and ``rng_state`` of an earlier
    result; it then continues exactly as the uninterrupted run would.
    """
    if not steps > burn_in >= 0:
        raise ValueError("need steps > burn_in >= 0")
    model = _model(spec)
    rng = make_rng(seed, 0)
    if rng_state is not None:
        rng.bit_generator.state = rng_state
    if init is None:
        state = model.init(chains, rng)
        default = 0.25 * spec.set.diameter / max(1.0, spec.n ** (1.0 / max(1, spec.set.ambient_dim - 1)))
        scales = np.full(chains, step_scale if step_scale is not None else default)
        counts = [np.zeros(chains), 0]
    else:
        chains = len(init)
        if spec.discrete:
            lookup = {int(k): j for j, k in enumerate(model.keep)}
            state = np.array([[lookup[int(k)] for k in c.indices] for c in init])
        else:
            state = np.array([c.config for c in init], dtype=float)
        scales = np.array([c.step_scale for c in init], dtype=float)
        counts = [np.array([c.accepts for c in init], dtype=float), int(init[0].proposals)]
    L = model.energy(state)

    if burn_in:
        _sweeps(model, state, L, spec.exponent, burn_in, rng, scales, counts, adapt=True)
        counts = [np.zeros(chains), 0]

    kept_s, kept_e, kept_i = [], [], []

    def record(s):
        if (s + 1) % thin == 0:
            kept_s.append(model.coords(state).copy())
            kept_e.append(L.copy())
            if spec.discrete:
                kept_i.append(model.keep[state])

    _sweeps(model, state, L, spec.exponent, steps - burn_in, rng, scales, counts, record=record)

    samples = np.stack(kept_s, axis=1)
    energies = np.stack(kept_e, axis=1)
    indices = np.stack(kept_i, axis=1) if spec.discrete else None
    acceptance = counts[0] / max(counts[1], 1)
    n = spec.n
    states = [
        ChainState(
            config=model.coords(state)[c].copy(),
            log_density=float(-spec.exponent * L[c]),
            step_scale=float(scales[c]),
            accepts=int(counts[0][c]),
            proposals=int(counts[1]),
            indices=model.keep[state[c]].copy() if spec.discrete else None,
        )
        for c in range(chains)
    ]
    finite = np.isfinite(energies)
    rhat = _split_rhat(energies / (n * (n - 1))) if finite.all() else float("nan")
    return MCMCResult(
        samples=samples,
        indices=indices,
        energies=energies,
        acceptance=acceptance,
        step_scales=scales.copy(),
        rhat=rhat,
        acceptance_warning=bool(np.any((acceptance < 0.05) | (acceptance > 0.8))),
        seed=seed,
        spec_hash=spec.hash(),
        states=states,
        rng_state=rng.bit_generator.state,
    )


def transition_matrix(spec: GibbsSpec):
    """Exact one-move transition matrix of the discrete-base sampler.

    Returns (states, log_pi, P) where ``states`` enumerates (index) tuples,
    ``log_pi`` is the unnormalized log target and P the row-stochastic
    matrix of a single site update.  For tiny instances only.
    """
    import itertools

    if not spec.discrete:
        raise ValueError("transition matrix needs a discrete base")
    model = _DiscreteModel(spec)
    N, n = len(model.w), spec.n
    if N**n > 20000:
        raise ValueError("state space too large to enumerate")
    states = np.array(list(itertools.product(range(N), repeat=n)))
    where = {tuple(s): k for k, s in enumerate(states)}
    L = model.energy(states)
    log_pi = -spec.exponent * L + model.logw[states].sum(axis=1)
    P = np.zeros((len(states), len(states)))
    pj = model.w / model.w.sum()
    for a, s in enumerate(states):
        for i in range(n):
            cur = s[i]
            for y in range(N):
                q_loc = (1.0 - JUMP_PROB) * (np.count_nonzero(model.nbr[cur, : model.deg[cur]] == y) / model.deg[cur] if model.deg[cur] else float(y == cur))
                q_jump = JUMP_PROB * pj[y]
                t = s.copy()
                t[i] = y
                b = where[tuple(t)]
                if b == a:
                    continue
                dL = L[b] - L[a]
                if math.isinf(L[a]):
                    acc_loc = acc_jump = 1.0
                else:
                    lr = -spec.exponent * dL if not math.isnan(dL) else math.inf
                    corr = model.logw[y] - model.logw[cur] + math.log(max(model.deg[cur], 1)) - math.log(max(model.deg[y], 1))
                    acc_loc = min(1.0, math.exp(min(lr + corr, 0.0)))
                    acc_jump = min(1.0, math.exp(min(lr, 0.0)))
                P[a, b] += (q_loc * acc_loc + q_jump * acc_jump) / n
        P[a, a] = 1.0 - P[a].sum()
    return states, log_pi, P


# ---------------------------------------------------------------- quadrature


def _discrete_parts(spec: GibbsSpec, mesh=None):
    """(support, log weights, K with diagonal, Q values) for tensor sums."""
    if spec.discrete and mesh is None:
        mu = spec.base
    else:
        if mesh is None:
            raise ValueError("a continuous base needs a mesh for quadrature")
        mu = mesh if isinstance(mesh, DiscreteMeasure) else DiscreteMeasure.from_mesh(mesh)
        if not spec.discrete:
            mu = DiscreteMeasure(mu.support, mu.weights * spec.base_mass / mu.mass)
    K = kernel_matrix(spec.kernel, mu.support, diagonal="exclude")
    np.fill_diagonal(K, math.inf if spec.kernel.truncation is None else spec.kernel.truncation)
    with np.errstate(divide="ignore"):
        logw = np.log(mu.weights)
    return mu, logw, K, spec.field(mu.support)


def _tensor_blocks(K, q, logw, n, exponent):
    """Yield (first-axis indices, -e*L tensor, summed log weights tensor)."""
    N = len(q)
    B = max(1, _BLOCK // max(1, N ** (n - 1)))
    for start in range(0, N, B):
        sel = [np.arange(start, min(start + B, N))] + [np.arange(N)] * (n - 1)
        shape = [len(s) for s in sel]
        L = np.zeros(shape)
        lw = np.zeros(shape)
        for a in range(n):
            view = [1] * n
            view[a] = shape[a]
            L = L + 2.0 * n * q[sel[a]].reshape(view)
            lw = lw + logw[sel[a]].reshape(view)
            for b in range(a + 1, n):
                v2 = [1] * n
                v2[a], v2[b] = shape[a], shape[b]
                L = L + 2.0 * K[np.ix_(sel[a], sel[b])].reshape(v2)
        with np.errstate(invalid="ignore"):
            yield sel[0], -exponent * L, lw, L


def partition_function_quadrature(spec: GibbsSpec, mesh=None) -> float:
    """log Z_n as the exact tensor sum over mesh^n (log domain, max-shifted).

    Uses the discrete base itself when no mesh is given.  Refuses when
    mesh_size^n exceeds 1e7; use partition_function_ais then.
    """
    mu, logw, K, q = _discrete_parts(spec, mesh)
    N, n = len(mu), spec.n
    if N**n > QUADRATURE_LIMIT:
        raise ValueError(f"mesh_size^n = {N}^{n} exceeds 1e7; use partition_function_ais")
    parts = [logsumexp(t + lw) for _, t, lw, _ in _tensor_blocks(K, q, logw, n, spec.exponent)]
    return float(logsumexp(parts))


# ---------------------------------------------------------------- AIS


def geometric_ladder(rungs: int = 32, t_min: float = 1e-4) -> np.ndarray:
    """0 followed by ``rungs - 1`` geometrically spaced temperatures up to 1."""
    if rungs < 2:
        raise ValueError("a ladder needs at least two rungs")
    if rungs == 2:
        return np.array([0.0, 1.0])
    return np.concatenate([[0.0], np.geomspace(t_min, 1.0, rungs - 1)])


@dataclass(frozen=True)
class AISResult:
    log_z: float
    se: float
    ess: float
    ess_flag: bool
    chains: int
    rungs: int
    log_weights: np.ndarray

    def to_record(self) -> dict:
        return {
            "log_z": self.log_z,
            "se": self.se,
            "ess": self.ess,
            "ess_flag": self.ess_flag,
            "chains": self.chains,
            "rungs": self.rungs,
        }


def _jackknife_logmeanexp(logw):
    C = len(logw)
    total = logmeanexp(logw)
    if C < 2:
        return total, float("inf")
    loo = np.empty(C)
    for k in range(C):
        loo[k] = logmeanexp(np.delete(logw, k))
    finite = np.isfinite(loo)
    if not finite.all():
        return total, float("inf")
    se = math.sqrt((C - 1) / C * float(((loo - loo.mean()) ** 2).sum()))
    return total, se


def partition_function_ais(
    spec: GibbsSpec,
    temperatures=None,
    chains: int = 64,
    steps: int = 2,
    seed: int = 0,
) -> AISResult:
    """Annealed importance sampling estimate of log Z_n with jackknife error.

    The chain at temperature t targets exp(-t e L_n) nu^n; t=0 is sampled
    exactly and normalizes to mass(nu)^n.  ``steps`` sweeps are run at
    each rung.  ESS below 10% of the chains is flagged.
    """
    ts = geometric_ladder() if temperatures is None else np.asarray(temperatures, dtype=float)
    if ts[0] != 0.0 or ts[-1] != 1.0 or np.any(np.diff(ts) <= 0):
        raise ValueError("temperatures must increase from 0 to 1")
    model = _model(spec)
    rng = make_rng(seed, 1)
    state = model.init(chains, rng)
    L = model.energy(state)
    logw = np.zeros(chains)
    scales = np.full(chains, 0.25 * spec.set.diameter)
    counts = [np.zeros(chains), 0]
    e = spec.exponent
    for k in range(1, len(ts)):
        dt = ts[k] - ts[k - 1]
        with np.errstate(invalid="ignore"):
            logw += np.where(np.isinf(L), -np.inf, -dt * e * L)
        _sweeps(model, state, L, ts[k] * e, steps, rng, scales, counts, adapt=True, window=1)
    log_mean, se = _jackknife_logmeanexp(logw)
    finite = logw[np.isfinite(logw)]
    if len(finite):
        w = np.exp(finite - finite.max())
        ess = float(w.sum() ** 2 / (w**2).sum())
    else:
        ess = 0.0
    return AISResult(
        log_z=float(spec.n * math.log(spec.base_mass) + log_mean),
        se=float(se),
        ess=ess,
        ess_flag=bool(ess < 0.1 * chains),
        chains=chains,
        rungs=len(ts),
        log_weights=logw,
    )


# ---------------------------------------------------------------- scaling


@dataclass(frozen=True)
class ZnRow:
    n: int
    log_z: float
    se: float
    normalized: float  # (log Z_n) / n^2
    target: float  # -V_w
    sandwich_rhs: float  # (best log VDM + n log mass) / n^2
    sandwich_ok: bool
    method: str


def zn_scaling_check(spec: GibbsSpec, n_list, equilibrium=None, mesh=None, ais: dict | None = None, fekete: dict | None = None, seed: int = 0) -> list:
    """(log Z_n)/n^2 against -V_w together with the upper sandwich bound.

    Z_n comes from quadrature when mesh_size^n <= 1e7, otherwise from AIS
    (options in ``ais``).  The sandwich side uses the best configuration
    found by optimize_fekete (options in ``fekete``): Z_n <= max VDM * mass^n.
    """
    from .fekete import log_vdm, optimize_fekete

    target = float("nan")
    if equilibrium is not None:
        target = -float(getattr(equilibrium, "value", equilibrium))
    rows = []
    for n in n_list:
        sp = spec.with_n(n)
        size = len(sp.base) if sp.discrete else (len(mesh.points) if mesh is not None else None)
        if size is not None and size**n <= QUADRATURE_LIMIT:
            log_z, se, method = partition_function_quadrature(sp, None if sp.discrete else mesh), 0.0, "quadrature"
        else:
            res = partition_function_ais(sp, seed=seed, **(ais or {}))
            log_z, se, method = res.log_z, res.se, "ais"
        if sp.discrete:
            fk_set = PointCloud(sp.base.support[sp.base.weights > 0])
        else:
            fk_set = sp.set
        best = optimize_fekete(fk_set, sp.kernel, sp.field, n, seed=seed, **(fekete or {}))
        best_log = max(best.log_vdm, -np.inf)
        if sp.discrete and size**n <= QUADRATURE_LIMIT:
            mu, logw, K, q = _discrete_parts(sp)
            best_log = max(best_log, max(float(np.max(-Lt)) for _, _, _, Lt in _tensor_blocks(K, q, logw, n, 1.0)))
        rhs = (sp.exponent * best_log + n * math.log(sp.base_mass)) / n**2
        rows.append(ZnRow(n, log_z, se, log_z / n**2, target, rhs, bool(log_z / n**2 <= rhs + 1e-12), method))
    return rows


# ---------------------------------------------------------------- one-point correlation


@dataclass(frozen=True)
class OnePointResult:
    tau: DiscreteMeasure
    method: str
    per_chain: tuple = ()
    rhat: float = float("nan")
    converged: bool = True


def one_point_correlation(
    spec: GibbsSpec,
    mesh=None,
    method: str = "quadrature",
    chains: int = 8,
    steps: int = 4000,
    burn_in: int = 1000,
    seed: int = 0,
    rhat_limit: float = 1.1,
) -> OnePointResult:
    """tau_n: the first-coordinate marginal of Prob_n, as a measure on the mesh.

    ``quadrature`` sums out the other n-1 coordinates exactly (guard:
    mesh_size^(n-1) <= 1e7).  ``mcmc`` histograms every coordinate of the
    sampled configurations (the ensemble is exchangeable) and also returns
    one histogram per chain for error bars.
    """
    if mesh is None and not spec.discrete:
        raise ValueError("a continuous base needs a mesh")
    mu, logw, K, q = _discrete_parts(spec, mesh)
    N, n = len(mu), spec.n
    if method == "quadrature":
        if N ** (n - 1) > QUADRATURE_LIMIT:
            raise ValueError(f"mesh_size^(n-1) = {N}^{n - 1} exceeds 1e7; use method='mcmc'")
        marg = np.full(N, -np.inf)
        for first, t, lw, _ in _tensor_blocks(K, q, logw, n, spec.exponent):
            marg[first] = logsumexp((t + lw).reshape(len(first), -1), axis=1)
        p = np.exp(marg - logsumexp(marg))
        return OnePointResult(DiscreteMeasure(mu.support, p / p.sum()), "quadrature")
    if method != "mcmc":
        raise ValueError("method must be 'quadrature' or 'mcmc'")
    res = mcmc_sample(spec.with_base(mu), chains=chains, steps=steps, burn_in=burn_in, seed=seed)
    per_chain = []
    for c in range(res.indices.shape[0]):
        counts = np.bincount(res.indices[c].ravel(), minlength=N).astype(float)
        per_chain.append(DiscreteMeasure(mu.support, counts / counts.sum()))
    total = np.bincount(res.indices.ravel(), minlength=N).astype(float)
    converged = bool(np.isfinite(res.rhat) and res.rhat < rhat_limit)
    return OnePointResult(DiscreteMeasure(mu.support, total / total.sum()), "mcmc", tuple(per_chain), res.rhat, converged)


# ---------------------------------------------------------------- rare events


@dataclass(frozen=True)
class RareEventRecord:
    p_hat: float
    bound: float
    n: int
    threshold: float  # configurations with L_n above this lie outside A_{n, eta}
    exact: bool
    bound_holds: bool

    def to_record(self) -> dict:
        return {
            "p_hat": self.p_hat,
            "bound": self.bound,
            "n": self.n,
            "threshold": self.threshold,
            "exact": self.exact,
            "bound_holds": self.bound_holds,
        }


def rare_event_bound(delta_Q: float, eta: float, n: int, mass: float) -> float:
    """(1 - eta / (2 delta_Q))^(n^2) * mass^n."""
    if not 0 < eta < delta_Q:
        raise ValueError("need 0 < eta < delta_Q")
    return float((1.0 - eta / (2.0 * delta_Q)) ** (n * n) * mass**n)


def rare_event_probability(spec: GibbsSpec, eta: float, delta_Q: float, samples=None, mesh=None) -> RareEventRecord:
    """Probability that VDM_n^Q < (delta_Q - eta)^(n^2), with the tail bound.

    With ``samples`` (an MCMCResult or an array of L_n values) the
    probability is a sample frequency.  Without, it is computed exactly by
    enumerating mesh^n (the discrete base by default).  The bound only
    holds for large n; a violation is reported in ``bound_holds``.
    """
    n = spec.n
    bound = rare_event_bound(delta_Q, eta, n, spec.base_mass)
    thr = -(n * n) * math.log(delta_Q - eta)
    if samples is not None:
        energies = samples.energies.ravel() if isinstance(samples, MCMCResult) else np.asarray(samples, dtype=float).ravel()
        p = float(np.mean(energies > thr))
        exact = False
    else:
        mu, logw, K, q = _discrete_parts(spec, mesh)
        if len(mu) ** n > QUADRATURE_LIMIT:
            raise ValueError("enumeration too large; pass MCMC samples instead")
        tot, out = [], []
        for _, t, lw, Lt in _tensor_blocks(K, q, logw, n, spec.exponent):
            a = t + lw
            tot.append(logsumexp(a))
            out.append(logsumexp(np.where(Lt > thr, a, -np.inf)))
        p = float(np.exp(logsumexp(out) - logsumexp(tot)))
        exact = True
    return RareEventRecord(p, bound, n, thr, exact, bool(p <= bound))
