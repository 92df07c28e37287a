"""Command-line runner: one subcommand per module entry point.

    python -m riesz_lab <subcommand> --config run.ini [--seed N] [--workers N] [--out DIR]

Every run writes ``manifest.json`` (config hash, seed, versions, wall time,
hashes of the task outputs) next to the task's own JSON/CSV files.  A
failure writes ``error.json`` and exits nonzero.
"""

from __future__ import annotations

import argparse
import os
import platform
import sys
import time
import traceback

import numpy as np
import scipy

from . import __version__
from ._util import dump_json, make_rng, sha256_file
from .bernstein import bernstein_ratio_probe, bm_constant_probe, mass_density_probe, rows_to_csv
from .config import ConfigError, load_config
from .equilibrium import frostman_check, inverse_equilibrium, solve_equilibrium
from .fekete import optimize_fekete, sequence_to_csv, transfinite_diameter_sequence
from .geometry import box_counting_dimension
from .gibbs import GibbsSpec, mcmc_sample, one_point_correlation, zn_scaling_check
from .ldp import ldp_scan, scan_to_csv
from .potential import DiscreteMeasure

__all__ = ["main", "SUBCOMMANDS"]


def _ints(v):
    return [int(x) for x in str(v).replace(",", " ").split()]


def _floats(v):
    return [float(x) for x in str(v).replace(",", " ").split()]


def _get(task, key, default, kind=float):
    return kind(task[key]) if key in task else default


def _solve(cfg, task=None):
    task = cfg.task("equilibrium") if task is None else task
    return solve_equilibrium(
        cfg.build_mesh(),
        cfg.build_kernel(),
        cfg.build_field(),
        max_iters=_get(task, "max_iters", 20000, int),
        gap_tol=_get(task, "gap_tol", 1e-8),
        diagonal=task.get("diagonal", "truncate"),
    )


def _write_mesh(mesh, out):
    path = os.path.join(out, "mesh.csv")
    rows = [list(p) + [w] for p, w in zip(mesh.points, mesh.cell_weights)]
    d = mesh.points.shape[1]
    rows_to_csv([f"x{k + 1}" for k in range(d)] + ["weight"], [[float(v) for v in r] for r in rows], path)
    return path


def _gibbs_spec(cfg, n, task):
    base = task.get("base", "mesh")
    kernel, Q = cfg.build_kernel(), cfg.build_field()
    exponent = _get(task, "exponent", 1.0)
    if base == "mesh":
        mu = cfg.build_measure()
        return GibbsSpec(cfg.build_set(), mu, kernel, Q, n, exponent)
    return GibbsSpec(cfg.build_set(), base, kernel, Q, n, exponent)


# ---------------------------------------------------------------- tasks


def task_equilibrium(cfg, args, out):
    sol = _solve(cfg)
    mesh_path = _write_mesh(cfg.build_mesh(), out)
    sol.to_json(os.path.join(out, "equilibrium.json"), mesh_path=mesh_path)
    dump_json(frostman_check(sol).as_dict(), os.path.join(out, "frostman.json"))
    return ["mesh.csv", "equilibrium.json", "frostman.json"]


def task_inverse_eq(cfg, args, out):
    task = cfg.task("inverse-eq")
    mesh = cfg.build_mesh()
    if cfg.sections.get("measure", {}).get("kind") == "file":
        tau = cfg.build_measure().normalized()
    else:
        rng = make_rng(cfg.seed, 11)
        tau = DiscreteMeasure(mesh.points, rng.dirichlet(np.ones(len(mesh))))
    kernel = cfg.build_kernel()
    diagonal = task.get("diagonal", "truncate")
    Q = inverse_equilibrium(tau, kernel, diagonal)
    sol = solve_equilibrium(tau.support, kernel, Q, gap_tol=_get(task, "gap_tol", 1e-10), diagonal=diagonal)
    err = float(np.abs(sol.weights - tau.weights).max())
    dump_json(
        {
            "tau": tau.weights,
            "field_values": Q.values,
            "recovered": sol.weights,
            "sup_error": err,
            "converged": sol.converged,
            "gap": sol.gap,
        },
        os.path.join(out, "inverse_eq.json"),
    )
    return ["inverse_eq.json"]


def _fekete_opts(task, cfg, args):
    return dict(
        restarts=_get(task, "restarts", 6, int),
        max_iters=_get(task, "max_iters", 20000, int),
        step_init=_get(task, "step_init", 0.05),
        seed=cfg.seed,
        workers=args.workers,
    )


def task_fekete(cfg, args, out):
    task = cfg.task("fekete")
    n = args.n if args.n is not None else _get(task, "n", None, int)
    if n is None:
        raise ConfigError("fekete needs n (--n or [fekete] n)")
    res = optimize_fekete(cfg.build_set(), cfg.build_kernel(), cfg.build_field(), n, **_fekete_opts(task, cfg, args))
    res.to_json(os.path.join(out, "fekete.json"))
    return ["fekete.json"]


def task_tdiam(cfg, args, out):
    task = cfg.task("tdiam")
    n_list = args.n_list or _ints(task.get("n_list", "10 20 40 80"))
    rows, _ = transfinite_diameter_sequence(
        cfg.build_set(), cfg.build_kernel(), cfg.build_field(), n_list, **_fekete_opts(task, cfg, args)
    )
    sequence_to_csv(rows, os.path.join(out, "tdiam.csv"))
    return ["tdiam.csv"]


def task_bm_probe(cfg, args, out):
    task = cfg.task("bm-probe")
    n_list = args.n_list or _ints(task.get("n_list", "8 16 32 64"))
    recs = bm_constant_probe(
        cfg.build_measure(),
        cfg.build_set(),
        cfg.build_kernel(),
        cfg.build_field(),
        n_list,
        trials=_get(task, "trials", 200, int),
        seed=cfg.seed,
    )
    rows_to_csv(["n", "m_hat_root"], [(r.n, r.root) for r in recs], os.path.join(out, "bm_probe.csv"))
    return ["bm_probe.csv"]


def task_bernstein_probe(cfg, args, out):
    task = cfg.task("bernstein-probe")
    n_list = args.n_list or _ints(task.get("n_list", "4 8 16 32"))
    probe = bernstein_ratio_probe(
        cfg.build_set(),
        cfg.build_kernel(),
        n_list,
        trials=_get(task, "trials", 20, int),
        seed=cfg.seed,
        m=_get(task, "m", None),
        mesh=cfg.build_mesh(),
    )
    probe.to_csv(os.path.join(out, "bernstein_probe.csv"))
    dump_json(
        {"beta": probe.beta, "beta_hat": probe.beta_hat, "C": probe.C, "m": probe.m, "violations": probe.violations},
        os.path.join(out, "bernstein_probe.json"),
    )
    return ["bernstein_probe.csv", "bernstein_probe.json"]


def task_mass_density(cfg, args, out):
    task = cfg.task("mass-density")
    rep = mass_density_probe(
        cfg.build_measure(),
        cfg.build_set(),
        _floats(task.get("T_grid", "0 1 2 3")),
        _floats(task.get("r_grid", "0.5 0.4 0.3 0.2")),
    )
    rep.to_json(os.path.join(out, "mass_density.json"))
    return ["mass_density.json"]


def task_dimension(cfg, args, out):
    task = cfg.task("dimension")
    s = cfg.build_set()
    if "samples" in task:
        pts = s.sample(int(task["samples"]), make_rng(cfg.seed, 3))
    else:
        pts = cfg.build_mesh().points
    D = s.diameter
    rng_ = _floats(task.get("delta_range", f"{D / 4} {D / 400}"))
    res = box_counting_dimension(pts, rng_)
    dump_json(
        {"dimension": res.dimension, "lower": res.lower, "upper": res.upper, "fit": res.fit_log},
        os.path.join(out, "dimension.json"),
    )
    return ["dimension.json"]


def task_gibbs_sample(cfg, args, out):
    task = cfg.task("gibbs-sample")
    n = args.n if args.n is not None else _get(task, "n", 8, int)
    res = mcmc_sample(
        _gibbs_spec(cfg, n, task),
        chains=_get(task, "chains", 4, int),
        steps=_get(task, "steps", 2000, int),
        burn_in=_get(task, "burn_in", 500, int),
        seed=cfg.seed,
        thin=_get(task, "thin", 10, int),
    )
    res.to_csv(os.path.join(out, "gibbs_samples.csv"))
    res.diagnostics_json(os.path.join(out, "gibbs_diagnostics.json"))
    return ["gibbs_samples.csv", "gibbs_diagnostics.json"]


def task_zn(cfg, args, out):
    task = cfg.task("zn")
    n_list = args.n_list or _ints(task.get("n_list", "2 3 4"))
    spec = _gibbs_spec(cfg, n_list[0], task)
    eq = _solve(cfg) if str(task.get("target", "true")).lower() in ("1", "true", "yes") else None
    ais = {k: _get(task, k, None, int) for k in ("chains", "steps") if k in task}
    if "rungs" in task:
        from .gibbs import geometric_ladder

        ais["temperatures"] = geometric_ladder(int(task["rungs"]))
    rows = zn_scaling_check(spec, n_list, eq, mesh=cfg.build_mesh(), ais=ais, seed=cfg.seed)
    rows_to_csv(
        ["n", "log_z", "se", "normalized", "target", "sandwich_rhs", "sandwich_ok", "method"],
        [(r.n, r.log_z, r.se, r.normalized, r.target, r.sandwich_rhs, r.sandwich_ok, r.method) for r in rows],
        os.path.join(out, "zn.csv"),
    )
    return ["zn.csv"]


def task_tau(cfg, args, out):
    task = cfg.task("tau")
    n = args.n if args.n is not None else _get(task, "n", 3, int)
    res = one_point_correlation(
        _gibbs_spec(cfg, n, task),
        method=task.get("method", "quadrature"),
        chains=_get(task, "chains", 8, int),
        steps=_get(task, "steps", 4000, int),
        burn_in=_get(task, "burn_in", 1000, int),
        seed=cfg.seed,
    )
    d = res.tau.support.shape[1]
    rows_to_csv(
        [f"x{k + 1}" for k in range(d)] + ["tau"],
        [[float(v) for v in p] + [float(w)] for p, w in zip(res.tau.support, res.tau.weights)],
        os.path.join(out, "tau.csv"),
    )
    return ["tau.csv"]


def task_ldp_scan(cfg, args, out):
    task = cfg.task("ldp-scan")
    n_list = args.n_list or _ints(task.get("n_list", "4 8 12 16"))
    eq = _solve(cfg)
    mesh = cfg.build_mesh()
    spec = _gibbs_spec(cfg, n_list[0], task)
    # second centre: the reference measure restricted to a half space
    axis = _get(task, "half_axis", 1, int)
    w = (mesh.points[:, axis] >= 0).astype(float)
    centers = [eq.measure, DiscreteMeasure(mesh.points, w / w.sum())]
    reps = ldp_scan(
        centers,
        _get(task, "radius", 0.12),
        spec,
        n_list,
        samples=_get(task, "samples", 20000, int),
        seed=cfg.seed,
        equilibrium=eq,
    )
    scan_to_csv(reps, os.path.join(out, "ldp_scan.csv"))
    dump_json([r.to_record() for r in reps], os.path.join(out, "ldp_scan.json"))
    return ["ldp_scan.csv", "ldp_scan.json"]


SUBCOMMANDS = {
    "equilibrium": task_equilibrium,
    "inverse-eq": task_inverse_eq,
    "fekete": task_fekete,
    "tdiam": task_tdiam,
    "bm-probe": task_bm_probe,
    "bernstein-probe": task_bernstein_probe,
    "mass-density": task_mass_density,
    "dimension": task_dimension,
    "gibbs-sample": task_gibbs_sample,
    "zn": task_zn,
    "tau": task_tau,
    "ldp-scan": task_ldp_scan,
}


def _parser():
    p = argparse.ArgumentParser(prog="riesz_lab", description="Weighted Riesz potential experiments")
    p.add_argument("subcommand", choices=sorted(SUBCOMMANDS))
    p.add_argument("--config", required=True, help="INI or JSON experiment file")
    p.add_argument("--seed", type=int, default=None, help="overrides [run] seed")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default=None, help="output directory (RIESZ_LAB_OUT wins)")
    p.add_argument("--n", type=int, default=None, help="configuration size for single-n tasks")
    p.add_argument("--n-list", type=_ints, default=None, help="e.g. '4,8,16'")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    out = os.environ.get("RIESZ_LAB_OUT") or args.out or "riesz_out"
    start = time.perf_counter()
    try:
        cfg = load_config(args.config, seed=args.seed, out=args.out)
        out = cfg.output_dir
        os.makedirs(out, exist_ok=True)
        cfg.validate()
        files = SUBCOMMANDS[args.subcommand](cfg, args, out)
    except Exception as exc:  # any failure becomes a structured error record
        os.makedirs(out, exist_ok=True)
        dump_json(
            {
                "subcommand": args.subcommand,
                "error": type(exc).__name__,
                "message": str(exc),
                "traceback": traceback.format_exc(),
            },
            os.path.join(out, "error.json"),
        )
        print(f"error: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, ConfigError) else 1
    manifest = {
        "subcommand": args.subcommand,
        "config_sha256": cfg.content_hash,
        "seed": cfg.seed,
        "workers": args.workers,
        "versions": {
            "riesz_lab": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "wall_time_s": time.perf_counter() - start,
        "outputs": {f: sha256_file(os.path.join(out, f)) for f in files},
    }
    dump_json(manifest, os.path.join(out, "manifest.json"))
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
