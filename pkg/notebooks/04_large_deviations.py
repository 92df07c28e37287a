# %% [markdown]
# # Ball masses of the empirical measure
#
# -(1/n^2) log Prob_n(empirical measure near mu) should order like the
# rate I^Q(mu) - V_w.  We compare a ball around the equilibrium measure
# with one around the uniform measure on a half circle.

# %%
import math

import numpy as np

from riesz_lab import Circle, DiscreteMeasure, GibbsSpec, RieszKernel, ldp_scan, solve_equilibrium

kernel = RieszKernel(0.5, 3)
mesh = Circle().mesh(60)
eq = solve_equilibrium(mesh, kernel, None, gap_tol=1e-10)
w = (mesh.points[:, 1] >= 0).astype(float)
half = DiscreteMeasure(mesh.points, w / w.sum())
spec = GibbsSpec(Circle(), DiscreteMeasure.from_mesh(mesh, normalize=True), kernel, None, 8)

reports = ldp_scan([eq.measure, half], 0.12, spec, (8, 12, 16), samples=20000, seed=1, equilibrium=eq)
for rep in reports:
    print(f"centre {rep.center_id}: rate {rep.rate:.4f}")
    for n, value, hits, flagged in rep.per_n:
        print(f"   n = {n:2d}   -(1/n^2) log sigma_n = {value:.4f}   hits = {hits}{'  (flagged)' if flagged else ''}")

# %% [markdown]
# The whole space has mass one, so its entry is exactly zero.

# %%
full = ldp_scan([eq.measure], math.inf, spec, (8,), samples=2000, seed=1, equilibrium=eq)
print(full[0].per_n)
