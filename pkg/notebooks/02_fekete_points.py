# %% [markdown]
# # Weighted Fekete points and the transfinite diameter
#
# Fekete configurations minimize the discrete energy L_n.  The normalized
# energies d_n = L_n / (n(n-1)) increase toward V_w = 1 on the sphere,
# but slowly: the deficit behaves like n^(-1/2).

# %%
import math

import numpy as np

from riesz_lab import RieszKernel, Sphere, optimize_fekete, transfinite_diameter_sequence

kernel = RieszKernel(1.0, 3)
tetra = optimize_fekete(Sphere(), kernel, None, 4, restarts=4, seed=1)
print(f"n = 4: d_n = {tetra.d_n:.9f}, tetrahedron value {math.sqrt(3 / 8):.9f}")

# %%
rows, _ = transfinite_diameter_sequence(Sphere(), kernel, None, (4, 8, 16, 32), restarts=3, seed=1)
for n, log_delta, d_n in rows:
    print(f"n = {n:3d}   d_n = {d_n:.4f}   1 - d_n = {1 - d_n:.4f}   (1 - d_n) sqrt(n) = {(1 - d_n) * math.sqrt(n):.3f}")

# %% [markdown]
# The last column stays near 1 instead of shrinking (it creeps up slowly
# with n), so the deficit decays only like n^(-1/2).  That is why n = 80
# is still about 0.1 short of the limit.
