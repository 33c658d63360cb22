"""
Distances on the Heisenberg group as the leaves stretch
=======================================================

``d_eps`` increases to the sub-Riemannian distance as ``eps -> 0``.  The
shooting solver is compared with the closed-form search at each level.
"""

import numpy as np

from sasaki_lab import geodesics as geo
from sasaki_lab.models import model_from_name

H3 = model_from_name("heisenberg3")
target = np.array([0.6, -0.2, 0.35])

# %%
print(f"{'eps':>10} {'shooting':>14} {'closed form':>14}")
for eps in [1.0, 0.25, 0.0625, 0.015625, 0.00390625]:
    arc = geo.solve_bvp(H3, eps, np.zeros(3), target)
    print(f"{eps:10.6f} {arc.length:14.10f} {geo.heisenberg_oracle_distance(eps, target):14.10f}")

# %%
res = geo.distance(H3, 0.0, np.zeros(3), target)
print("extrapolated r_0:", res.length)
print("direct sub-Riemannian:", geo.heisenberg_oracle_distance(0.0, target))
print("levels used:", len(res.diagnostics["eps_grid"]))
