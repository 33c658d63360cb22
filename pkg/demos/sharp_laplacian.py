"""
The horizontal Laplacian of r_0 on H^3
======================================

The ratio ``r_0 * Delta_H r_0 / 4`` stays below one and gets close to it,
so the constant 4 cannot be lowered.
"""

import numpy as np

from sasaki_lab import comparison as cmp
from sasaki_lab.models import model_from_name

H3 = model_from_name("heisenberg3")

# %%
recs = cmp.verify_laplacian_bounds(H3, 0.0, spec=cmp.SampleSpec(count=24, seed=1))
ok = [r for r in recs if r.check == "sasakian_limit" and not r.flagged]
ratio = np.array([r.measured * r.r / 4 for r in ok])
print(f"{len(ok)} samples, ratio min {ratio.min():.4f} max {ratio.max():.6f}")

# %%
for r in sorted(ok, key=lambda r: -r.measured * r.r)[:5]:
    print("x =", np.round(r.x, 4), " r0 =", round(r.r, 4), " ratio =", round(r.measured * r.r / 4, 6))
