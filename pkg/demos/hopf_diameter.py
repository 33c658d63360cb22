"""
Sub-Riemannian diameter of the Hopf sphere
==========================================

The farthest point from the identity is found by a sphere sample followed
by local maximization.  The leaf through the identity is cut by its own
antipode at ``pi/(2 sqrt(eps))`` once that comes before ``2 pi sqrt(eps)``.
"""

import math

from sasaki_lab import comparison as cmp
from sasaki_lab.models import model_from_name

S3 = model_from_name("hopf3")

# %%
scan = cmp.diameter_scan(S3, count=32)
print(f"diameter estimate {scan.estimate:.6f}   pi = {math.pi:.6f}")
for r in scan.records:
    print(f"  {r.check:18s} eps={r.eps:<5g} measured={r.measured:.6f} bound={r.bound:.6f}")

# %%
for eps in [4.0, 1.0, 0.25, 0.0625]:
    res = cmp.injectivity_probe(S3, eps)
    print(f"eps={eps:<7g} cut {res.detected:.6f}   2 pi sqrt(eps) = {2 * math.pi * math.sqrt(eps):.6f}"
          f"   pi/(2 sqrt(eps)) = {math.pi / (2 * math.sqrt(eps)):.6f}")
