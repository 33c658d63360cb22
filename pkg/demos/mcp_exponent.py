"""
Measure contraction exponents on H^3
====================================

The worst exponent ``log(ratio)/log(1 - t)`` over the default region family
tends to 5 as ``eps -> 0`` and stays below 6 for every ``eps > 0``.
"""

from sasaki_lab import mcp
from sasaki_lab.models import model_from_name

H3 = model_from_name("heisenberg3")

# %%
for eps in [1.0, 0.25, 0.0625, 0.0]:
    res = mcp.mcp_exponent_probe(H3, eps)
    s = res.summary()
    print(f"eps={eps:<7g} N={s['N']} worst exponent {s['worst_exponent']:.4f} "
          f"violations {s['violations']} probes {s['probes']}")
