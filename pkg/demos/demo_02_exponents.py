"""
Sphere-packing exponents along the diagonal
===========================================

For a noisy binary MAC we trace the fixed-type bound, the unconstrained
outer maximum and the bound restricted to dominant types that a good code
can actually have, at rate pairs (t, t).
"""

# %%
import numpy as np

from macsp import Mac
from macsp.exponents import VBadSpec, inner_min, sp_fixed_type, sp_thm2, sp_thm4, transfer_bounds

W = np.array([[[0.9, 0.1], [0.3, 0.7]],
              [[0.4, 0.6], [0.05, 0.95]]])
mac = Mac((0, 1), (0, 1), (0, 1), W)
uniform = np.full((2, 2), 0.25)

# %%
# The inner minimum for each constraint family at one rate pair. The union
# value is the smallest of the three, and the minimizing V is returned.
r = (0.05, 0.05)
for fam in ("x", "y", "xy", "union"):
    res = inner_min(mac, uniform, VBadSpec(r, fam))
    print(f"{fam:>5}: {res.value:.5f}  (binding family {res.family})")

# %%
# At zero sum rate the XY family has a closed form in the geometric mean of
# the rows of W.
closed = -np.log2(np.prod(W.reshape(4, 2) ** 0.25, axis=0).sum())
print("closed form", closed, "solver", inner_min(mac, uniform, VBadSpec((0, 0), "xy")).value)

# %%
# Outer maxima over grid joint types. sp_thm2 only admits P_XY that split
# as a mixture of products with enough conditional entropy, so it never
# exceeds sp_thm4.
print("   t   fixed(uniform)  sp_thm4  sp_thm2")
for t in np.linspace(0, 0.3, 7):
    f = sp_fixed_type(mac, (t, t), uniform).value
    e4 = sp_thm4(mac, (t, t), 8).value
    e2 = sp_thm2(mac, (t, t), 8)
    tag = " (vacuous)" if e2.vacuous else ""
    print(f"{t:5.2f}  {f:14.5f}  {e4:7.5f}  {e2.value:7.5f}{tag}")

# %%
# Moving a maximal-error bound to the average-error criterion adds min(R_X, R_Y).
e = sp_thm2(mac, (0.1, 0.2), 8).value
print("average-error upper bound:", transfer_bounds(0.0, e, (0.1, 0.2))[1])
