"""
Capacity region of the binary adder MAC
=======================================

The noiseless adder Z = X + Y is the standard two-user example: each user
alone can send one bit per use, but together they get only 1.5 bits,
the entropy of Z = X + Y under uniform inputs.
"""

# %%
# Build the channel: W[x, y, z] = 1 when z = x + y.
import numpy as np

from macsp import Mac, Pmf, CondPmf
from macsp.regions import boundary, contains, max_sum_rate, pentagon, region_approx

W = np.zeros((2, 2, 3))
for x in range(2):
    for y in range(2):
        W[x, y, x + y] = 1.0
adder = Mac((0, 1), (0, 1), (0, 1, 2), W)

# %%
# One pentagon: uniform independent inputs, no time sharing.
u = Pmf((0,), [1.0])
half = [[0.5, 0.5]]
bx, by, bxy = pentagon(adder, u, CondPmf((0,), (0, 1), half), CondPmf((0,), (0, 1), half))
print(f"I(X;Z|Y) = {bx:.3f}  I(Y;Z|X) = {by:.3f}  I(XY;Z) = {bxy:.3f}")

# %%
# The grid approximation time-shares product input laws on a rational grid.
# Its largest sum rate approaches 1.5 from below as the grid is refined.
for k in (2, 4, 8, 16):
    print(f"resolution {k:2d}: max sum rate {max_sum_rate(region_approx(adder, k)):.4f}")

# %%
# Boundary points, each maximizing mu r_x + (1 - mu) r_y.
region = region_approx(adder, 16)
for mu, rx, ry in boundary(region, directions=5):
    print(f"mu = {mu:.2f}: ({rx:.3f}, {ry:.3f})")

# %%
# Membership comes with a witness that is re-checked against its own pentagon.
ok, wit = contains(region, (0.9, 0.55), with_witness=True)
print("(0.9, 0.55) inside:", ok, "with |U| =", len(wit.p_u.weights))
print("(0.9, 0.65) inside:", contains(region, (0.9, 0.65)))
