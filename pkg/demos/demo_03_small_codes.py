"""
Exact error probabilities of small codes
========================================

At blocklength 2 or 3 every output sequence can be enumerated, so ML error
probabilities are exact. This demo finds the best small codes, repairs a
code with a repeated codeword, and reads off its dominant joint type.
"""

# %%
import numpy as np

from macsp import Mac, MultiUserCode
from macsp.feasibility import dominant_type, u_feasible
from macsp.macchannel import best_code_search, evaluate, explicit, iter_repair

W = np.array([[[0.9, 0.1], [0.3, 0.7]],
              [[0.4, 0.6], [0.05, 0.95]]])
mac = Mac((0, 1), (0, 1), (0, 1), W)

# %%
# Best average error over all 2 x 2 codes, by blocklength.
for n in (1, 2, 3):
    code, rep, info = best_code_search(mac, n, 2, 2)
    print(f"n = {n}: error {rep.average_error:.4f} over {info.candidates} candidate codes")

# %%
# A code with a repeated codeword gets at most half its messages right on
# that book. Repair swaps in a fresh sequence of the same type and hands it
# the most likely output sequence from a decoding set that can spare one.
bad = explicit(MultiUserCode(3, [(0, 1, 1), (0, 1, 1)], [(1, 0, 0), (0, 0, 1)]), mac)
print("before:", evaluate(bad, mac).average_error)
for step in iter_repair(bad, mac):
    print("after: ", evaluate(step, mac).average_error, step.codebook_x)

# %%
# The joint type shared by the most codeword pairs is the dominant type; by
# pigeonhole its rate is within log2(#types)/n of R_X + R_Y.
rep = dominant_type(step, mac.X, mac.Y)
print("dominant type counts", rep.argmax.counts, "rate", round(rep.argmax_rate, 4),
      "bound", round(rep.pigeonhole_bound, 4))

# %%
# Can this type dominate a good code at rates (0.3, 0.3)? It can if it is a
# mixture of product laws with H(X|U), H(Y|U) at least the rates.
ok, wit = u_feasible(rep.argmax.array(), (0.3, 0.3), u_cap=6)
print("admissible:", ok)
if ok:
    print(f"  |U| = {wit.size}, H(X|U) = {wit.h_x_given_u:.3f}, H(Y|U) = {wit.h_y_given_u:.3f}")
