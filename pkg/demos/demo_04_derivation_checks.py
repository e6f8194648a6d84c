"""
Replaying the converse derivation on a concrete code
====================================================

The lower-bound chain behind the sphere-packing exponent is a sequence of
inequalities about shells T_V(x, y). On a small code each one can be
evaluated with exact counts. The steps that replace counts by exponentials
are reported as diagnostics only, since they hold up to polynomial factors.
"""

# %%
import numpy as np

from macsp import Mac, MultiUserCode
from macsp.macchannel import explicit
from macsp.typeclasses import enumerate_shells
from macsp.verify import extract_subcode_A3, v0_shell, verify_chain_A1, verify_identity_A2

rng = np.random.default_rng(0)
mac = Mac((0, 1), (0, 1), (0, 1, 2), rng.dirichlet(np.ones(3), size=(2, 2)))
code = MultiUserCode(3, [(0, 0, 1), (1, 1, 0), (0, 1, 1)], [(0, 1, 0), (1, 0, 1)])

# %%
report = verify_chain_A1(code, mac)
for line in report.lines():
    print(line)
print("every exact step holds:", report.overall)

# %%
# Every sequence in a shell has probability 2^(-n (D + H)); the shell
# minimizing D + H holds the single most likely output sequence.
ch = mac.transition
x = tuple(zip(code.codebook_x[0], code.codebook_y[0]))
shells = enumerate_shells(x, None, mac.Z)
print(len(shells), "shells; identity holds on all:",
      all(verify_identity_A2(ch, x, s.channel(ch.input_alphabet)) for s in shells))
sh, val = v0_shell(ch, x)
print("most likely shell exponent", round(val, 4), "size", sh.size)

# %%
# From average to maximal error: keep the better half of the larger book.
full = explicit(MultiUserCode(2, [(0, 0), (0, 1), (1, 0), (1, 1)],
                              [(0, 0), (0, 1), (1, 0), (1, 1)]), mac)
sub, ext = extract_subcode_A3(full, mac, threshold=1.9, with_report=True)
print("kept", ext.kept, "on side", ext.side, "max pair error", ext.pair_errors.max().round(4))
