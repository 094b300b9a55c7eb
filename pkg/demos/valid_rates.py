"""
Delta edits versus full rewrites under a sticky error channel
=============================================================

A generator emits tokens through a two-state Markov chain: once it errs it
stays in the error state with probability ``gamma``. The no-error probability
of a length-``L`` emission is ``C * (1 - eps)**L`` and the constant ``C``
cancels when a delta edit is compared with a full rewrite.
"""

import numpy as np

from cenas import error_channel as ec

# the calibrated setting: 200-token rewrites, edits touching a fifth of them
p = ec.MarkovErrorParams(eps=0.005, gamma=0.3, l_full=200, alpha=0.20, pi_full=1.0, pi_delta=1.0)
print("valid rate, full  :", ec.valid_rate(p, ec.FULL))
print("valid rate, delta :", ec.valid_rate(p, ec.DELTA))
print("ratio             :", ec.valid_rate_ratio(p))

# persistence changes both rates but not their ratio
for gamma in (0.005, 0.3, 0.9):
    q = ec.MarkovErrorParams(0.005, gamma, 200, 0.2, 1.0, 1.0)
    print(f"gamma={gamma:<6} full={ec.valid_rate(q, ec.FULL):.5f} ratio={ec.valid_rate_ratio(q):.12f}")

# simulate the chain token by token and compare with the closed form
rng = np.random.default_rng(0)
for L in (10, 50, 200):
    chk = ec.check_against_simulation(p, L, 200_000, rng)
    print(f"L={L:<4} closed={chk.closed_form:.5f} simulated={chk.estimate:.5f} z={chk.z:+.2f}")
