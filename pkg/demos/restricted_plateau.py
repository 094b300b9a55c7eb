"""
A restricted generator family stalls on a deceptive landscape
=============================================================

On the trap landscape the only elites sit in a narrow basin around a cyclic
target. The free product family can put all its mass there; a rank-1 logit
field cannot express the position-dependent preference and levels off.
"""

import numpy as np

from cenas.harness import ExperimentConfig, plateau_detect, run_experiment

base = dict(landscape="deceptive-trap", length=8, alphabet=4, population=2000, tau=0.75,
            cycles=22, fit_data="elite", seed=3)

full = run_experiment(ExperimentConfig(family="full", **base))
rank1 = run_experiment(ExperimentConfig(family="rank", rank=1, **base))

# exact concentration, enumerated over all 4**8 genomes
cf, cr = np.array(full.report.exact_C), np.array(rank1.report.exact_C)
print(" t   full   rank-1")
for t, (a, b) in enumerate(zip(cf, cr)):
    print(f"{t:2d}  {a:.4f}  {b:.4f}")

print("\nfull family max C  :", cf.max().round(4))
print("rank-1 plateau     :", plateau_detect(cr, band=0.05))
print("rank-1 last-5 range:", np.ptp(cr[-5:]).round(4))
