"""
Backward orbits, expectations and the return-time tail
======================================================

The preimages x_n of 1/2 along a random word accumulate at 0.  Their
expectation E x_n decays like n^(-1/alpha), and the tail of the return time
follows at rate n^(-1/alpha + 1).  Small samples keep this script quick; the
CLI command ``randlsv asymptotics`` runs the full-size version.
"""

import numpy as np

from randlsv.system import SystemParams
from randlsv.tower import expectation_table, expected_return_time, tail_Rhat
from randlsv.verify import fit_power_law

params = SystemParams(alpha=0.5, beta=0.7, p1=0.6)
table = expectation_table(2000, params, samples=20_000, seed=3)
for k in (1, 10, 100, 1000, 2000):
    print(f"E x_{k:<5d} = {table.E(k):.6e}")

n = np.arange(1, table.k_max + 1)
fit = fit_power_law(n, table.mean, window=(100, 2000), se=np.where(table.exact, 0, table.se))
print(f"E x_n exponent: {fit.exponent:.3f} (compare -1/alpha = {-1 / params.alpha})")

###############################################################################
# Tail of the return time and its mean.
tail = tail_Rhat(np.unique(np.geomspace(20, 400, 12).astype(int)), params, table=table)
fit = fit_power_law(tail.n, tail.values, window=(20, 400), min_points=6)
print(f"tail exponent: {fit.exponent:.3f}")
print("E(R) =", expected_return_time(table))
