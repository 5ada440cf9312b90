"""
Orbits of a random LSV system and its first-return tower
========================================================

Two Liverani-Saussol-Vaienti maps with exponents alpha < beta are composed
at random: the alpha map with probability p1, the beta map otherwise.  The
noise sits in a second coordinate omega and is driven by a piecewise linear
map, so the whole system is one deterministic skew product.
"""

import numpy as np

from randlsv.system import SkewPoint, SystemParams, simulate
from randlsv.tower import base_partition, return_time

params = SystemParams(alpha=0.5, beta=0.7, p1=0.6)

###############################################################################
# A long orbit spends long stretches near the neutral fixed point at 0.
xs, ws, sym = simulate(0.3, 0.123, 200_000, params, seed=1)
print("fraction of time in [0, 0.01]:", np.mean(xs < 0.01))
print("fraction of alpha steps      :", np.mean(sym == 0))

###############################################################################
# The base of the tower is {x > 1/2}.  Each base point returns after a
# random time that depends on both x and omega.
rng = np.random.default_rng(0)
times = [return_time(SkewPoint(1.0 - 0.5 * u, w), params) for u, w in rng.random((20_000, 2))]
times = np.array(times)
for r in (1, 2, 5, 10, 50):
    print(f"P(R > {r:3d}) ~ {np.mean(times > r):.4f}")

###############################################################################
# The base partition: cells of fixed return time i, one per noise word.
cells = base_partition(4, params)
total = 0.0
for c in cells:
    total += c.measure
    if c.i <= 2:
        print(f"i={c.i} word={c.word:2s} omega in [{c.omega_lo:.3f}, {c.omega_hi:.3f}) "
              f"x in ({c.xprime_i:.4f}, {c.xprime_im1:.4f}]")
print("base mass covered by i <= 4:", total / 0.5)
