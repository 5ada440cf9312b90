"""
Invariant density and decay of correlations
===========================================

The annealed transfer operator averages the two Perron-Frobenius operators
with weights p1 and p2.  Its Ulam discretization is a sparse stochastic
matrix whose fixed vector approximates the stationary density.  A grid that
is geometric near 0 resolves the density blow-up at the neutral point.
"""

import numpy as np

from randlsv.system import SystemParams
from randlsv.transfer import (IDENTITY, annealed_matrix, correlation_operator,
                              default_geometric_grid, local_exponent_near_zero,
                              stationary_density)
from randlsv.verify import fit_power_law

params = SystemParams(alpha=0.5, beta=0.7, p1=0.6)
grid = default_geometric_grid(4096, params.alpha)
mat = annealed_matrix(params, grid)
dens = stationary_density(mat, grid)
print("iterations:", dens.iterations, "residual:", dens.residual)
print("mass of [0, 1/16]:", dens.mass_below(1 / 16))

###############################################################################
# Near 0 the density grows like x^(-alpha): the smaller exponent wins.
print("local exponent near 0:", local_exponent_near_zero(dens, x_max=1e-3))

###############################################################################
# Correlations of phi = psi = x decay polynomially, at rate n^(1 - 1/alpha).
cor = correlation_operator(mat, dens, IDENTITY, IDENTITY, 1000)
fit = fit_power_law(np.arange(cor.size), cor, window=(50, 1000))
print(f"correlation exponent {fit.exponent:.3f} +/- {fit.stderr:.3f} "
      f"(compare 1 - 1/alpha = {1 - 1 / params.alpha})")
