"""Ulam discretisation of the annealed transfer operator and correlations.

The annealed operator is P = p1 P_alpha + p2 P_beta.  On a partition of
[0, 1] into bins B_0..B_{N-1} its Ulam matrix has entries

    M[i, j] = m(B_i  cap  T^{-1} B_j) / m(B_i),

computed exactly from the branch inverses of the bin breakpoints (the
preimage of an interval under a monotone branch is the interval between the
preimages of its endpoints).  Rows are source bins, so probability mass
vectors are row vectors and evolve as ``mu @ M``.

Densities are stored per unit length: ``f[i] = mu[i] / width[i]``.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from randlsv import _kernels
from randlsv.maps import invert_left
from randlsv.system import (
    SystemParams,
    make_rng,
    sample_symbol_array,
)


class NotConvergedError(ArithmeticError):
    pass


@dataclasses.dataclass(frozen=True, eq=False)
class PartitionGrid:
    n_bins: int
    kind: str
    breakpoints: np.ndarray

    def __post_init__(self):
        b = self.breakpoints
        if b.shape != (self.n_bins + 1,) or b[0] != 0.0 or b[-1] != 1.0:
            raise ValueError("breakpoints must run from 0 to 1 with n_bins + 1 entries")
        if np.any(np.diff(b) <= 0):
            raise ValueError("breakpoints must be strictly increasing")

    @property
    def widths(self):
        return np.diff(self.breakpoints)

    @property
    def centers(self):
        return 0.5 * (self.breakpoints[1:] + self.breakpoints[:-1])


def uniform_grid(n_bins):
    b = np.linspace(0.0, 1.0, n_bins + 1)
    return PartitionGrid(n_bins, "uniform", b)


def geometric_grid(n_bins, q):
    """Breakpoints (k/N)^q, refining towards the neutral fixed point."""
    if q < 1:
        raise ValueError("q must be >= 1")
    b = (np.arange(n_bins + 1) / n_bins) ** q
    b[-1] = 1.0
    return PartitionGrid(n_bins, "geometric", b)


def default_geometric_grid(n_bins, alpha):
    return geometric_grid(n_bins, max(2.0, 1.0 / alpha))


def _branch_masses(grid_b, pre, lo, hi):
    """Overlap lengths of bins [b_i, b_i+1] with preimage bins [pre_j, pre_j+1] inside [lo, hi]."""
    inside = grid_b[(grid_b > lo) & (grid_b < hi)]
    pts = np.unique(np.concatenate([[lo, hi], inside, pre]))
    length = np.diff(pts)
    keep = length > 0
    mids = 0.5 * (pts[1:] + pts[:-1])[keep]
    length = length[keep]
    n = grid_b.size - 1
    rows = np.clip(np.searchsorted(grid_b, mids, side="right") - 1, 0, n - 1)
    cols = np.clip(np.searchsorted(pre, mids, side="right") - 1, 0, n - 1)
    return rows, cols, length


def ulam_matrix(gamma, grid):
    """Exact Ulam matrix of the single map T_gamma on ``grid`` (CSR)."""
    b = grid.breakpoints
    n = grid.n_bins
    left_pre = np.asarray(invert_left(gamma, b))
    left_pre[-1] = 0.5
    right_pre = (b + 1.0) / 2.0
    r1, c1, m1 = _branch_masses(b, left_pre, 0.0, 0.5)
    r2, c2, m2 = _branch_masses(b, right_pre, 0.5, 1.0)
    rows = np.concatenate([r1, r2])
    cols = np.concatenate([c1, c2])
    mass = np.concatenate([m1, m2])
    mat = sp.coo_matrix((mass, (rows, cols)), shape=(n, n)).tocsr()
    mat.sum_duplicates()
    return sp.diags(1.0 / grid.widths) @ mat


def annealed_matrix(params, grid):
    """p1 * Ulam(T_alpha) + p2 * Ulam(T_beta)."""
    return (params.p1 * ulam_matrix(params.alpha, grid)
            + params.p2 * ulam_matrix(params.beta, grid)).tocsr()


@dataclasses.dataclass(eq=False)
class DensityVector:
    values: np.ndarray
    grid: PartitionGrid
    residual: float = math.nan
    iterations: int = 0
    converged: bool = True

    @property
    def masses(self):
        return self.values * self.grid.widths

    def mass_below(self, eps):
        """Invariant mass of [0, eps] (partial bins counted proportionally)."""
        b = self.grid.breakpoints
        lo, hi = b[:-1], b[1:]
        frac = np.clip((eps - lo) / (hi - lo), 0.0, 1.0)
        return float(np.sum(self.masses * frac))

    def l1_distance(self, other):
        """L1(m) distance between two densities, possibly on different grids."""
        pts = np.union1d(self.grid.breakpoints, other.grid.breakpoints)
        mids = 0.5 * (pts[1:] + pts[:-1])
        f = self.values[np.searchsorted(self.grid.breakpoints, mids, "right") - 1]
        g = other.values[np.searchsorted(other.grid.breakpoints, mids, "right") - 1]
        return float(np.sum(np.abs(f - g) * np.diff(pts)))


def stationary_density(matrix, grid, tol=1e-10, max_iter=200_000, method="power"):
    """Invariant density of a row-stochastic Ulam matrix.

    ``method="power"`` iterates mu <- mu M from the uniform density until the
    L1 residual ||mu M - mu|| drops below ``tol``; if ``max_iter`` is hit the
    result comes back with ``converged=False``.  ``method="direct"`` solves the
    singular linear system with a normalisation row and is meant for small
    grids.
    """
    widths = grid.widths
    mt = matrix.T.tocsr()
    if method == "direct":
        n = grid.n_bins
        a = (mt - sp.identity(n, format="csr")).tolil()
        a[n - 1, :] = 1.0
        rhs = np.zeros(n)
        rhs[n - 1] = 1.0
        mu = spla.spsolve(a.tocsc(), rhs)
        mu = np.clip(mu, 0.0, None)
        mu /= mu.sum()
        res = float(np.abs(mt @ mu - mu).sum())
        return DensityVector(mu / widths, grid, res, 1, True)
    if method != "power":
        raise ValueError(f"unknown method {method!r}")
    mu = widths.copy()
    res = math.inf
    it = 0
    check_every = 16
    while it < max_iter:
        for _ in range(check_every - 1):
            mu = mt @ mu
        new = mt @ mu
        it += check_every
        res = float(np.abs(new - mu).sum())
        mu = new / new.sum()
        if res < tol:
            break
    return DensityVector(mu / widths, grid, res, it, res < tol)


@dataclasses.dataclass(frozen=True)
class Observable:
    """Function on [0, 1] with a regularity tag.

    ``antiderivative`` (optional) gives exact bin averages; without it bin
    averages use 8-point Gauss-Legendre quadrature.
    """

    name: str
    func: Callable[[np.ndarray], np.ndarray]
    regularity: str = "holder"
    holder_exponent: Optional[float] = 1.0
    holder_constant: Optional[float] = 1.0
    sup_norm: float = 1.0
    antiderivative: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __call__(self, x):
        return self.func(np.asarray(x, dtype=float))

    @property
    def is_holder(self):
        return self.regularity == "holder"

    def bin_averages(self, grid):
        b = grid.breakpoints
        if self.antiderivative is not None:
            F = self.antiderivative(b)
            return np.diff(F) / grid.widths
        nodes, weights = np.polynomial.legendre.leggauss(8)
        lo, hi = b[:-1, None], b[1:, None]
        x = 0.5 * (hi - lo) * nodes[None, :] + 0.5 * (hi + lo)
        return 0.5 * (self.func(x) * weights[None, :]).sum(axis=1)


IDENTITY = Observable("x", lambda x: x, "holder", 1.0, 1.0, 1.0,
                      lambda x: 0.5 * x * x)
RIGHT_INDICATOR = Observable("indicator_right", lambda x: np.asarray(x >= 0.5, dtype=float),
                             "bounded", None, None, 1.0,
                             lambda x: np.maximum(x - 0.5, 0.0))
COS2PI = Observable("cos2pi", lambda x: np.cos(2 * np.pi * x), "holder", 1.0,
                    2 * np.pi, 1.0, lambda x: np.sin(2 * np.pi * x) / (2 * np.pi))
CONSTANT = Observable("one", lambda x: np.ones_like(x), "holder", 1.0, 0.0, 1.0,
                      lambda x: x)

OBSERVABLES = {o.name: o for o in (IDENTITY, RIGHT_INDICATOR, COS2PI, CONSTANT)}


def _check_psi(psi, allow_irregular):
    if not psi.is_holder and not allow_irregular:
        raise ValueError(
            f"observable {psi.name!r} is not Holder; pass allow_irregular_psi=True "
            "to use it in the psi slot")


def correlation_operator(matrix, density, phi, psi, n_max, allow_irregular_psi=False):
    """Cor_n(phi, psi) = int phi o T^n psi dmu - int phi dmu int psi dmu, n = 0..n_max.

    Evaluated as <phi, P^n((psi - <psi, f*>) f*)> with the Ulam matrix standing
    in for P and bin averages for the observables.  Centering psi first is
    exact for an invariant f* and keeps the tiny non-invariance of a numerical
    f* from leaking into Cor_n.
    """
    _check_psi(psi, allow_irregular_psi)
    grid = density.grid
    mt = matrix.T.tocsr()
    mu = density.masses
    phib = phi.bin_averages(grid)
    psib = psi.bin_averages(grid)
    mean_psi = float(psib @ mu)
    v = (psib - mean_psi) * mu
    out = np.empty(n_max + 1)
    for n in range(n_max + 1):
        out[n] = float(phib @ v)
        v = mt @ v
    return out


def sample_stationary(params, samples, burn_in, rng, chunk=64):
    """Walkers started uniform on [0, 1] and run ``burn_in`` annealed steps."""
    x = rng.random(samples)
    done = 0
    while done < burn_in:
        k = min(chunk, burn_in - done)
        sym = sample_symbol_array(rng, (k, samples), params)
        _kernels.forward_chunk(x, sym, params.alpha, params.beta)
        done += k
    return x


def correlation_mc(params, phi, psi, n_max, samples=100_000, burn_in=10_000, seed=0,
                   allow_irregular_psi=False):
    """Monte Carlo annealed correlations with standard errors.

    Each walker starts from the end of its own burn-in orbit and then follows
    a fresh i.i.d. symbol word.  For lag n the estimator is the sample
    covariance of phi(x_n) and psi(x_0); its standard error comes from the
    per-walker products (x_0, x_n are independent across walkers).
    """
    _check_psi(psi, allow_irregular_psi)
    rng = make_rng(seed)
    x = sample_stationary(params, samples, burn_in, rng)
    psi0 = psi(x)
    psi_c = psi0 - psi0.mean()
    cor = np.empty(n_max + 1)
    se = np.empty(n_max + 1)
    for n in range(n_max + 1):
        if n > 0:
            sym = sample_symbol_array(rng, (1, samples), params)
            _kernels.forward_chunk(x, sym, params.alpha, params.beta)
        ph = phi(x)
        prod = (ph - ph.mean()) * psi_c
        cor[n] = prod.sum() / (samples - 1)
        se[n] = prod.std(ddof=1) / math.sqrt(samples)
    return cor, se


@dataclasses.dataclass
class ProductStructureReport:
    orbit_len: int
    bins: int
    histogram: np.ndarray          # shape (bins_x, bins_omega), total mass 1
    omega_marginal_l1: float
    max_slice_l1: float
    marginal_scale: float          # sqrt(bins / orbit_len)
    slice_scale: float             # sqrt(bins^2 / orbit_len)
    total_mass: float


def product_structure_test(params, orbit_len=1_000_000, bins=16, seed=0, x0=None,
                           lookahead=80):
    """Check that a long skew-product orbit equidistributes like f*(x) dx x dw.

    The noise coordinate is rebuilt from the future symbols, w_k being the
    point coded by s_k s_{k+1} ... (exact to max(p1, p2)^lookahead), so the
    orbit is a genuine S-orbit of a Lebesgue-typical starting point.
    """
    rng = make_rng(seed)
    sym = sample_symbol_array(rng, orbit_len + lookahead, params)
    if x0 is None:
        x0 = float(rng.random())
    xs, ws = _kernels.coded_skew_orbit(float(x0), sym, orbit_len - 1,
                                       params.alpha, params.beta, params.p1)
    hist, _, _ = np.histogram2d(xs, ws, bins=bins, range=[[0, 1], [0, 1]])
    hist /= orbit_len
    omega_marg = hist.sum(axis=0)
    marg_l1 = float(np.abs(omega_marg - 1.0 / bins).sum())
    cond = hist / np.where(omega_marg > 0, omega_marg, 1.0)[None, :]
    diffs = np.abs(cond[:, :, None] - cond[:, None, :]).sum(axis=0)
    return ProductStructureReport(
        orbit_len=orbit_len,
        bins=bins,
        histogram=hist,
        omega_marginal_l1=marg_l1,
        max_slice_l1=float(diffs.max()),
        marginal_scale=math.sqrt(bins / orbit_len),
        slice_scale=math.sqrt(bins * bins / orbit_len),
        total_mass=float(hist.sum()),
    )


def local_exponent_near_zero(density, x_max=0.05, x_min=None):
    """Fitted exponent a in f*(x) ~ x^a on bins inside [x_min, x_max].

    Reported only; nothing downstream depends on it.
    """
    c = density.grid.centers
    if x_min is None:
        x_min = density.grid.breakpoints[4]
    sel = (c >= x_min) & (c <= x_max) & (density.values > 0)
    if np.count_nonzero(sel) < 3:
        return math.nan
    slope = np.polyfit(np.log(c[sel]), np.log(density.values[sel]), 1)[0]
    return float(slope)
