"""Young tower over the base (1/2, 1] x [0, 1) of the skew product.

Backward orbits.  For a noise point w with symbols s_0 s_1 s_2 ...

    x_1(w) = 1/2,   x_n(w) = T_{s_0}^{-1}|_[0,1/2] ( x_{n-1}(phi w) ),

so x_n depends on s_0..s_{n-2} only and is obtained by folding the left
inverses over the word from position n-2 down to 0.  On the right branch

    x'_0 = 1,  x'_1 = 3/4,  x'_n(w) = (x_n(phi w) + 1) / 2   (n >= 2),

which uses the *shifted* word s_1..s_{n-1}.  Points of J_n(w) = (x'_n, x'_{n-1}]
return to (1/2, 1] after exactly n steps, which gives the return time R and
the base cells Delta^j_{0,i} = {(x, w): x in J_i(w), w in [s_0..s_{i-1}]}.

Expectations over the noise are E x_n = sum over words of weight * x_n.  They
are computed exactly by enumerating all 2^(n-1) words up to ``N_ENUM`` and by
Monte Carlo beyond.  The Monte Carlo uses the fact that the word is i.i.d.:
folding it from the inside out has the same law as a forward chain
y_1 = 1/2, y_{k+1} = T_{xi_k}^{-1}(y_k) with fresh symbols xi_k, so a single
chain of length K samples x_k for every k <= K at once.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np
import scipy.special

from randlsv import _kernels
from randlsv.maps import _check_gamma
from randlsv.system import (
    SkewPoint,
    all_words,
    as_symbols,
    cylinder_of,
    make_rng,
    noise_step,
    sample_symbol_array,
    symbol_of,
)

N_ENUM = 22
DEFAULT_MC_SAMPLES = 100_000


class CapExceeded(RuntimeError):
    """An iteration bound was reached before the event of interest."""


class TruncationNotConverged(ArithmeticError):
    pass


def pure_backward(gamma, n):
    """x_1^g, ..., x_n^g: backward orbit of 1/2 under one fixed left inverse."""
    _check_gamma(gamma)
    if n < 1:
        raise ValueError("n must be >= 1")
    return _kernels.pure_backward_kernel(float(gamma), int(n))


def pure_backward_asymptote(gamma):
    """Limit of x_n^g n^(1/g); the continuum flow dx/dn = -2^g x^(1+g) gives (g 2^g)^(-1/g)."""
    _check_gamma(gamma)
    return (gamma * 2.0 ** gamma) ** (-1.0 / gamma)


def _fold_all(gam, n):
    """x_1..x_n for the word whose per-position exponents are ``gam``."""
    v = np.full(n, 0.5)
    for j in range(n - 2, -1, -1):
        v[j + 1:] = _kernels.invert_left_ufunc(gam[j], v[j + 1:])
    return v


@dataclasses.dataclass(frozen=True, eq=False)
class BackwardOrbit:
    """x_1..x_n (``xs``) and x'_0..x'_m (``xps``) along one word.

    ``xps`` stops at m = min(n, len(word)) since x'_k needs k symbols.
    """

    word: np.ndarray
    xs: np.ndarray
    xps: np.ndarray

    def x(self, n):
        return float(self.xs[n - 1])

    def xp(self, n):
        return float(self.xps[n])

    def J(self, n):
        """J_n = (x'_n, x'_{n-1}] as a (lo, hi) pair."""
        return float(self.xps[n]), float(self.xps[n - 1])

    def I(self, n):
        """I_n = (x_{n+1}, x_n]."""
        return float(self.xs[n]), float(self.xs[n - 1])


def random_backward(word, params, n=None):
    """Backward orbit x_n(w), x'_n(w) along a symbol word.

    ``n`` defaults to ``len(word)``; the word must have at least n - 1
    symbols.
    """
    sym = as_symbols(word)
    if n is None:
        n = max(len(sym), 1)
    if n < 1:
        raise ValueError("n must be >= 1")
    if len(sym) < n - 1:
        raise ValueError(f"word of length {len(sym)} too short for depth {n}")
    gam = params.gammas[sym]
    xs = _fold_all(gam, n)
    m = min(n, len(sym))
    xps = np.empty(m + 1)
    xps[0] = 1.0
    if m >= 1:
        xps[1] = 0.75
    if m >= 2:
        shifted = _fold_all(gam[1:], m)
        xps[2:] = (shifted[1:m] + 1.0) / 2.0
    return BackwardOrbit(sym, xs, xps)


def backward_point(word, params):
    """x_{L+1}(w) for a word of length L (a single fold)."""
    sym = as_symbols(word)
    y = 0.5
    for s in sym[::-1]:
        y = _kernels.invert_left_scalar(params.gammas[s], y)
    return y


def backward_points(words, params):
    """x_{L+1} for every row of an ``(m, L)`` symbol array."""
    words = np.asarray(words, dtype=np.uint8)
    gam = params.gammas
    y = np.full(words.shape[0], 0.5)
    for j in range(words.shape[1] - 1, -1, -1):
        y = _kernels.invert_left_ufunc(gam[words[:, j]], y)
    return y


def xprime(word, n, params):
    """x'_n(w); uses symbols s_1..s_{n-1} of the word."""
    if n == 0:
        return 1.0
    if n == 1:
        return 0.75
    sym = as_symbols(word)
    if len(sym) < n:
        raise ValueError(f"x'_{n} needs a word of length >= {n}")
    return (backward_point(sym[1:n], params) + 1.0) / 2.0


def enumerate_level(n, params):
    """Values x_n(w) and weights for all 2^(n-1) words of length n - 1.

    Row k of the output corresponds to the word whose symbols are the binary
    digits of k, most significant first (so rows follow ``all_words``).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    vals = np.array([0.5])
    wts = np.array([1.0])
    for _ in range(n - 1):
        # prepend a symbol: x_n(s0 + w) = T_{s0}^{-1}(x_{n-1}(w))
        vals = np.concatenate([
            _kernels.invert_left_ufunc(params.alpha, vals),
            _kernels.invert_left_ufunc(params.beta, vals),
        ])
        wts = np.concatenate([params.p1 * wts, params.p2 * wts])
    return vals, wts


def expectations_exact(n_max, params, n_enum=N_ENUM):
    """E x_1, ..., E x_{n_max} by exhaustive enumeration (one pass)."""
    if n_max > n_enum:
        raise ValueError(f"exact enumeration limited to n <= {n_enum}; use expectation_mc")
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    out = np.empty(n_max)
    vals = np.array([0.5])
    wts = np.array([1.0])
    out[0] = 0.5
    for k in range(1, n_max):
        vals = np.concatenate([
            _kernels.invert_left_ufunc(params.alpha, vals),
            _kernels.invert_left_ufunc(params.beta, vals),
        ])
        wts = np.concatenate([params.p1 * wts, params.p2 * wts])
        out[k] = math.fsum(wts * vals)
    return out


def expectation_exact(n, params, n_enum=N_ENUM):
    """E x_n over the noise, exact up to the root-solver tolerance."""
    return float(expectations_exact(n, params, n_enum)[-1])


@dataclasses.dataclass
class ChainMoments:
    """Monte Carlo sums of x_k over ``samples`` backward chains, k = 1..K."""

    samples: int
    sums: np.ndarray
    sumsq: np.ndarray

    @property
    def mean(self):
        return self.sums / self.samples

    @property
    def se(self):
        s = self.samples
        var = np.maximum(self.sumsq / s - self.mean ** 2, 0.0) * s / max(s - 1, 1)
        return np.sqrt(var / s)


def backward_chain_moments(k_max, samples, seed, params, chunk=None):
    """Run ``samples`` backward chains for k_max - 1 random inverse steps.

    Index k - 1 of the returned arrays refers to x_k; x_1 = 1/2 exactly.
    Symbols are drawn row by row from the package Philox stream, so the
    values at step k depend only on (seed, samples) and not on k_max or the
    block size.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = make_rng(seed)
    sums = np.empty(k_max)
    sumsq = np.empty(k_max)
    sums[0] = 0.5 * samples
    sumsq[0] = 0.25 * samples
    y = np.full(samples, 0.5)
    if chunk is None:
        chunk = max(1, min(256, 4_000_000 // samples))
    done = 1
    while done < k_max:
        k = min(chunk, k_max - done)
        sym = sample_symbol_array(rng, (k, samples), params)
        _kernels.backward_chain_chunk(y, sym, params.alpha, params.beta, sums, sumsq, done)
        done += k
    return ChainMoments(samples, sums, sumsq)


def expectation_mc(n, samples, seed, params):
    """Monte Carlo estimate of E x_n; returns (mean, standard error)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    mom = backward_chain_moments(n, samples, seed, params)
    return float(mom.mean[-1]), float(mom.se[-1])


@dataclasses.dataclass
class ExpectationTable:
    """E x_k for k = 1..K: exact for k <= n_enum, Monte Carlo above."""

    params: object
    mean: np.ndarray
    se: np.ndarray
    exact: np.ndarray          # boolean mask
    mc_mean: np.ndarray        # nan where no MC value
    samples: int
    seed: int

    @property
    def k_max(self):
        return self.mean.size

    def E(self, k):
        """E x_k, with the convention E x_0 = 1 (x_0 = 1 makes x'_0 = 1)."""
        k = np.asarray(k)
        out = np.where(k == 0, 1.0, self.mean[np.maximum(k, 1) - 1])
        return float(out) if out.ndim == 0 else out

    def rows(self, ns=None):
        """(n, E_exact, E_mc, se, x_n_alpha, x_n_beta) rows for export."""
        ns = np.arange(1, self.k_max + 1) if ns is None else np.asarray(ns)
        xa = pure_backward(self.params.alpha, int(ns.max()))
        xb = pure_backward(self.params.beta, int(ns.max()))
        out = []
        for n in ns:
            i = int(n) - 1
            out.append((int(n),
                        self.mean[i] if self.exact[i] else math.nan,
                        self.mc_mean[i],
                        self.se[i],
                        xa[i], xb[i]))
        return out


def expectation_table(k_max, params, samples=DEFAULT_MC_SAMPLES, seed=0, n_enum=N_ENUM):
    """Hybrid table of E x_k, k = 1..k_max.

    All k > n_enum share one batch of ``samples`` backward chains (see the
    module docstring), so every k gets ``samples`` Monte Carlo draws.
    """
    n_ex = min(k_max, n_enum)
    mean = np.empty(k_max)
    se = np.zeros(k_max)
    exact = np.zeros(k_max, dtype=bool)
    mc_mean = np.full(k_max, math.nan)
    mean[:n_ex] = expectations_exact(n_ex, params, n_enum)
    exact[:n_ex] = True
    if k_max > n_enum:
        mom = backward_chain_moments(k_max, samples, seed, params)
        mean[n_ex:] = mom.mean[n_ex:]
        se[n_ex:] = mom.se[n_ex:]
        mc_mean[:] = mom.mean
    return ExpectationTable(params, mean, se, exact, mc_mean, samples, seed)


def cell_measure(i, params, table=None, **kw):
    """(m x m)(Delta_{0,i}) = (1/2)[E x_{i-1} - E x_i], with E x_0 := 1.

    i = 1 gives 1/4 (J_1 = (3/4, 1] over the whole noise fibre).  Without a
    precomputed ``table`` the expectations are computed (exactly when
    possible, keyword arguments go to :func:`expectation_table`).
    """
    if i < 1:
        raise ValueError("i must be >= 1")
    if i == 1:
        return 0.25
    if table is None or table.k_max < i:
        table = expectation_table(i, params, **kw)
    return 0.5 * (table.E(i - 1) - table.E(i))


def cell_measures(table):
    """(m x m)(Delta_{0,i}) for i = 1..K from an expectation table."""
    e = np.concatenate([[1.0], table.mean])
    out = 0.5 * (e[:-1] - e[1:])
    out[0] = 0.25
    return out


def expected_return_time(table, k_max=None):
    """int R d(m x m) over the base, truncated: sum_{i<=K} i m(Delta_{0,i}).

    The cells above K carry mass 1/2 E x_K; they are counted with return time
    K, which makes the value a lower bound.
    """
    k_max = table.k_max if k_max is None else k_max
    cm = cell_measures(table)[:k_max]
    i = np.arange(1, k_max + 1)
    return float(np.sum(i * cm) + k_max * 0.5 * table.E(k_max))


@dataclasses.dataclass
class TailTable:
    """(m x m){R_hat > n} on an n grid, with truncation diagnostics.

    ``values`` = 1/2 (sum_{n<k<=K} E x_k + remainder) where the remainder beyond
    K is extrapolated from a local power-law fit of E x_k on [K/2, K].
    ``bound`` is the cruder remainder bound from E x_k <= x_k^beta <= C k^(-1/beta);
    ``certified`` marks rows where that bound is below 1% of the value.
    """

    n: np.ndarray
    values: np.ndarray
    k_max: np.ndarray
    remainder: np.ndarray
    bound: np.ndarray
    stopped: np.ndarray        # stopping rule satisfied within the table
    certified: np.ndarray
    method: str

    @property
    def converged(self):
        return bool(np.all(self.stopped))


def _local_power_fit(k, e):
    sl, ic = np.polyfit(np.log(k), np.log(e), 1)
    return -sl, math.exp(ic)


def _beta_constant(params, k_max):
    xb = pure_backward(params.beta, k_max)
    k = np.arange(1, k_max + 1)
    return max(float(np.max(xb * k ** (1.0 / params.beta))),
               pure_backward_asymptote(params.beta))


def tail_Rhat(n_grid, params, table=None, rel_stop=1e-4, min_factor=4, strict=False, **kw):
    """Tail of the tower height function, (1/2) sum_{k>n} E x_k.

    For each n the sum runs to the first K >= ``min_factor * n`` at which the
    next term is below ``rel_stop`` times the running sum.  If the table
    ends before that, the row is flagged (``stopped`` False) and summed to the
    end of the table; ``strict=True`` raises instead.
    """
    n_grid = np.asarray(n_grid, dtype=int)
    if np.any(np.diff(n_grid) <= 0) or n_grid[0] < 1:
        raise ValueError("n grid must be increasing positive integers")
    if table is None:
        table = expectation_table(int(min_factor * n_grid[-1] * 4), params, **kw)
    e = table.mean
    kmax_tab = table.k_max
    c_beta = _beta_constant(params, min(kmax_tab, 100_000))
    vals = np.empty(n_grid.size)
    kmax = np.empty(n_grid.size, dtype=int)
    rem = np.empty(n_grid.size)
    bnd = np.empty(n_grid.size)
    stopped = np.zeros(n_grid.size, dtype=bool)
    for r, n in enumerate(n_grid):
        if n + 1 > kmax_tab:
            raise ValueError(f"expectation table too short for n={n}")
        cum = np.cumsum(e[n:])          # cum[j] = sum_{k=n+1}^{n+1+j} E x_k
        ks = np.arange(n + 1, kmax_tab + 1)
        ok = (ks >= min_factor * n) & (ks < kmax_tab)
        nxt = np.empty_like(cum)
        nxt[:-1] = e[n + 1:]
        nxt[-1] = math.inf
        ok &= nxt < rel_stop * cum
        if np.any(ok):
            j = int(np.argmax(ok))
            stopped[r] = True
        else:
            j = cum.size - 1
            if strict:
                raise TruncationNotConverged(f"tail sum for n={n} did not meet the stopping rule")
        K = int(ks[j])
        lo = max(n + 1, K // 2)
        a, c = _local_power_fit(np.arange(lo, K + 1), e[lo - 1:K])
        rem[r] = c * scipy.special.zeta(a, K + 1) if a > 1 else math.inf
        bnd[r] = c_beta * scipy.special.zeta(1.0 / params.beta, K + 1)
        vals[r] = 0.5 * (cum[j] + rem[r])
        kmax[r] = K
    method = "exact-enumeration" if kmax_tab <= N_ENUM else "hybrid"
    certified = 0.5 * bnd <= 0.01 * vals
    return TailTable(n_grid, vals, kmax, 0.5 * rem, 0.5 * bnd, stopped, certified, method)


def tail_double_sum(n, table, k_max=None):
    """sum_{l>=n+1} sum_{i>=l+1} m(Delta_{0,i}), truncated at cells i <= K.

    Equals (1/2)[sum_{k=n+1}^{K-1} E x_k - (K-n-1) E x_K]; as K grows it
    converges to the tail (1/2) sum_{k>n} E x_k.
    """
    k_max = table.k_max if k_max is None else k_max
    cm = cell_measures(table)
    total = 0.0
    for i in range(n + 2, k_max + 1):
        total += (i - n - 1) * cm[i - 1]
    return total


# ---------------------------------------------------------------- return times


def return_time(z, params, cap=100_000):
    """First n >= 1 with the x coordinate of S^n(z) in (1/2, 1].

    ``z`` must lie in the base (x > 1/2).  The noise coordinate is iterated in
    floating point; :func:`return_time_word` takes the symbols explicitly.
    """
    if not z.x > 0.5:
        raise ValueError("return time is defined on the base x > 1/2")
    x, w = z.x, z.omega
    gam = params.gammas
    for n in range(1, cap + 1):
        s = symbol_of(w, params)
        x = float(_kernels.lsv_scalar(gam[s], x))
        w = noise_step(w, params)
        if x > 0.5:
            return n
    raise CapExceeded(f"no return within {cap} steps")


def return_time_word(x, word, params):
    """Return time of (x, w) when w's symbols are given as ``word``."""
    sym = as_symbols(word)
    gam = params.gammas
    for n in range(1, len(sym) + 1):
        x = float(_kernels.lsv_scalar(gam[sym[n - 1]], x))
        if x > 0.5:
            return n
    raise CapExceeded(f"no return within the {len(sym)} supplied symbols")


def j_index(x, word, params):
    """The i with x in J_i(w) = (x'_i(w), x'_{i-1}(w)], from backward orbits only."""
    if not 0.5 < x <= 1.0:
        raise ValueError("x must lie in (1/2, 1]")
    sym = as_symbols(word)
    if x > 0.75:
        return 1
    for i in range(2, len(sym) + 1):
        if x > xprime(sym, i, params):
            return i
    raise CapExceeded(f"x not bracketed by the first {len(sym)} symbols")


# ---------------------------------------------------------------- base partition


@dataclasses.dataclass(frozen=True)
class BaseCell:
    """Delta^j_{0,i}: x in (xprime_i, xprime_im1], omega in [omega_lo, omega_hi)."""

    i: int
    word: str
    omega_lo: float
    omega_hi: float
    xprime_i: float
    xprime_im1: float

    @property
    def measure(self):
        return (self.omega_hi - self.omega_lo) * (self.xprime_im1 - self.xprime_i)


def base_partition(i_max, params):
    """All cells Delta^j_{0,i} with i <= i_max (2 + 4 + ... + 2^i_max of them).

    Cells of equal i are listed in lexicographic word order (A < B), which is
    also increasing order of their noise intervals.
    """
    if i_max < 1:
        raise ValueError("i_max must be >= 1")
    cells = []
    for i in range(1, i_max + 1):
        words = all_words(i)
        if i == 1:
            hi_x = np.full(words.shape[0], 1.0)
            lo_x = np.full(words.shape[0], 0.75)
        else:
            lo_x = (backward_points(words[:, 1:i], params) + 1.0) / 2.0
            if i == 2:
                hi_x = np.full(words.shape[0], 0.75)
            else:
                hi_x = (backward_points(words[:, 1:i - 1], params) + 1.0) / 2.0
        for w, lo, hi in zip(words, lo_x, hi_x):
            a, b = cylinder_of(w, params)
            cells.append(BaseCell(i, "".join("AB"[s] for s in w), a, b, float(lo), float(hi)))
    return cells


# ---------------------------------------------------------------- separation


def _cell_and_image(x, w, params, cap):
    """Return-time cell (R, word) of (x, w) and the image S^R(x, w)."""
    gam = params.gammas
    syms = []
    for _ in range(cap):
        s = 0 if w < params.p1 else 1
        syms.append(s)
        x = float(_kernels.lsv_scalar(gam[s], x))
        w = noise_step(w, params)
        if x > 0.5:
            return (len(syms), tuple(syms)), x, w
    raise CapExceeded(f"no return within {cap} steps")


def return_map(z, params, cap=100_000):
    """S^R(z) together with the cell (R, word) that z belongs to."""
    cell, x, w = _cell_and_image(z.x, z.omega, params, cap)
    return SkewPoint(x, w), cell


def separation_time(z1, z2, params, cap=200, step_cap=100_000):
    """Smallest n >= 0 with (S^R)^n z1, (S^R)^n z2 in different cells.

    Raises :class:`CapExceeded` if the two points are still together after
    ``cap`` returns.
    """
    for z in (z1, z2):
        if not z.x > 0.5:
            raise ValueError("separation time is defined on the base x > 1/2")
    x1, w1, x2, w2 = z1.x, z1.omega, z2.x, z2.omega
    for n in range(cap + 1):
        c1, x1, w1 = _cell_and_image(x1, w1, params, step_cap)
        c2, x2, w2 = _cell_and_image(x2, w2, params, step_cap)
        if c1 != c2:
            return n
    raise CapExceeded(f"points not separated after {cap} returns")


def separation_time_word(x1, x2, word_fn, params, cap=200, step_cap=100_000):
    """Separation time for two points sharing one noise coordinate.

    ``word_fn(k)`` must return the k-th symbol of the common noise point.
    Used for pairs that differ only in x, where a float noise orbit would be
    wasted effort.
    """
    gam = params.gammas
    pos = 0
    for n in range(cap + 1):
        r1 = r2 = None
        a, b = x1, x2
        for t in range(step_cap):
            s = word_fn(pos + t)
            if r1 is None:
                a = float(_kernels.lsv_scalar(gam[s], a))
                if a > 0.5:
                    r1 = t + 1
            if r2 is None:
                b = float(_kernels.lsv_scalar(gam[s], b))
                if b > 0.5:
                    r2 = t + 1
            if r1 is not None and r2 is not None:
                break
            if (r1 is None) != (r2 is None):
                return n
        else:
            raise CapExceeded(f"no return within {step_cap} steps")
        if r1 != r2:
            return n
        pos += r1
        x1, x2 = a, b
    raise CapExceeded(f"points not separated after {cap} returns")


def omega_in_cell(word, params):
    """Midpoint of the noise cylinder of ``word``."""
    a, b = cylinder_of(word, params)
    return 0.5 * (a + b)


__all__ = [
    "BackwardOrbit",
    "BaseCell",
    "CapExceeded",
    "ExpectationTable",
    "N_ENUM",
    "TailTable",
    "TruncationNotConverged",
    "backward_chain_moments",
    "backward_point",
    "backward_points",
    "base_partition",
    "cell_measure",
    "cell_measures",
    "enumerate_level",
    "expectation_exact",
    "expectation_mc",
    "expectation_table",
    "expectations_exact",
    "expected_return_time",
    "j_index",
    "pure_backward",
    "random_backward",
    "return_map",
    "return_time",
    "return_time_word",
    "separation_time",
    "tail_Rhat",
    "xprime",
]
