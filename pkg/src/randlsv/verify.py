"""Numerical certification of the estimates behind the tower construction.

Every check returns a :class:`CheckResult` whose ``worst_margin`` is the
smallest slack over all tested cases (negative means violated).  The
lemma-style checks are exhaustive over all words up to a depth and sampled
beyond; :func:`lemma_suite` runs a selection of them and collects a ledger.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Optional

import numpy as np
import scipy.optimize
import scipy.special
import scipy.stats

from randlsv import _kernels
from randlsv.maps import lsv_eval, schwarzian, schwarzian_threshold
from randlsv.system import (
    SystemParams,
    all_words,
    as_symbols,
    cylinder_of,
    make_rng,
    SkewPoint,
    noise_step,
)
from randlsv.tower import (
    CapExceeded,
    backward_points,
    cell_measure,
    enumerate_level,
    pure_backward,
    separation_time,
)

THETA = 0.5
MARGIN_TOL = 1e-12
DEFAULT_MIN_N = 50


# ------------------------------------------------------------------ fitting


class InsufficientPoints(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class PowerLawFit:
    exponent: float
    stderr: float
    window: tuple
    r_squared: float
    n_points: int
    prefactor: float

    def interval(self, k=1.0):
        return self.exponent - k * self.stderr, self.exponent + k * self.stderr


def fit_power_law(n, series, window=None, se=None, noise_factor=3.0, min_points=8):
    """Least-squares slope of log|series| against log n.

    Points outside ``window`` (inclusive; default n >= 50), non-positive
    magnitudes, and - when standard errors ``se`` are given - values below
    ``noise_factor * se`` are dropped before fitting.
    """
    n = np.asarray(n, dtype=float)
    y = np.abs(np.asarray(series, dtype=float))
    if window is None:
        window = (DEFAULT_MIN_N, float(n.max()))
    lo, hi = window
    if not lo < hi:
        raise ValueError("window must satisfy n_lo < n_hi")
    keep = (n >= lo) & (n <= hi) & (y > 0) & np.isfinite(y)
    if se is not None:
        keep &= y > noise_factor * np.asarray(se, dtype=float)
    if np.count_nonzero(keep) < min_points:
        raise InsufficientPoints(
            f"only {np.count_nonzero(keep)} usable points in window {window}")
    res = scipy.stats.linregress(np.log(n[keep]), np.log(y[keep]))
    stderr = float(res.stderr) if np.isfinite(res.stderr) else 0.0
    return PowerLawFit(float(res.slope), stderr, (lo, hi), float(res.rvalue ** 2),
                       int(np.count_nonzero(keep)), float(math.exp(res.intercept)))


# ------------------------------------------------------------------ ledger


@dataclasses.dataclass
class CheckResult:
    check: str
    params: dict
    n_cases: int
    worst_margin: float
    passed: bool
    counterexample: Optional[dict] = None
    details: dict = dataclasses.field(default_factory=dict)

    def as_dict(self):
        out = {"check": self.check, "params": self.params, "n_cases": self.n_cases,
               "worst_margin": self.worst_margin, "pass": bool(self.passed)}
        if self.counterexample is not None:
            out["counterexample"] = self.counterexample
        if self.details:
            out["details"] = self.details
        return out


def _result(check, params, margins, tol=MARGIN_TOL, context=None, details=None):
    margins = np.asarray(margins, dtype=float).ravel()
    worst = int(np.argmin(margins))
    passed = bool(margins[worst] >= -tol)
    cex = None
    if not passed and context is not None:
        cex = context(worst)
    return CheckResult(check, params, int(margins.size), float(margins[worst]) + 0.0,
                       passed, cex, details or {})


def _pdict(params):
    return params.as_dict() if isinstance(params, SystemParams) else dict(params)


# ------------------------------------------------------------------ lemma checks


def check_domination(params, n_grid=10_000):
    """T_alpha(x) > T_beta(x) on (0, 1/2), equality at 0 and 1/2."""
    x = np.linspace(0.0, 0.5, n_grid + 2)[1:-1]
    diff = np.asarray(lsv_eval(params.alpha, x)) - np.asarray(lsv_eval(params.beta, x))
    ends = [lsv_eval(params.alpha, e) - lsv_eval(params.beta, e) for e in (0.0, 0.5)]
    # strict inequality inside, so the margin is the difference itself (tolerance 0)
    margins = np.concatenate([diff, -np.abs(ends)])
    res = _result("domination", _pdict(params), margins, tol=0.0,
                  context=lambda k: {"x": float(x[k]) if k < x.size else [0.0, 0.5][k - x.size]})
    if res.passed:
        res.passed = bool(np.all(diff > 0) and max(abs(e) for e in ends) == 0.0)
    return res


def check_corollary(params, n_grid=200):
    """T_alpha(y) >= T_beta(x) for 0 <= x <= y <= 1/2."""
    g = np.linspace(0.0, 0.5, n_grid + 1)
    xx, yy = np.meshgrid(g, g, indexing="ij")
    sel = xx <= yy
    ta = np.asarray(lsv_eval(params.alpha, yy[sel]))
    tb = np.asarray(lsv_eval(params.beta, xx[sel]))
    diff = ta - tb
    strict = ((xx[sel] > 0) & (yy[sel] < 0.5)) | (xx[sel] < yy[sel])
    margins = np.where(strict, np.where(diff > 0, diff, -np.inf), np.where(diff >= 0, diff, -np.inf))
    return _result("corollary", _pdict(params), margins, tol=0.0,
                   context=lambda k: {"x": float(xx[sel][k]), "y": float(yy[sel][k])})


def _word_str(row):
    return "".join("AB"[s] for s in row)


def bounds_margins(values, lower, upper):
    """min(value - lower, upper - value), elementwise."""
    values = np.asarray(values)
    return np.minimum(values - lower, upper - values)


def check_rough_bounds(params, depth=12, sampled_ns=(16, 32, 64, 128, 256, 512),
                       samples=10_000, seed=0):
    """x_n^alpha <= x_n(w) <= x_n^beta: every word for n <= depth, sampled above."""
    n_top = max([depth] + list(sampled_ns))
    xa = pure_backward(params.alpha, n_top)
    xb = pure_backward(params.beta, n_top)
    margins = []
    cex_data = []
    counts = {}
    for n in range(1, depth + 1):
        vals, _ = enumerate_level(n, params)
        margins.append(bounds_margins(vals, xa[n - 1], xb[n - 1]))
        cex_data.append((n, None, vals))
        counts[n] = int(vals.size)
    rng = make_rng(seed)
    for n in sampled_ns:
        if n <= depth:
            continue
        words = (rng.random((samples, n - 1)) >= params.p1).astype(np.uint8)
        vals = backward_points(words, params)
        margins.append(bounds_margins(vals, xa[n - 1], xb[n - 1]))
        cex_data.append((n, words, vals))
        counts[n] = samples
    flat = np.concatenate(margins)
    offsets = np.cumsum([0] + [m.size for m in margins])

    def context(k):
        blk = int(np.searchsorted(offsets, k, side="right") - 1)
        n, words, vals = cex_data[blk]
        j = k - offsets[blk]
        w = all_words(n - 1)[j] if words is None else words[j]
        return {"n": n, "word": _word_str(w), "x_n": float(vals[j]),
                "x_n_alpha": float(xa[n - 1]), "x_n_beta": float(xb[n - 1])}

    return _result("rough_bounds", _pdict(params), flat, context=context,
                   details={"cases_per_n": counts})


def check_k0_bound(params, depth=12):
    """x_n(w) <= x^alpha_K0 whenever more than K0 of the n symbols are A.

    x_n(w) only sees the first n - 1 symbols; the n-th is free, so the worst
    case of the hypothesis is a word of length n - 1 with at least K0 symbols
    A, which is what is enumerated here, for every K0 in 1..n-1.
    """
    xa = pure_backward(params.alpha, depth)
    margins = []
    where = []
    for n in range(2, depth + 1):
        vals, _ = enumerate_level(n, params)
        n_a = (n - 1) - all_words(n - 1).sum(axis=1)
        for k0 in range(1, n):
            sel = n_a >= k0
            if not np.any(sel):
                continue
            margins.append(xa[k0 - 1] - vals[sel])
            where.append((n, k0, np.flatnonzero(sel), vals[sel]))
    flat = np.concatenate(margins)
    offsets = np.cumsum([0] + [m.size for m in margins])

    def context(k):
        blk = int(np.searchsorted(offsets, k, side="right") - 1)
        n, k0, idx, vals = where[blk]
        j = k - offsets[blk]
        return {"n": n, "K0": k0, "word": _word_str(all_words(n - 1)[idx[j]]),
                "x_n": float(vals[j]), "x_K0_alpha": float(xa[k0 - 1])}

    return _result("k0_bound", _pdict(params), flat, context=context)


def check_aperiodicity(params):
    """Return times 1 and 2 both occur with positive measure (gcd 1)."""
    m1 = cell_measure(1, params)
    m2 = cell_measure(2, params)
    return _result("aperiodicity", _pdict(params), [m1, m2], tol=0.0,
                   details={"measure_R1": m1, "measure_R2": m2}) if min(m1, m2) > 0 else \
        CheckResult("aperiodicity", _pdict(params), 2, min(m1, m2), False)


# ------------------------------------------------------------------ Hoeffding


@dataclasses.dataclass(frozen=True)
class HoeffdingReport:
    n: int
    p0: float
    p1: float
    K0: float
    log_exact_tail: float
    log_bound: float

    @property
    def exact_tail(self):
        return math.exp(self.log_exact_tail)

    @property
    def bound(self):
        return math.exp(self.log_bound)

    @property
    def holds(self):
        return self.log_exact_tail <= self.log_bound


def log_binomial_cdf(k, n, p):
    """log P(Bin(n, p) <= k), summed in log space with a compensated sum."""
    if k < 0:
        return -math.inf
    k = min(int(k), n)
    j = np.arange(k + 1)
    terms = (scipy.special.gammaln(n + 1) - scipy.special.gammaln(j + 1)
             - scipy.special.gammaln(n - j + 1) + j * math.log(p) + (n - j) * math.log1p(-p))
    top = float(terms.max())
    return top + math.log(math.fsum(np.exp(terms - top)))


def hoeffding_report(n, p0, params):
    """Exact P(#A <= p0 n among n symbols) against exp(-2 n (p1 - p0)^2)."""
    p1 = params.p1 if isinstance(params, SystemParams) else float(params)
    if not 0.0 < p0 < p1:
        raise ValueError("need 0 < p0 < p1")
    k0 = p0 * n
    k = math.floor(k0 + 1e-9)
    log_tail = log_binomial_cdf(k, n, p1)
    return HoeffdingReport(n, p0, p1, k0, log_tail, -2.0 * n * (p1 - p0) ** 2)


def hoeffding_grid(k=5):
    """k x k grid of (p0, p1) with p1 spread over (0, 1) and p0 a fraction of p1."""
    p1s = (np.arange(k) + 0.5) / k
    fracs = (np.arange(k) + 0.5) / k
    return [(float(f * p1), float(p1)) for p1 in p1s for f in fracs]


def log_tails(n_max, p0, p1):
    """log P(#A <= floor(p0 n)) for n = 1..n_max in one pass.

    Same arithmetic as :func:`hoeffding_report`, with the binomial terms of
    all n laid out in a matrix.  Each row is summed with ``math.fsum`` over
    the terms within e^-60 of its largest one; the rest cannot move a double.
    """
    n = np.arange(1, n_max + 1)
    k = np.floor(p0 * n + 1e-9).astype(int)
    j = np.arange(int(k.max()) + 1)
    logfact = scipy.special.gammaln(np.arange(n_max + 1) + 1.0)
    nn, jj = n[:, None], j[None, :]
    terms = (logfact[nn] - logfact[jj] - logfact[np.abs(nn - jj)]
             + jj * math.log(p1) + (nn - jj) * math.log1p(-p1))
    terms = np.where(jj <= k[:, None], terms, -np.inf)
    top = terms.max(axis=1)
    rel = terms - top[:, None]
    out = np.empty(n_max)
    for r in range(n_max):
        row = rel[r]
        out[r] = top[r] + math.log(math.fsum(np.exp(row[row > -60.0])))
    return out


def check_hoeffding(n_max=2000, grid=None):
    grid = hoeffding_grid() if grid is None else grid
    margins = []
    cases = []
    n = np.arange(1, n_max + 1)
    for p0, p1 in grid:
        if not 0.0 < p0 < p1:
            raise ValueError("need 0 < p0 < p1")
        margins.append(-2.0 * n * (p1 - p0) ** 2 - log_tails(n_max, p0, p1))
        cases.extend((int(m), p0, p1) for m in n)
    return _result("hoeffding", {"n_max": n_max, "grid": grid}, np.concatenate(margins),
                   tol=0.0, context=lambda k: dict(zip(("n", "p0", "p1"), cases[k])))


# ------------------------------------------------------------------ Schwarzian


@dataclasses.dataclass
class SchwarzianReport:
    gamma: float
    n_points: int
    all_negative: bool
    sign_change: Optional[float]
    threshold: float
    passed: bool


def schwarzian_scan(gamma, grid=None):
    """Sign of the left-branch Schwarzian on a grid of (0, 1/2).

    For gamma <= 1 the expectation is "negative everywhere"; for gamma > 1 a
    single sign change, located by root bracketing, that must match the
    closed-form threshold to 1e-6.
    """
    if grid is None:
        grid = np.linspace(0.0, 0.5, 10_002)[1:-1]
    grid = np.asarray(grid, dtype=float)
    s = np.asarray(schwarzian(gamma, grid))
    thr = schwarzian_threshold(gamma)
    neg = bool(np.all(s < 0))
    if gamma <= 1.0:
        return SchwarzianReport(gamma, grid.size, neg, None, thr, neg)
    flips = np.flatnonzero(np.diff(np.sign(s)) != 0)
    if flips.size != 1:
        return SchwarzianReport(gamma, grid.size, neg, None, thr, False)
    k = int(flips[0])
    root = scipy.optimize.brentq(lambda x: schwarzian(gamma, x), grid[k], grid[k + 1],
                                 xtol=1e-14)
    ok = bool(s[0] > 0 and s[-1] < 0 and abs(root - thr) <= 1e-6)
    return SchwarzianReport(gamma, grid.size, neg, float(root), thr, ok)


def check_schwarzian(params):
    reps = [schwarzian_scan(params.alpha), schwarzian_scan(params.beta)]
    margins = []
    for r in reps:
        if r.gamma <= 1.0:
            margins.append(0.0 if r.passed else -1.0)
        else:
            margins.append(1e-6 - abs(r.sign_change - r.threshold) if r.sign_change else -1.0)
    return _result("schwarzian", _pdict(params), margins, tol=0.0,
                   details={"reports": [dataclasses.asdict(r) for r in reps]})


# ------------------------------------------------------------------ distortion


def deriv_chain(word, x, params):
    """DT^R_w(x): product of branch derivatives along the first len(word) steps.

    Only the x-direction is included; the noise-direction factors are the
    same for both points of a cell and cancel in the distortion ratio.
    Accepts an array of x values sharing one word.
    """
    sym = as_symbols(word)
    x = np.array(x, dtype=float, copy=True)
    d = np.ones_like(x)
    gam = params.gammas
    for s in sym:
        g = gam[s]
        left = x <= 0.5
        d *= np.where(left, 1.0 + (1.0 + g) * np.power(2.0 * x, g), 2.0)
        x = _kernels.lsv_ufunc(g, x)
    return float(d) if d.ndim == 0 else d


def apply_word(word, x, params):
    sym = as_symbols(word)
    x = np.array(x, dtype=float, copy=True)
    for s in sym:
        x = _kernels.lsv_ufunc(params.gammas[s], x)
    return float(x) if x.ndim == 0 else x


def cell_x_interval(word, params):
    """(x'_i, x'_{i-1}] for the cell of ``word`` (length i)."""
    sym = as_symbols(word)
    i = sym.size
    if i == 1:
        return 0.75, 1.0
    lo = (backward_points(sym[None, 1:i], params)[0] + 1.0) / 2.0
    hi = 0.75 if i == 2 else (backward_points(sym[None, 1:i - 1], params)[0] + 1.0) / 2.0
    return float(lo), float(hi)


@dataclasses.dataclass
class DistortionReport:
    """Same-cell pair samples and the running estimate of C(F).

    Each row: (i, word, x1, x2, ratio_minus_1, s, theta_pow_s) where s is the
    separation time of the images S^R z1, S^R z2.
    """

    params: dict
    samples: list
    C_F: float
    C_F_half: float
    koebe_C: float
    contraction_violations: int
    omega_mismatches: int

    @property
    def relative_change(self):
        return abs(self.C_F - self.C_F_half) / self.C_F_half if self.C_F_half > 0 else math.inf

    @property
    def stable(self):
        return self.relative_change < 0.10


def distortion_scan(params, i_max=12, n_pairs=10_000, seed=0, omega_checks=3, cap=200):
    """Sample same-cell pairs and estimate the distortion constant C(F).

    Cells: return time i uniform on 1..i_max, word uniform over the 2^i
    words.  Pairs: x1, x2 uniform in the cell's x interval, noise coordinate
    at the cylinder midpoint.  For each pair the ratio of return-map
    derivatives, the separation time s of the images and |ratio - 1| 2^s are
    recorded; C_F is their maximum, C_F_half the maximum over the first half
    of the pairs.  Also counts violations of |x1 - x2| <= 2^-s(z1, z2) and,
    on ``omega_checks`` other noise values per cell, mismatches of the return
    cell (the ratio must not depend on where in the cylinder the noise sits).
    """
    if params.beta > 1.0:
        raise ValueError("distortion bound needs beta <= 1 (negative Schwarzian)")
    rng = make_rng(seed)
    rows = []
    q = np.empty(n_pairs)
    koebe = 0.0
    violations = 0
    mismatches = 0
    for k in range(n_pairs):
        i = int(rng.integers(1, i_max + 1))
        word = rng.integers(0, 2, size=i).astype(np.uint8)
        lo, hi = cell_x_interval(word, params)
        x1, x2 = lo + (hi - lo) * (1.0 - rng.random(2))
        a, b = cylinder_of(word, params)
        w = 0.5 * (a + b)
        d = deriv_chain(word, np.array([x1, x2]), params)
        y = apply_word(word, np.array([x1, x2]), params)
        if not (y[0] > 0.5 and y[1] > 0.5):
            raise AssertionError(f"pair left the cell: word={_word_str(word)} x=({x1}, {x2})")
        w_img = w
        for _ in range(i):
            w_img = noise_step(w_img, params)
        try:
            s_img = separation_time(SkewPoint(float(y[0]), w_img), SkewPoint(float(y[1]), w_img),
                                    params, cap=cap)
        except CapExceeded:
            s_img = cap
        s_pair = s_img + 1
        if abs(x1 - x2) > THETA ** s_pair + 1e-12:
            violations += 1
        ratio = d[0] / d[1]
        q[k] = abs(ratio - 1.0) / THETA ** s_img
        if y[0] != y[1]:
            koebe = max(koebe, abs(math.log(ratio)) / abs(y[0] - y[1]))
        rows.append((i, _word_str(word), float(x1), float(x2), float(ratio - 1.0), s_img,
                     THETA ** s_img))
        if omega_checks and k < 2 ** (i_max + 1):
            for t in (np.arange(omega_checks) + 1) / (omega_checks + 1):
                wt = a + (b - a) * t
                xx, ww = x1, wt
                steps = []
                for _ in range(i):
                    s = 0 if ww < params.p1 else 1
                    steps.append(s)
                    xx = float(_kernels.lsv_scalar(params.gammas[s], xx))
                    ww = noise_step(ww, params)
                    if xx > 0.5:
                        break
                if steps != list(word) or not xx > 0.5:
                    mismatches += 1
    half = n_pairs // 2
    return DistortionReport(_pdict(params), rows, float(q.max()), float(q[:half].max()),
                            float(koebe), violations, mismatches)


def check_distortion(params, i_max=12, n_pairs=10_000, seed=0):
    rep = distortion_scan(params, i_max, n_pairs, seed)
    margins = [0.10 - rep.relative_change, -float(rep.contraction_violations),
               -float(rep.omega_mismatches)]
    return _result("distortion", _pdict(params), margins, tol=0.0,
                   details={"C_F": rep.C_F, "C_F_half": rep.C_F_half,
                            "koebe_C": rep.koebe_C, "pairs": n_pairs,
                            "contraction_violations": rep.contraction_violations})


# ------------------------------------------------------------------ suite

SUITES = ("domination", "bounds", "k0", "hoeffding", "distortion", "schwarzian")


def lemma_suite(params, depth=12, checks="all", sampled_ns=(16, 32, 64, 128, 256, 512),
                samples=10_000, seed=0, hoeffding_n_max=2000, distortion_pairs=10_000):
    """Run the selected checks; returns a list of :class:`CheckResult`.

    ``checks`` is "all" or an iterable of names from :data:`SUITES`.
    Failures are reported in the ledger, never raised.
    """
    if checks == "all":
        checks = SUITES
    elif isinstance(checks, str):
        checks = (checks,)
    unknown = set(checks) - set(SUITES)
    if unknown:
        raise ValueError(f"unknown checks {sorted(unknown)}; choose from {SUITES}")
    out = []
    if "domination" in checks:
        out.append(check_domination(params))
        out.append(check_corollary(params))
        out.append(check_aperiodicity(params))
    if "bounds" in checks:
        out.append(check_rough_bounds(params, depth, sampled_ns, samples, seed))
    if "k0" in checks:
        out.append(check_k0_bound(params, depth))
    if "hoeffding" in checks:
        out.append(check_hoeffding(hoeffding_n_max))
    if "schwarzian" in checks:
        out.append(check_schwarzian(params))
    if "distortion" in checks:
        if params.beta <= 1.0:
            out.append(check_distortion(params, n_pairs=distortion_pairs, seed=seed))
        else:
            out.append(CheckResult("distortion", _pdict(params), 0, math.nan, True,
                                   details={"skipped": "beta > 1"}))
    return out
