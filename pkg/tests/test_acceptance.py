"""Acceptance criteria 1-9, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v`` (the lines are written past
pytest's capture) or directly with ``python3 tests/test_acceptance.py``.
Heavy inputs (the E x_n table, densities) are computed once per module.
"""

import math
import sys
import time

import numpy as np
import pytest

from randlsv.system import SkewPoint, SystemParams, make_rng, omega_symbols
from randlsv.tower import (
    expectation_table,
    expected_return_time,
    random_backward,
    return_time,
    tail_Rhat,
)
from randlsv.transfer import (
    IDENTITY,
    annealed_matrix,
    correlation_mc,
    correlation_operator,
    default_geometric_grid,
    stationary_density,
    uniform_grid,
)
from randlsv.verify import (
    MARGIN_TOL,
    check_domination,
    check_hoeffding,
    check_k0_bound,
    check_rough_bounds,
    distortion_scan,
    fit_power_law,
    hoeffding_grid,
)

DEFAULT = SystemParams(0.5, 0.7, 0.6)
ALPHA_04 = SystemParams(0.4, 0.7, 0.6)
K_TABLE = 10_000
MC_SAMPLES = 100_000


@pytest.fixture
def report(capsys):
    def emit(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        with capsys.disabled():
            print("\n" + line, flush=True)
        return passed
    return emit


@pytest.fixture(scope="module")
def tables():
    out = {}
    for p in (DEFAULT, ALPHA_04):
        t0 = time.perf_counter()
        out[p] = (expectation_table(K_TABLE, p, samples=MC_SAMPLES, seed=2024),
                  time.perf_counter() - t0)
    return out


def test_criterion_1_lemma_exactness(report):
    t0 = time.perf_counter()
    worst = math.inf
    failed = []
    for p in (SystemParams(0.5, 0.7, 0.6), SystemParams(0.3, 1.0, 0.5),
              SystemParams(0.4, 0.9, 0.25)):
        for res in (check_domination(p), check_rough_bounds(p, depth=12),
                    check_k0_bound(p, depth=12)):
            worst = min(worst, res.worst_margin)
            if not res.passed:
                failed.append((res.check, p.as_dict(), res.counterexample))
    elapsed = time.perf_counter() - t0
    ok = not failed and worst >= -MARGIN_TOL and elapsed < 60
    report(1, ok, f"worst margin {worst:.3e}, failures {len(failed)}, {elapsed:.1f} s")
    assert ok, failed


def test_criterion_2_hoeffding(report):
    t0 = time.perf_counter()
    res = check_hoeffding(2000, hoeffding_grid(5))
    elapsed = time.perf_counter() - t0
    ok = res.passed and res.n_cases == 2000 * 25 and elapsed < 10
    report(2, ok, f"{res.n_cases} cases, worst log-margin {res.worst_margin:.4f}, "
                  f"{elapsed:.1f} s")
    assert ok, res.counterexample


def test_criterion_3_expectation_exponent(report, tables):
    lines = []
    ok = True
    runtime = 0.0
    for p, target, tol in ((DEFAULT, -2.0, 0.15), (ALPHA_04, -2.5, 0.2)):
        tab, secs = tables[p]
        runtime += secs
        n = np.arange(1, tab.k_max + 1)
        fit = fit_power_law(n, tab.mean, window=(100, K_TABLE),
                            se=np.where(tab.exact, 0.0, tab.se))
        good = abs(fit.exponent - target) <= tol
        ok &= good
        lines.append(f"alpha={p.alpha}: {fit.exponent:.4f} (target {target} +/- {tol})")
    ok &= runtime < 600
    report(3, ok, "; ".join(lines) + f"; tables {runtime:.0f} s")
    assert ok


def test_criterion_4_tail_and_mean_return_time(report, tables):
    tab, _ = tables[DEFAULT]
    grid = np.unique(np.geomspace(100, 2000, 24).astype(int))
    tail = tail_Rhat(grid, DEFAULT, table=tab)
    fit = fit_power_law(tail.n, tail.values, window=(100, 2000))
    er_half = expected_return_time(tab, K_TABLE // 2)
    er_full = expected_return_time(tab, K_TABLE)
    change = abs(er_full - er_half) / er_half
    ok = (abs(fit.exponent + 1.0) <= 0.15 and math.isfinite(er_full) and change < 0.01
          and bool(np.all(np.diff(tail.values) <= 0)))
    report(4, ok, f"tail exponent {fit.exponent:.4f} (target -1 +/- 0.15), "
                  f"stopping rule met on {int(tail.stopped.sum())}/{tail.n.size} rows; "
                  f"E(R) {er_half:.6f} -> {er_full:.6f} (change {100 * change:.3f}%)")
    assert ok


def _correlation_slope(alpha, beta, grid_kind, n_bins=4096):
    p = SystemParams(alpha, beta, 0.6)
    grid = uniform_grid(n_bins) if grid_kind == "uniform" else \
        default_geometric_grid(n_bins, alpha)
    mat = annealed_matrix(p, grid)
    d = stationary_density(mat, grid)
    cor = correlation_operator(mat, d, IDENTITY, IDENTITY, 1000)
    n = np.arange(cor.size)
    return fit_power_law(n, cor, window=(50, 1000))


def test_criterion_5_correlation_slope_tracks_alpha(report):
    """Literal criterion: uniform N = 4096 grid."""
    ok = True
    parts = []
    for beta in (0.7, 1.0):
        fit = _correlation_slope(0.5, beta, "uniform")
        target, other = 1 - 1 / 0.5, 1 - 1 / beta
        lo, hi = fit.interval()
        within = abs(fit.exponent - target) <= 0.25
        apart = not (lo <= other <= hi) and abs(fit.exponent - other) > fit.stderr
        ok &= within and apart
        parts.append(f"beta={beta}: slope {fit.exponent:.3f} +/- {fit.stderr:.3f} "
                     f"(target {target} +/- 0.25, 1-1/beta = {other:.3f})")
    report(5, ok, "uniform N=4096; " + "; ".join(parts))
    assert ok


def test_criterion_5_supplement_geometric_grid(report):
    """Same measurement on the geometric N = 4096 grid (refined at 0)."""
    ok = True
    parts = []
    for beta in (0.7, 1.0):
        fit = _correlation_slope(0.5, beta, "geometric")
        other = 1 - 1 / beta
        lo, hi = fit.interval()
        good = abs(fit.exponent + 1.0) <= 0.25 and not (lo <= other <= hi)
        ok &= good
        parts.append(f"beta={beta}: slope {fit.exponent:.3f} +/- {fit.stderr:.3f}")
    report("5 (supplement, geometric N=4096)", ok, "; ".join(parts))
    assert ok


def test_criterion_6_beta_one_admissible(report):
    p = SystemParams(0.5, 1.0, 0.6)
    masses = []
    residuals = []
    normal = []
    for n in (4096, 8192):
        grid = uniform_grid(n)
        d = stationary_density(annealed_matrix(p, grid), grid)
        residuals.append(d.residual)
        normal.append(abs(d.masses.sum() - 1.0))
        masses.append(d.mass_below(1 / 16))
    change = abs(masses[1] - masses[0]) / masses[0]
    ok = max(residuals) < 1e-8 and max(normal) < 1e-10 and change < 0.10
    report(6, ok, f"residuals {residuals[0]:.1e}/{residuals[1]:.1e}, mass[0,1/16] "
                  f"{masses[0]:.5f} -> {masses[1]:.5f} ({100 * change:.2f}%)")
    assert ok


def test_criterion_7_distortion(report):
    rep = distortion_scan(DEFAULT, i_max=12, n_pairs=20_000, seed=7)
    ok = (math.isfinite(rep.C_F) and rep.relative_change < 0.10
          and rep.contraction_violations == 0)
    report(7, ok, f"sup |ratio-1|/theta^s: {rep.C_F_half:.5f} (1e4 pairs) -> "
                  f"{rep.C_F:.5f} (2e4 pairs), change {100 * rep.relative_change:.2f}%; "
                  f"contraction violations {rep.contraction_violations}")
    assert ok


def test_criterion_8_cross_validation(report):
    p = DEFAULT
    grid = default_geometric_grid(8192, p.alpha)
    mat = annealed_matrix(p, grid)
    d = stationary_density(mat, grid)
    op = correlation_operator(mat, d, IDENTITY, IDENTITY, 20)
    cor, se = correlation_mc(p, IDENTITY, IDENTITY, 20, samples=MC_SAMPLES,
                             burn_in=10_000, seed=8)
    zmax = float(np.max(np.abs(cor - op) / se))

    rng = make_rng(88)
    pts = rng.random((100_000, 2))
    mismatches = 0
    for u, w in pts:
        x = 1.0 - 0.5 * u            # uniform on (1/2, 1]
        r = return_time(SkewPoint(x, float(w)), p)
        orb = random_backward(omega_symbols(float(w), r + 1, p), p, r + 1)
        lo, hi = orb.J(r)
        mismatches += not (lo < x <= hi)
    ok = zmax < 4 and mismatches == 0
    report(8, ok, f"max |MC - operator| / se over n <= 20: {zmax:.2f} (< 4); "
                  f"return-time mismatches {mismatches} / 100000")
    assert ok


def test_criterion_9_fitter_calibration(report):
    n = np.arange(1, 10_001, dtype=float)
    errs = [abs(fit_power_law(n, 2.5 * n ** a).exponent - a) for a in (-0.5, -1, -2, -3)]
    ok = max(errs) <= 1e-6
    report(9, ok, f"max exponent error {max(errs):.2e}")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
