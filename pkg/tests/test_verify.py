import math

import mpmath
import numpy as np
import pytest
import scipy.stats

from randlsv import verify
from randlsv.maps import lsv_deriv
from randlsv.system import SystemParams
from randlsv.verify import (
    InsufficientPoints,
    check_aperiodicity,
    check_corollary,
    check_distortion,
    check_domination,
    check_hoeffding,
    check_k0_bound,
    check_rough_bounds,
    check_schwarzian,
    cell_x_interval,
    deriv_chain,
    distortion_scan,
    fit_power_law,
    hoeffding_grid,
    hoeffding_report,
    lemma_suite,
    log_binomial_cdf,
    schwarzian_scan,
)

from conftest import unchecked_params

SWAPPED = unchecked_params(0.7, 0.5, 0.6)


# ------------------------------------------------------------------ fitting


@pytest.mark.parametrize("a", [-0.5, -1.0, -2.0, -3.0])
def test_fit_noiseless(a):
    n = np.arange(1, 2001)
    f = fit_power_law(n, 3.0 * n ** a)
    assert abs(f.exponent - a) < 1e-6
    assert f.window == (50, 2000.0)
    assert f.r_squared == pytest.approx(1.0)


@pytest.mark.parametrize("a", [-0.5, -1.0, -2.0, -3.0])
def test_fit_noisy(a):
    rng = np.random.default_rng(int(-10 * a))
    n = np.arange(50, 2001)
    y = n ** a * (1 + 0.01 * rng.standard_normal(n.size))
    f = fit_power_law(n, y)
    assert abs(f.exponent - a) <= 3 * f.stderr


def test_fit_window_and_trimming():
    n = np.arange(1, 101, dtype=float)
    y = n ** -1.0
    f = fit_power_law(n, y, window=(10, 60))
    assert f.window == (10, 60) and f.n_points == 51
    se = np.where(n > 40, 1.0, 0.0)
    f = fit_power_law(n, y, window=(10, 100), se=se)
    assert f.n_points == 31
    with pytest.raises(InsufficientPoints):
        fit_power_law(n, y, window=(10, 16))
    with pytest.raises(ValueError):
        fit_power_law(n, y, window=(60, 10))


def test_fit_uses_magnitudes():
    n = np.arange(50, 500)
    f = fit_power_law(n, -(n ** -1.5))
    assert abs(f.exponent + 1.5) < 1e-9


# ------------------------------------------------------------------ Hoeffding


def test_hoeffding_examples(params):
    r = hoeffding_report(100, 0.4, params)
    assert r.bound == pytest.approx(math.exp(-8), rel=1e-12)
    assert r.bound == pytest.approx(3.3546e-4, rel=1e-4)
    r1 = hoeffding_report(1, 0.3, params)
    assert r1.K0 == pytest.approx(0.3)
    assert r1.exact_tail == pytest.approx(params.p2, rel=1e-12)
    assert r1.holds
    with pytest.raises(ValueError):
        hoeffding_report(10, 0.7, params)


def test_log_binomial_cdf_against_mpmath():
    mpmath.mp.dps = 50
    # scipy.stats.binom.logcdf underflows to -inf on the last case
    for n, k, p in [(10, 3, 0.6), (200, 50, 0.5), (2000, 100, 0.9)]:
        q = mpmath.mpf(p)
        ref = mpmath.log(mpmath.fsum(mpmath.binomial(n, j) * q ** j * (1 - q) ** (n - j)
                                     for j in range(k + 1)))
        assert log_binomial_cdf(k, n, p) == pytest.approx(float(ref), rel=1e-12)
    assert scipy.stats.binom.logcdf(3, 10, 0.6) == pytest.approx(log_binomial_cdf(3, 10, 0.6))
    assert log_binomial_cdf(-1, 10, 0.5) == -math.inf
    assert log_binomial_cdf(10, 10, 0.5) == pytest.approx(0.0, abs=1e-14)


def test_log_space_handles_tiny_tails():
    r = hoeffding_report(2000, 0.02, 0.9)
    assert r.log_exact_tail < -1000 and math.isfinite(r.log_exact_tail)
    assert r.holds


def test_hoeffding_grid_shape():
    grid = hoeffding_grid(5)
    assert len(grid) == 25 and all(0 < p0 < p1 < 1 for p0, p1 in grid)


def test_hoeffding_check_small():
    res = check_hoeffding(200)
    assert res.passed and res.n_cases == 25 * 200


def test_hoeffding_negative_control(monkeypatch):
    monkeypatch.setattr(verify, "log_tails", lambda n_max, p0, p1: np.zeros(n_max))
    assert not check_hoeffding(20).passed


# ------------------------------------------------------------------ lemma checks


@pytest.mark.parametrize("p", [SystemParams(0.5, 0.7, 0.6), SystemParams(0.3, 1.0, 0.5),
                               SystemParams(0.4, 0.9, 0.25)])
def test_lemma_checks_pass(p):
    for res in (check_domination(p), check_corollary(p), check_rough_bounds(p, depth=8),
                check_k0_bound(p, depth=8), check_aperiodicity(p)):
        assert res.passed, res.as_dict()


def test_domination_negative_control():
    res = check_domination(SWAPPED)
    assert not res.passed and res.counterexample is not None


def test_corollary_negative_control():
    assert not check_corollary(SWAPPED).passed


def test_rough_bounds_negative_control():
    res = check_rough_bounds(SWAPPED, depth=6, sampled_ns=(), samples=10)
    assert not res.passed
    assert set(res.counterexample) >= {"n", "word", "x_n"}


def test_k0_negative_control(monkeypatch, params):
    # the K0 bound has a full step of slack even for swapped exponents, so
    # shift the reference orbit: x^alpha_{K0+2} < x_{K0+1}(AA...A)
    real = verify.pure_backward
    monkeypatch.setattr(verify, "pure_backward", lambda g, n: real(g, n + 2)[2:])
    res = check_k0_bound(params, depth=8)
    assert not res.passed and "K0" in res.counterexample


def test_aperiodicity_negative_control(monkeypatch, params):
    monkeypatch.setattr(verify, "cell_measure", lambda i, p: 0.0 if i == 2 else 0.25)
    assert not check_aperiodicity(params).passed


def test_rough_bounds_case_count(params):
    res = check_rough_bounds(params, depth=3, sampled_ns=(), samples=1)
    assert res.details["cases_per_n"] == {1: 1, 2: 2, 3: 4}
    assert res.n_cases == 7


# ------------------------------------------------------------------ Schwarzian


def test_schwarzian_scan():
    r = schwarzian_scan(0.5)
    assert r.all_negative and r.passed
    r = schwarzian_scan(2.0)
    assert not r.all_negative and r.passed
    assert abs(r.sign_change - 0.204124) < 1e-6


def test_schwarzian_negative_control(monkeypatch):
    monkeypatch.setattr(verify, "schwarzian_threshold", lambda g: 0.25)
    assert not schwarzian_scan(2.0).passed
    assert not check_schwarzian(SystemParams(0.5, 2.0, 0.6)).passed


# ------------------------------------------------------------------ distortion


def test_deriv_chain(params):
    assert deriv_chain("A", 0.8, params) == 2.0
    assert deriv_chain("B", 0.9, params) == 2.0
    lo, hi = cell_x_interval("AB", params)
    x = 0.5 * (lo + hi)
    y = 2 * x - 1
    want = 2.0 * lsv_deriv(0.7, y)
    assert deriv_chain("AB", x, params) == pytest.approx(want, rel=1e-15)
    rng = np.random.default_rng(0)
    for _ in range(50):
        word = rng.integers(0, 2, rng.integers(1, 9)).astype(np.uint8)
        lo, hi = cell_x_interval(word, params)
        xs = lo + (hi - lo) * (1 - rng.random(5))
        assert np.all(deriv_chain(word, xs, params) >= 2.0)


def test_distortion_scan_small(params):
    rep = distortion_scan(params, i_max=8, n_pairs=600, seed=2)
    assert rep.contraction_violations == 0
    assert rep.omega_mismatches == 0
    assert all(r[4] == 0.0 for r in rep.samples if r[0] == 1)
    assert all(r[4] >= 0 or abs(r[4]) >= 0 for r in rep.samples)
    assert math.isfinite(rep.C_F) and rep.C_F > 0
    assert math.isfinite(rep.koebe_C)


def test_distortion_requires_strict_regime():
    with pytest.raises(ValueError):
        distortion_scan(SystemParams(0.5, 1.5, 0.6), n_pairs=10)


def test_distortion_negative_control(monkeypatch, params):
    monkeypatch.setattr(verify, "separation_time", lambda *a, **k: 60)
    res = check_distortion(params, i_max=6, n_pairs=200)
    assert not res.passed
    assert res.details["contraction_violations"] > 0


# ------------------------------------------------------------------ suite


def test_lemma_suite_ledger(params):
    results = lemma_suite(params, depth=6, checks=("domination", "k0"), sampled_ns=())
    names = [r.check for r in results]
    assert names == ["domination", "corollary", "aperiodicity", "k0_bound"]
    for r in results:
        d = r.as_dict()
        assert set(d) >= {"check", "params", "n_cases", "worst_margin", "pass"}
        assert d["pass"] is True
    with pytest.raises(ValueError):
        lemma_suite(params, checks=("bogus",))


def test_lemma_suite_skips_distortion_above_one():
    res = lemma_suite(SystemParams(0.5, 1.5, 0.6), checks="distortion")
    assert res[0].passed and res[0].details["skipped"]


@pytest.mark.parametrize("p0,p1", [(0.06, 0.3), (0.45, 0.9), (0.81, 0.9)])
def test_log_tails_match_reports(p0, p1):
    lt = verify.log_tails(300, p0, p1)
    ref = [hoeffding_report(n, p0, p1).log_exact_tail for n in range(1, 301)]
    assert np.allclose(lt, ref, rtol=1e-13, atol=0)
