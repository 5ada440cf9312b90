"""Compiled scalar kernels shared by the public modules.

Everything here works on plain floats / arrays and does no validation;
the public wrappers in :mod:`randlsv.maps`, :mod:`randlsv.tower` and
:mod:`randlsv.transfer` check their inputs before calling in.

Symbol arrays use 0 for A (apply the alpha map) and 1 for B (beta map).
"""

import math

import numba
import numpy as np

INV_ATOL = 1e-14
INV_RTOL = 4e-15
INV_MAXITER = 200
NEWTON_QUAD_STOP = 3e-8


@numba.njit(cache=True, inline="always")
def lsv_scalar(g, x):
    if x <= 0.5:
        return x * (1.0 + math.pow(2.0 * x, g))
    return 2.0 * x - 1.0


@numba.njit(cache=True, inline="always")
def lsv_left_deriv1(g, x):
    # 2^g (1+g) x^g == (1+g) (2x)^g
    return 1.0 + (1.0 + g) * math.pow(2.0 * x, g)


@numba.njit(cache=True)
def invert_left_scalar(g, y):
    """Bracketed Newton for x + 2^g x^(1+g) = y on [0, 1/2]."""
    if y <= 0.0:
        return 0.0
    if y >= 1.0:
        return 0.5
    c = math.pow(2.0, g)
    u = c * math.pow(y, g)
    # root lies in [y / (1 + 2^g y^g), min(y, 1/2)]
    lo = y / (1.0 + u)
    hi = min(y, 0.5)
    # second-order series for small y
    x = y * (1.0 - u + (1.0 + g) * u * u)
    if not (lo < x < hi):
        x = 0.5 * (lo + hi)
    for _ in range(INV_MAXITER):
        xg = c * math.pow(x, g)
        f = x * (1.0 + xg) - y
        if f > 0.0:
            hi = x
        elif f < 0.0:
            lo = x
        else:
            return x
        fp = 1.0 + (1.0 + g) * xg
        xn = x - f / fp
        if xn <= lo or xn >= hi:
            xn = 0.5 * (lo + hi)
            x = xn
            if hi - lo <= INV_RTOL * x:
                break
            continue
        dx = abs(xn - x)
        x = xn
        # f is convex and increasing, so after a Newton step of relative size
        # d the error is at most d^2 |x|: d <= NEWTON_QUAD_STOP gives ~1e-15.
        if dx <= NEWTON_QUAD_STOP * x or dx <= min(INV_ATOL, INV_RTOL * x):
            break
    return x


@numba.vectorize(["float64(float64, float64)"], cache=True)
def invert_left_ufunc(g, y):
    return invert_left_scalar(g, y)


@numba.vectorize(["float64(float64, float64)"], cache=True)
def lsv_ufunc(g, x):
    return lsv_scalar(g, x)


@numba.njit(cache=True)
def pure_backward_kernel(g, n):
    out = np.empty(n)
    out[0] = 0.5
    for k in range(1, n):
        out[k] = invert_left_scalar(g, out[k - 1])
    return out


@numba.njit(cache=True)
def backward_chain_chunk(y, sym, ga, gb, sums, sumsq, offset):
    """Advance every backward chain through ``sym.shape[0]`` random inverses.

    ``sums[offset + t]`` accumulates the chain values after step t, in sample
    order, so the result is reproducible bit for bit.
    """
    steps, samples = sym.shape
    for t in range(steps):
        s1 = 0.0
        s2 = 0.0
        for j in range(samples):
            g = ga if sym[t, j] == 0 else gb
            v = invert_left_scalar(g, y[j])
            y[j] = v
            s1 += v
            s2 += v * v
        sums[offset + t] = s1
        sumsq[offset + t] = s2


@numba.njit(cache=True)
def forward_chunk(x, sym, ga, gb):
    """Apply ``sym.shape[0]`` random LSV steps to every walker in place."""
    steps, samples = sym.shape
    for t in range(steps):
        for j in range(samples):
            g = ga if sym[t, j] == 0 else gb
            x[j] = lsv_scalar(g, x[j])


@numba.njit(cache=True)
def skew_orbit_kernel(x0, w0, n, ga, gb, p1):
    """Real-coordinate skew-product orbit; omega iterated in floating point."""
    p2 = 1.0 - p1
    xs = np.empty(n + 1)
    ws = np.empty(n + 1)
    syms = np.empty(n + 1, dtype=np.uint8)
    x = x0
    w = w0
    below_one = np.nextafter(1.0, 0.0)
    for k in range(n + 1):
        xs[k] = x
        ws[k] = w
        if w < p1:
            syms[k] = 0
            x = lsv_scalar(ga, x)
            w = w / p1
        else:
            syms[k] = 1
            x = lsv_scalar(gb, x)
            w = (w - p1) / p2
        if w >= 1.0:
            w = below_one
    return xs, ws, syms


@numba.njit(cache=True)
def coded_skew_orbit(x0, sym, n, ga, gb, p1):
    """Skew orbit with omega_k reconstructed exactly from its future symbols.

    ``sym`` must be longer than ``n``; the surplus fixes the precision of the
    last omega values (each extra symbol shrinks the error by max(p1, p2)).
    """
    p2 = 1.0 - p1
    m = sym.shape[0]
    ws_full = np.empty(m + 1)
    ws_full[m] = 0.5
    for k in range(m - 1, -1, -1):
        if sym[k] == 0:
            ws_full[k] = p1 * ws_full[k + 1]
        else:
            ws_full[k] = p1 + p2 * ws_full[k + 1]
    xs = np.empty(n + 1)
    x = x0
    for k in range(n + 1):
        xs[k] = x
        x = lsv_scalar(ga if sym[k] == 0 else gb, x)
    return xs, ws_full[: n + 1].copy()
