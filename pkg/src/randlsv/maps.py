"""The Liverani-Saussol-Vaienti family of intermittent interval maps.

    T(x) = x (1 + 2^g x^g)   on [0, 1/2]
    T(x) = 2x - 1            on (1/2, 1]

Every member has a neutral fixed point at 0 (T(0) = 0, T'(0) = 1) and maps
each branch bijectively onto [0, 1].  All functions accept scalars or numpy
arrays; scalars in give Python floats out.
"""

import enum

import numpy as np

from randlsv import _kernels


class Branch(enum.Enum):
    LEFT = "left"    # [0, 1/2]
    RIGHT = "right"  # (1/2, 1]


def _check_gamma(gamma):
    if not (np.isfinite(gamma) and gamma > 0):
        raise ValueError(f"map exponent must be a positive real, got {gamma!r}")


def _as_unit_array(x, name="x"):
    arr = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError(f"{name} must lie in [0, 1]")
    return arr


def _out(arr):
    return float(arr) if np.ndim(arr) == 0 else arr


def branch_of(x):
    """Branch containing ``x``; 1/2 belongs to the left branch."""
    return Branch.LEFT if x <= 0.5 else Branch.RIGHT


def lsv_eval(gamma, x):
    """Evaluate T_gamma at ``x`` in [0, 1]."""
    _check_gamma(gamma)
    arr = _as_unit_array(x)
    return _out(_kernels.lsv_ufunc(float(gamma), arr))


def lsv_deriv(gamma, x, order=1, branch=None):
    """Exact derivative of order 1, 2 or 3 of the active branch at ``x``.

    ``x == 1/2`` sits on both branches, so there an explicit ``branch`` is
    required.  On the left branch the second and third derivatives blow up at
    ``x = 0`` when ``gamma < 1`` (resp. ``gamma < 2``); the value returned
    there is the signed infinity, not an error.
    """
    _check_gamma(gamma)
    if order not in (1, 2, 3):
        raise ValueError("order must be 1, 2 or 3")
    arr = _as_unit_array(x)
    if branch is None:
        if np.any(arr == 0.5):
            raise ValueError("derivative at x = 1/2 needs an explicit branch")
        left = arr < 0.5
    else:
        branch = Branch(branch)
        left = np.full(arr.shape, branch is Branch.LEFT)
        if branch is Branch.LEFT and np.any(arr > 0.5):
            raise ValueError("x outside the left branch [0, 1/2]")
        if branch is Branch.RIGHT and np.any(arr < 0.5):
            raise ValueError("x outside the right branch [1/2, 1]")

    g = float(gamma)
    c = 2.0 ** g
    with np.errstate(divide="ignore", invalid="ignore"):
        if order == 1:
            lval = 1.0 + c * (1.0 + g) * arr ** g
            rval = 2.0
        elif order == 2:
            lval = c * g * (1.0 + g) * arr ** (g - 1.0)
            rval = 0.0
        else:
            coef = c * g * (1.0 + g) * (g - 1.0)
            if coef == 0.0:
                lval = np.zeros_like(arr)
            else:
                lval = coef * arr ** (g - 2.0)
            rval = 0.0
    return _out(np.where(left, lval, rval))


def invert_left(gamma, y):
    """Unique x in [0, 1/2] with T_gamma(x) = y.

    Bracketed Newton iteration with bisection fallback on the bracket
    [y / (1 + 2^g y^g), min(y, 1/2)], at most 200 steps.  The stopping rule
    is relative (4e-15 |x|), which is tighter than an absolute 1e-14 and keeps
    precision for the very small points deep in the backward orbits.
    """
    _check_gamma(gamma)
    arr = _as_unit_array(y, "y")
    return _out(_kernels.invert_left_ufunc(float(gamma), arr))


def invert_right(y):
    """Preimage of ``y`` in (0, 1] under the right branch 2x - 1."""
    arr = np.asarray(y, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0.0) or np.any(arr > 1.0):
        raise ValueError("y must lie in (0, 1]")
    return _out((arr + 1.0) / 2.0)


def schwarzian(gamma, x):
    """Schwarzian derivative f'''/f' - 3/2 (f''/f')^2 of the left branch.

    Defined for x in (0, 1/2); the right branch is affine and has Schwarzian
    identically zero.  At x = 0 the derivatives are singular and
    ``ValueError`` is raised.
    """
    arr = _as_unit_array(x)
    if np.any(arr <= 0.0) or np.any(arr > 0.5):
        raise ValueError("Schwarzian of the left branch needs x in (0, 1/2]")
    d1 = np.asarray(lsv_deriv(gamma, arr, 1, Branch.LEFT))
    d2 = np.asarray(lsv_deriv(gamma, arr, 2, Branch.LEFT))
    d3 = np.asarray(lsv_deriv(gamma, arr, 3, Branch.LEFT))
    return _out(d3 / d1 - 1.5 * (d2 / d1) ** 2)


def schwarzian_threshold(gamma):
    """Right end of the interval near 0 where the Schwarzian is positive.

    Only meaningful for gamma > 1: S T_gamma(x) > 0 exactly for
    0 < x < (1/2) ((g-1) / ((1+g)(1+g/2)))^(1/g).  Returns 0.0 for g <= 1.
    """
    _check_gamma(gamma)
    g = float(gamma)
    if g <= 1.0:
        return 0.0
    return 0.5 * ((g - 1.0) / ((1.0 + g) * (1.0 + g / 2.0))) ** (1.0 / g)


__all__ = [
    "Branch",
    "branch_of",
    "invert_left",
    "invert_right",
    "lsv_deriv",
    "lsv_eval",
    "schwarzian",
    "schwarzian_threshold",
]
