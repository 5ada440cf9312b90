"""The random map {T_alpha, T_beta; p1, p2} and its skew-product model.

The noise space is [0, 1) with Lebesgue measure and the expanding map

    phi(w) = w / p1             for w in [0, p1)     (symbol A, apply T_alpha)
    phi(w) = (w - p1) / p2      for w in [p1, 1)     (symbol B, apply T_beta)

so the symbol sequence of a uniform w is i.i.d. Bernoulli(p1).  The skew
product is S(x, w) = (T_{alpha(w)}(x), phi(w)).

Two representations of the noise coordinate coexist.  The real one (a float
w) drives :func:`skew_step` and :func:`iterate`; since phi is expanding, a
float orbit of w forgets the true coding of w after roughly 50-70 steps, and
for dyadic p1 it collapses onto 0.  Use it for short orbits only.  The
symbolic one (:class:`SymbolString`) is exact and is what the tower
computations and :func:`simulate` use.
"""

from __future__ import annotations

import dataclasses
import enum
import fractions
import itertools
import math

import numpy as np

from randlsv import _kernels
from randlsv.maps import lsv_eval

RNG_ALGORITHM = "numpy.random.Philox(4x64, 10 rounds)"


def make_rng(seed):
    """Counter-based generator used for every random draw in the package."""
    return np.random.Generator(np.random.Philox(int(seed)))


class Symbol(enum.IntEnum):
    A = 0
    B = 1


@dataclasses.dataclass(frozen=True)
class SystemParams:
    """Parameters (alpha, beta, p1) of the random map; p2 = 1 - p1.

    ``strict_regime`` restricts to beta <= 1, the range where the bounded
    distortion argument (negative Schwarzian) applies.  Without it any
    0 < alpha < beta < inf is accepted.
    """

    alpha: float = 0.5
    beta: float = 0.7
    p1: float = 0.6
    strict_regime: bool = False

    def __post_init__(self):
        a, b, p = self.alpha, self.beta, self.p1
        if not all(map(math.isfinite, (a, b, p))):
            raise ValueError("parameters must be finite")
        if not 0.0 < a < b:
            raise ValueError(f"need 0 < alpha < beta, got alpha={a}, beta={b}")
        if not 0.0 < p < 1.0:
            raise ValueError(f"need 0 < p1 < 1, got {p}")
        if self.strict_regime and b > 1.0:
            raise ValueError(f"strict regime needs beta <= 1, got {b}")

    @property
    def p2(self):
        return 1.0 - self.p1

    @property
    def gammas(self):
        """Map exponent indexed by symbol value."""
        return np.array([self.alpha, self.beta])

    @property
    def probs(self):
        return np.array([self.p1, self.p2])

    def as_dict(self):
        return {"alpha": self.alpha, "beta": self.beta, "p1": self.p1,
                "p2": self.p2, "strict_regime": self.strict_regime}


DEFAULT_PARAMS = SystemParams(0.5, 0.7, 0.6)


def as_symbols(word):
    """Symbol array (uint8, A=0, B=1) from a string like "ABBA" or a sequence."""
    if isinstance(word, SymbolString):
        return word.symbols
    if isinstance(word, str):
        try:
            return np.array([Symbol[c].value for c in word.strip()], dtype=np.uint8)
        except KeyError as exc:
            raise ValueError(f"words are made of 'A' and 'B', got {word!r}") from exc
    arr = np.asarray(word)
    if arr.size == 0:
        return np.zeros(0, dtype=np.uint8)
    if arr.dtype.kind in "US":
        return as_symbols("".join(arr.tolist()))
    arr = arr.astype(np.int64)
    if np.any((arr != 0) & (arr != 1)):
        raise ValueError("symbol values must be 0 (A) or 1 (B)")
    return arr.astype(np.uint8)


@dataclasses.dataclass(frozen=True, eq=False)
class SymbolString:
    """A finite word over {A, B} together with its probability weight.

    The weight is p1^#A p2^#B; ``log_weight`` keeps it usable for long words
    where the weight itself underflows.
    """

    symbols: np.ndarray
    log_weight: float

    @classmethod
    def from_word(cls, word, params):
        sym = as_symbols(word)
        n_a = int(np.count_nonzero(sym == 0))
        n_b = sym.size - n_a
        logw = n_a * math.log(params.p1) + n_b * math.log(params.p2)
        return cls(sym, logw)

    @property
    def weight(self):
        return math.exp(self.log_weight)

    @property
    def count_a(self):
        return int(np.count_nonzero(self.symbols == 0))

    def __len__(self):
        return int(self.symbols.size)

    def __str__(self):
        return "".join("AB"[s] for s in self.symbols)

    def __eq__(self, other):
        if not isinstance(other, SymbolString):
            return NotImplemented
        return np.array_equal(self.symbols, other.symbols) and self.log_weight == other.log_weight

    __hash__ = None


@dataclasses.dataclass(frozen=True)
class SkewPoint:
    x: float
    omega: float

    def __post_init__(self):
        if not 0.0 <= self.x <= 1.0:
            raise ValueError(f"x must lie in [0, 1], got {self.x}")
        if not 0.0 <= self.omega < 1.0:
            raise ValueError(f"omega must lie in [0, 1), got {self.omega}")


def _check_omega(omega):
    if not 0.0 <= omega < 1.0:
        raise ValueError(f"omega must lie in [0, 1), got {omega}")


def symbol_of(omega, params):
    """A if omega < p1, else B (the boundary point p1 codes as B)."""
    _check_omega(omega)
    return Symbol.A if omega < params.p1 else Symbol.B


def noise_step(omega, params):
    """One step of the noise map phi.

    Rounding can push (w - p1)/p2 up to 1.0 for w just below 1; such values
    are clamped to the largest float below 1 to stay in [0, 1).
    """
    _check_omega(omega)
    if omega < params.p1:
        out = omega / params.p1
    else:
        out = (omega - params.p1) / params.p2
    return min(out, math.nextafter(1.0, 0.0))


def skew_step(z, params):
    """S(x, w) = (T_{alpha(w)}(x), phi(w))."""
    sym = symbol_of(z.omega, params)
    x = lsv_eval(params.gammas[sym], z.x)
    return SkewPoint(x, noise_step(z.omega, params))


def iterate(z, n, params):
    """Orbit z, S z, ..., S^n z of the skew product (real noise coordinate).

    Returns an ``(n + 1, 2)`` array with columns (x, omega).
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    SkewPoint(z.x, z.omega)
    xs, ws, _ = _kernels.skew_orbit_kernel(float(z.x), float(z.omega), int(n),
                                           params.alpha, params.beta, params.p1)
    return np.column_stack([xs, ws])


def iterate_with_symbols(z, n, params):
    """Like :func:`iterate` but also returns the symbol used at each step."""
    if n < 0:
        raise ValueError("n must be >= 0")
    xs, ws, syms = _kernels.skew_orbit_kernel(float(z.x), float(z.omega), int(n),
                                              params.alpha, params.beta, params.p1)
    return xs, ws, syms


def omega_symbols(omega, length, params):
    """First ``length`` symbols of omega, read off the float phi-orbit."""
    _check_omega(omega)
    out = np.empty(length, dtype=np.uint8)
    w = omega
    for k in range(length):
        out[k] = 0 if w < params.p1 else 1
        w = noise_step(w, params)
    return out


def exact_digits(omega, params, length=None):
    """Symbols of ``omega`` computed in rational arithmetic.

    By default as many symbols as a double resolves: every cylinder of that
    length is wider than 2^-52.
    """
    _check_omega(omega)
    if length is None:
        length = int(52 * math.log(2.0) / -math.log(max(params.p1, params.p2)))
    w = fractions.Fraction(omega)
    p1 = fractions.Fraction(params.p1)
    p2 = 1 - p1
    out = np.empty(length, dtype=np.uint8)
    for k in range(length):
        if w < p1:
            out[k] = 0
            w = w / p1
        else:
            out[k] = 1
            w = (w - p1) / p2
    return out


def simulate(x0, omega0, steps, params, seed=0, lookahead=80):
    """Skew-product orbit of length ``steps + 1`` with an exact noise coding.

    Floating-point iteration of phi is expanding and eventually loses every
    digit of omega (for p1 = 1/2 it collapses onto 0).  Here the noise point
    is carried as its symbol sequence instead: the digits of ``omega0`` that a
    double resolves, continued by i.i.d. symbols drawn from ``seed``.  Each
    omega_k is rebuilt from s_k s_{k+1} ..., so the orbit is a true S-orbit
    of a point within 2^-52 of (x0, omega0).

    Returns arrays (x, omega, symbol).
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    SkewPoint(x0, omega0)
    head = exact_digits(omega0, params)
    total = steps + 1 + lookahead
    sym = np.empty(max(total, head.size), dtype=np.uint8)
    m = min(head.size, sym.size)
    sym[:m] = head[:m]
    sym[m:] = sample_symbol_array(make_rng(seed), sym.size - m, params)
    xs, ws = _kernels.coded_skew_orbit(float(x0), sym, steps, params.alpha, params.beta,
                                       params.p1)
    ws[0] = omega0
    return xs, ws, sym[:steps + 1].copy()


def cylinder_of(word, params):
    """Half-open interval [a, b) of noise values whose coding starts with ``word``."""
    sym = as_symbols(word)
    if sym.size == 0:
        raise ValueError("cylinder of the empty word is all of [0, 1)")
    a = 0.0
    scale = 1.0
    for s in sym:
        if s == 1:
            a += scale * params.p1
            scale *= params.p2
        else:
            scale *= params.p1
    return a, a + scale


def cylinder_midpoint(word, params):
    a, b = cylinder_of(word, params)
    return 0.5 * (a + b)


def all_words(n):
    """All 2^n words of length n as an ``(2^n, n)`` uint8 array, lexicographic."""
    if n == 0:
        return np.zeros((1, 0), dtype=np.uint8)
    return np.array(list(itertools.product((0, 1), repeat=n)), dtype=np.uint8)


def sample_symbol_array(rng, shape, params):
    """I.i.d. symbols, A with probability p1."""
    return (rng.random(shape) >= params.p1).astype(np.uint8)


def sample_symbols(seed, n, params):
    """Random word of length ``n``; reproducible for a fixed seed."""
    if n < 1:
        raise ValueError("n must be >= 1")
    sym = sample_symbol_array(make_rng(seed), n, params)
    return SymbolString.from_word(sym, params)
