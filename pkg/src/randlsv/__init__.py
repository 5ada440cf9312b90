"""Numerical laboratory for i.i.d. random compositions of two LSV maps."""

__version__ = "0.1.0"

from randlsv.maps import (
    Branch,
    invert_left,
    invert_right,
    lsv_deriv,
    lsv_eval,
    schwarzian,
    schwarzian_threshold,
)
from randlsv.system import (
    DEFAULT_PARAMS,
    RNG_ALGORITHM,
    SkewPoint,
    Symbol,
    SymbolString,
    SystemParams,
    cylinder_of,
    iterate,
    noise_step,
    sample_symbols,
    skew_step,
    symbol_of,
)
