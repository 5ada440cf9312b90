"""Versioned CSV / JSON output with run metadata.

CSV layout::

    # format=1
    # tool=randlsv 0.1.0
    # params={"alpha": 0.5, ...}
    # seed=0
    # rng=numpy.random.Philox(4x64, 10 rounds)
    # runtime_s=1.25
    col_a,col_b,...
    ...

Reals are written with 17 significant digits so they read back bit for bit.
"""

from __future__ import annotations

import contextlib
import io
import json
import math
import sys
import time

import numpy as np

from randlsv import __version__
from randlsv.system import RNG_ALGORITHM

FORMAT_VERSION = 1
TOOL = f"randlsv {__version__}"


class RunMeta:
    """Metadata block shared by every output file of one run."""

    def __init__(self, params=None, seed=None, command=None, timing=True, extra=None):
        self.params = params
        self.seed = seed
        self.command = command
        self.timing = timing
        self.extra = dict(extra or {})
        self._t0 = time.perf_counter()

    def runtime(self):
        return round(time.perf_counter() - self._t0, 3) if self.timing else None

    def as_dict(self):
        out = {"format": FORMAT_VERSION, "tool": TOOL}
        if self.command is not None:
            out["command"] = self.command
        out["params"] = self.params
        out["seed"] = self.seed
        out["rng"] = RNG_ALGORITHM
        out.update(self.extra)
        out["runtime_s"] = self.runtime()
        return out


def fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    return str(v)


def _clean(obj):
    """Make numpy scalars / arrays and non-finite floats JSON-safe."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


@contextlib.contextmanager
def _open_out(path):
    if path is None or str(path) == "-":
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            yield fh


def format_csv(columns, rows, meta):
    buf = io.StringIO()
    m = meta.as_dict()
    buf.write(f"# format={FORMAT_VERSION}\n")
    for key, val in m.items():
        if key == "format":
            continue
        if not isinstance(val, str):
            val = json.dumps(_clean(val), sort_keys=True)
        buf.write(f"# {key}={val}\n")
    buf.write(",".join(columns) + "\n")
    for row in rows:
        buf.write(",".join(fmt(v) for v in row) + "\n")
    return buf.getvalue()


def write_csv(path, columns, rows, meta):
    text = format_csv(columns, rows, meta)
    with _open_out(path) as fh:
        fh.write(text)


def write_array_csv(path, columns, arrays, meta):
    """Column arrays of equal length; faster than row tuples for long orbits."""
    m = meta.as_dict()
    with _open_out(path) as fh:
        fh.write(f"# format={FORMAT_VERSION}\n")
        for key, val in m.items():
            if key == "format":
                continue
            if not isinstance(val, str):
                val = json.dumps(_clean(val), sort_keys=True)
            fh.write(f"# {key}={val}\n")
        fh.write(",".join(columns) + "\n")
        ints = [np.issubdtype(np.asarray(a).dtype, np.integer) for a in arrays]
        line = ",".join("%d" if i else "%.17g" for i in ints) + "\n"
        cols = [np.asarray(a).tolist() for a in arrays]
        chunk = 100_000
        for k in range(0, len(cols[0]), chunk):
            fh.write("".join(line % row for row in zip(*(c[k:k + chunk] for c in cols))))


def write_json(path, payload, meta):
    doc = meta.as_dict()
    doc.update(_clean(payload))
    text = json.dumps(_clean(doc), indent=2, sort_keys=False) + "\n"
    with _open_out(path) as fh:
        fh.write(text)


def read_csv(path):
    """Inverse of :func:`write_csv`: returns (meta dict, column names, float array)."""
    meta = {}
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    k = 0
    while k < len(lines) and lines[k].startswith("#"):
        key, _, val = lines[k][1:].strip().partition("=")
        meta[key] = val
        k += 1
    if meta.get("format") != str(FORMAT_VERSION):
        raise ValueError(f"unsupported format tag {meta.get('format')!r}")
    columns = lines[k].split(",")
    body = [ln.split(",") for ln in lines[k + 1:] if ln]
    data = np.array([[_parse(v) for v in row] for row in body], dtype=float)
    return meta, columns, data.reshape(len(body), len(columns))


def _parse(v):
    try:
        return float(v)
    except ValueError:
        return math.nan
