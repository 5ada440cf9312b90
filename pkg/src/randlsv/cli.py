"""Command-line interface: ``randlsv <command> [options]``.

Exit codes: 0 success, 1 a verification check failed, 2 bad usage or
parameters, 3 a numerical method did not converge.
"""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from randlsv import io
from randlsv.system import DEFAULT_PARAMS, SystemParams

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_NOT_CONVERGED = 3

SUITE_CHOICES = ("domination", "bounds", "k0", "hoeffding", "distortion", "schwarzian", "all")


class UsageError(Exception):
    pass


class NotConverged(Exception):
    pass


# ------------------------------------------------------------------ parsing


def _positive_int(text):
    v = int(float(text))
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return v


def _common(p):
    g = p.add_argument_group("system")
    g.add_argument("--alpha", type=float, default=DEFAULT_PARAMS.alpha)
    g.add_argument("--beta", type=float, default=DEFAULT_PARAMS.beta)
    g.add_argument("--p1", type=float, default=DEFAULT_PARAMS.p1)
    g.add_argument("--strict-regime", action="store_true",
                   help="require beta <= 1")
    r = p.add_argument_group("run")
    r.add_argument("--seed", type=_positive_int, default=0)
    r.add_argument("--out", default="-", help="output path ('-' for stdout)")
    r.add_argument("--config", help="flat key=value file; command-line flags win")
    r.add_argument("--threads", type=int, default=None,
                   help="cap on worker threads (1 gives bit-identical reruns)")
    r.add_argument("--no-timing", action="store_true",
                   help="omit wall-clock runtime so equal seeds give equal bytes")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="randlsv",
        description="Random compositions of two LSV maps: simulation, tower "
                    "statistics, transfer operators and checks.")
    parser.add_argument("--version", action="version", version=io.TOOL)
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("simulate", help="skew-product orbit CSV (step, x, omega, symbol)")
    _common(p)
    p.add_argument("--x0", type=float, default=None, help="default: drawn from the seed")
    p.add_argument("--omega0", type=float, default=None, help="default: drawn from the seed")
    p.add_argument("--steps", type=_positive_int, default=1000)

    p = sub.add_parser("tower", help="base partition cells up to return time i-max")
    _common(p)
    p.add_argument("--i-max", type=int, default=6)

    p = sub.add_parser("asymptotics", help="E x_n and tail tables with power-law fits")
    _common(p)
    p.add_argument("--n-max", type=_positive_int, default=10_000)
    p.add_argument("--samples", type=_positive_int, default=100_000)
    p.add_argument("--table-out", default=None, help="CSV of the E x_n table")
    p.add_argument("--tail-out", default=None, help="CSV of the tail table")

    p = sub.add_parser("density", help="stationary density of the annealed Ulam matrix")
    _common(p)
    _grid_args(p)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iter", type=_positive_int, default=200_000)
    p.add_argument("--summary-out", default=None, help="JSON summary path")

    p = sub.add_parser("correlation", help="annealed correlations CSV (n, cor, se, cor_operator)")
    _common(p)
    _grid_args(p)
    p.add_argument("--phi", default="x")
    p.add_argument("--psi", default="x")
    p.add_argument("--n-max", type=_positive_int, default=100)
    p.add_argument("--samples", type=_positive_int, default=100_000,
                   help="Monte Carlo walkers (0: operator only)")
    p.add_argument("--burn-in", type=_positive_int, default=10_000)

    p = sub.add_parser("verify", help="run lemma checks and write a JSON ledger")
    _common(p)
    p.add_argument("suite", help="|".join(SUITE_CHOICES))
    p.add_argument("--depth", type=int, default=12)
    p.add_argument("--samples", type=_positive_int, default=10_000)
    p.add_argument("--pairs", type=_positive_int, default=10_000,
                   help="distortion sample pairs")
    p.add_argument("--distortion-csv", default=None)
    return parser


def _grid_args(p):
    p.add_argument("--grid-size", type=_positive_int, default=4096)
    p.add_argument("--grid", choices=("uniform", "geometric"), default="uniform")


def read_config(path):
    """Parse a flat ``key = value`` file; '#' starts a comment."""
    out = {}
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    with fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            if not sep:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            out[key.strip().replace("-", "_")] = val.strip()
    return out


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        cfg = read_config(args.config)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest: a for a in sub._actions}
        unknown = sorted(k for k in cfg if k not in known or k in ("config", "help"))
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        for key, val in cfg.items():
            act = known[key]
            if isinstance(act, argparse._StoreTrueAction):
                cfg[key] = val.lower() in ("1", "true", "yes", "on")
        # argparse converts string defaults through each option's type
        sub.set_defaults(**cfg)
        args = parser.parse_args(argv)
    return parser, args


def _params(args):
    try:
        return SystemParams(args.alpha, args.beta, args.p1, strict_regime=args.strict_regime)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _meta(args, params, **extra):
    return io.RunMeta(params.as_dict(), args.seed, args.command,
                      timing=not args.no_timing, extra=extra)


# ------------------------------------------------------------------ commands


def cmd_simulate(args):
    from randlsv.system import make_rng, simulate

    params = _params(args)
    rng = make_rng(args.seed)
    start = rng.random(2)
    x0 = float(start[0]) if args.x0 is None else args.x0
    w0 = float(start[1]) if args.omega0 is None else args.omega0
    if not 0.0 <= x0 <= 1.0 or not 0.0 <= w0 < 1.0:
        raise UsageError("need 0 <= x0 <= 1 and 0 <= omega0 < 1")
    xs, ws, sym = simulate(x0, w0, args.steps, params, seed=args.seed + 1)
    meta = _meta(args, params, x0=x0, omega0=w0, steps=args.steps)
    io.write_array_csv(args.out, ["step", "x", "omega", "symbol"],
                       [np.arange(args.steps + 1), xs, ws, sym.astype(np.int64)], meta)
    return EXIT_OK


def cmd_tower(args):
    from randlsv.tower import base_partition

    params = _params(args)
    if not 1 <= args.i_max <= 20:
        raise UsageError("--i-max must be between 1 and 20")
    cells = base_partition(args.i_max, params)
    rows = [(c.i, c.word, c.omega_lo, c.omega_hi, c.xprime_i, c.xprime_im1, c.measure)
            for c in cells]
    meta = _meta(args, params, i_max=args.i_max, n_cells=len(cells),
                 total_measure=float(sum(c.measure for c in cells)))
    io.write_csv(args.out, ["i", "j_word", "omega_lo", "omega_hi", "xprime_i",
                            "xprime_im1", "measure"], rows, meta)
    return EXIT_OK


def _fit_or_none(n, y, window, se=None):
    from randlsv.verify import InsufficientPoints, fit_power_law

    try:
        f = fit_power_law(n, y, window=window, se=se)
    except InsufficientPoints as exc:
        return {"exponent": None, "error": str(exc), "window": list(window)}
    return {"exponent": f.exponent, "stderr": f.stderr, "window": list(f.window),
            "r_squared": f.r_squared, "n_points": f.n_points}


def cmd_asymptotics(args):
    from randlsv.tower import expectation_table, expected_return_time, tail_Rhat

    params = _params(args)
    if args.n_max < 100:
        raise UsageError("--n-max must be at least 100 for the power-law fits")
    if args.samples < 2:
        raise UsageError("--samples must be at least 2")
    table = expectation_table(args.n_max, params, samples=args.samples, seed=args.seed)
    n = np.arange(1, args.n_max + 1)
    e_lo = max(50, args.n_max // 100)
    e_fit = _fit_or_none(n, table.mean, (e_lo, args.n_max),
                         se=np.where(table.exact, 0.0, table.se))
    t_hi = args.n_max // 5
    t_lo = max(50, args.n_max // 100)
    tail = None
    t_fit = {"exponent": None, "error": "n-max too small for a tail grid"}
    if t_hi > t_lo:
        grid = np.unique(np.geomspace(t_lo, t_hi, 24).astype(int))
        tail = tail_Rhat(grid, params, table=table)
        # only rows whose truncated sum met the stopping rule enter the fit
        ok = tail.n[tail.stopped]
        if ok.size >= 2:
            t_fit = _fit_or_none(ok, tail.values[tail.stopped], (t_lo, int(ok.max())))
        else:
            t_fit = {"exponent": None, "error": "no tail row met the stopping rule"}
        t_fit["rows_not_stopped"] = int(np.count_nonzero(~tail.stopped))
    meta = _meta(args, params, n_max=args.n_max, samples=args.samples)
    summary = {
        "expectation": {"fit": e_fit, "target_exponent": -1.0 / params.alpha},
        "tail": {"fit": t_fit, "target_exponent": 1.0 - 1.0 / params.alpha,
                 "all_stopped": None if tail is None else tail.converged,
                 "all_certified": None if tail is None else bool(np.all(tail.certified))},
        "expected_return_time": expected_return_time(table),
    }
    io.write_json(args.out, summary, meta)
    if args.table_out:
        io.write_csv(args.table_out, ["n", "E_exact", "E_mc", "se", "x_n_alpha", "x_n_beta"],
                     table.rows(), _meta(args, params, n_max=args.n_max, samples=args.samples))
    if args.tail_out and tail is not None:
        rows = zip(tail.n, tail.values, tail.k_max, tail.remainder, tail.bound,
                   tail.stopped, tail.certified)
        io.write_csv(args.tail_out, ["n", "tail", "k_max", "remainder", "remainder_bound",
                                     "stopped", "certified"], rows,
                     _meta(args, params, method=tail.method))
    return EXIT_OK


def _grid(args, params):
    from randlsv.transfer import default_geometric_grid, uniform_grid

    if args.grid_size < 2:
        raise UsageError("--grid-size must be at least 2")
    if args.grid == "uniform":
        return uniform_grid(args.grid_size)
    return default_geometric_grid(args.grid_size, params.alpha)


def _density(args, params, tol=1e-10, max_iter=200_000):
    from randlsv.transfer import annealed_matrix, stationary_density

    grid = _grid(args, params)
    mat = annealed_matrix(params, grid)
    dens = stationary_density(mat, grid, tol=tol, max_iter=max_iter)
    if not dens.converged:
        raise NotConverged(f"power iteration stopped at residual {dens.residual:.3e} "
                           f"after {dens.iterations} iterations")
    return grid, mat, dens


def cmd_density(args):
    from randlsv.transfer import local_exponent_near_zero

    params = _params(args)
    grid, _, dens = _density(args, params, args.tol, args.max_iter)
    b = grid.breakpoints
    meta = _meta(args, params, grid=args.grid, n_bins=grid.n_bins, residual=dens.residual,
                 iterations=dens.iterations)
    io.write_array_csv(args.out, ["bin_lo", "bin_hi", "f_value"], [b[:-1], b[1:], dens.values],
                       meta)
    if args.summary_out:
        io.write_json(args.summary_out, {
            "grid": {"kind": args.grid, "n_bins": grid.n_bins},
            "residual": dens.residual, "iterations": dens.iterations,
            "converged": dens.converged, "mass": float(dens.masses.sum()),
            "mass_below_1_16": dens.mass_below(1.0 / 16.0),
            "local_exponent_near_0": local_exponent_near_zero(dens),
        }, _meta(args, params))
    return EXIT_OK


def cmd_correlation(args):
    from randlsv.transfer import OBSERVABLES, correlation_mc, correlation_operator

    params = _params(args)
    try:
        phi, psi = OBSERVABLES[args.phi], OBSERVABLES[args.psi]
    except KeyError as exc:
        raise UsageError(f"unknown observable {exc.args[0]!r}; choose from "
                         f"{', '.join(OBSERVABLES)}") from None
    if not psi.is_holder:
        raise UsageError(f"psi={psi.name} is not Holder continuous")
    _, mat, dens = _density(args, params)
    op = correlation_operator(mat, dens, phi, psi, args.n_max)
    if args.samples >= 2:
        cor, se = correlation_mc(params, phi, psi, args.n_max, samples=args.samples,
                                 burn_in=args.burn_in, seed=args.seed)
    else:
        cor, se = op.copy(), np.full(op.size, math.nan)
    meta = _meta(args, params, phi=phi.name, psi=psi.name, grid=args.grid,
                 n_bins=args.grid_size, samples=args.samples, burn_in=args.burn_in,
                 residual=dens.residual)
    rows = zip(range(args.n_max + 1), cor, se, op)
    io.write_csv(args.out, ["n", "cor", "se", "cor_operator"], rows, meta)
    return EXIT_OK


def cmd_verify(args, parser):
    from randlsv.verify import distortion_scan, lemma_suite

    if args.suite not in SUITE_CHOICES:
        sub = parser._subparsers._group_actions[0].choices["verify"]
        sub.print_usage(sys.stderr)
        raise UsageError(f"unknown suite {args.suite!r}; choose from {'|'.join(SUITE_CHOICES)}")
    params = _params(args)
    if args.depth < 1:
        raise UsageError("--depth must be >= 1")
    results = lemma_suite(params, depth=args.depth, checks=args.suite,
                          samples=args.samples, seed=args.seed,
                          distortion_pairs=args.pairs)
    ok = all(r.passed for r in results)
    io.write_json(args.out, {"suite": args.suite, "pass": ok,
                             "results": [r.as_dict() for r in results]},
                  _meta(args, params, depth=args.depth))
    if args.distortion_csv:
        if params.beta > 1.0:
            raise UsageError("distortion samples need beta <= 1")
        rep = distortion_scan(params, n_pairs=args.pairs, seed=args.seed)
        io.write_csv(args.distortion_csv,
                     ["i", "word", "x1", "x2", "ratio_minus_1", "s", "theta_pow_s"],
                     rep.samples, _meta(args, params, C_F=rep.C_F, C_F_half=rep.C_F_half))
    return EXIT_OK if ok else EXIT_CHECK_FAILED


COMMANDS = {
    "simulate": cmd_simulate,
    "tower": cmd_tower,
    "asymptotics": cmd_asymptotics,
    "density": cmd_density,
    "correlation": cmd_correlation,
}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        parser, args = parse_args(argv)
    except UsageError as exc:
        print(f"randlsv: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.threads is not None:
        import numba

        if args.threads < 1:
            print("randlsv: error: --threads must be >= 1", file=sys.stderr)
            return EXIT_USAGE
        # the kernels are serial; skip the TBB probe, which warns on old TBB builds
        numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
        numba.set_num_threads(min(args.threads, numba.config.NUMBA_NUM_THREADS))
    try:
        if args.command == "verify":
            return cmd_verify(args, parser)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"randlsv: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NotConverged as exc:
        print(f"randlsv: not converged: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except OSError as exc:
        print(f"randlsv: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
