"""Command-line front end.

Subcommands map 1:1 onto the library: ``critical`` (all three critical-
coupling estimates), ``sweep`` (order parameters over a coupling grid),
``curve`` (universal q-theta dataset), ``fidelity`` (neighbor-state overlap
scan), ``surface`` (energy-surface grid for contouring) and ``jump``
(even-surface discontinuity search).  Data go to ``--out`` (``-`` streamsraw
CSV to stdout); human-readable summaries go to stderr.  Exit codes: 0 ok,
1 usage/config, 2 numeric failure, 3 I/O.  When ``--out`` is omitted and
``DICKELAB_OUTDIR`` is set, files land in that directory; otherwise data
stream to stdout.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys

import numpy as np

from . import __version__, exact, semiclassical, sweep
from .errors import (
    ConfigError,
    DickeError,
    DomainError,
)
from .model import ModelParams, critical_coupling

log = logging.getLogger("dickelab")

OUTDIR_ENV = "DICKELAB_OUTDIR"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); the contract is 1
        raise _UsageError(f"{self.prog}: {message}")


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in text.split(","))


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in text.split(","))


def _str_list(text: str) -> tuple[str, ...]:
    return tuple(tok.strip() for tok in text.split(","))


def _resolve_out(out: str | None, default_name: str) -> str:
    if out is not None:
        return out
    outdir = os.environ.get(OUTDIR_ENV)
    if outdir:
        return os.path.join(outdir, default_name)
    return "-"


def _sidecar(path: str) -> str | None:
    return None if path == "-" else path + ".meta"


def build_parser() -> _Parser:
    parser = _Parser(prog="dickelab", description=__doc__)
    parser.add_argument("--version", action="version", version=f"dickelab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, jobs=False):
        p.add_argument("--out", default=None,
                       help="output CSV path, or '-' for stdout "
                            f"(default: ${OUTDIR_ENV} or stdout)")
        p.add_argument("-v", "--verbose", action="count", default=0,
                       help="increase stderr logging")
        if jobs:
            p.add_argument("--jobs", type=int, default=1,
                           help="worker threads for independent grid points (default 1)")

    p = sub.add_parser("critical", help="critical coupling by all three methods")
    p.add_argument("--n-atoms", type=int, default=20, help="atom count (default 20)")
    p.add_argument("--omega-a", type=float, default=1.0,
                   help="atomic/field frequency ratio (default 1)")
    p.add_argument("--resolution", type=float, default=1e-3,
                   help="bisection resolution for the jump search (default 1e-3)")
    p.add_argument("--fidelity-step", type=float, default=1e-3,
                   help="coupling grid step for the fidelity scan (default 1e-3)")
    p.add_argument("--delta-gamma", type=float, default=1e-3,
                   help="fidelity displacement (default 1e-3)")
    p.add_argument("--tol", type=float, default=1e-9,
                   help="truncation selection tolerance (default 1e-9)")
    p.add_argument("--n-max", type=int, default=None,
                   help="override the automatic Fock cutoff")
    common(p)
    p.set_defaults(func=cmd_critical)

    p = sub.add_parser("sweep", help="order parameters for every method on a coupling grid")
    _add_config_flags(p)
    p.add_argument("--resume", action="store_true",
                   help="skip (N, gamma) rows already present in the output file")
    common(p, jobs=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("curve", help="universal q-theta dataset with residuals")
    _add_config_flags(p)
    common(p, jobs=True)
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("fidelity", help="ground-state fidelity scan over the coupling")
    p.add_argument("--n-atoms", type=int, default=20)
    p.add_argument("--omega-a", type=float, default=1.0)
    p.add_argument("--gamma-lo", type=float, default=None,
                   help="grid start (default 0.9 * critical coupling)")
    p.add_argument("--gamma-hi", type=float, default=None,
                   help="grid end (default 1.4 * critical coupling)")
    p.add_argument("--gamma-step", type=float, default=1e-3)
    p.add_argument("--delta-gamma", type=float, default=1e-3)
    p.add_argument("--sector", choices=("even", "odd"), default="even")
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--n-max", type=int, default=None)
    common(p)
    p.set_defaults(func=cmd_fidelity)

    p = sub.add_parser("surface", help="energy surface on a (q, theta) grid")
    p.add_argument("--parity", choices=("cs", "even", "odd"), required=True)
    p.add_argument("--n-atoms", type=int, default=20)
    p.add_argument("--omega-a", type=float, default=1.0)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--q-min", type=float, default=-3.0)
    p.add_argument("--q-max", type=float, default=0.0)
    p.add_argument("--theta-min", type=float, default=0.0)
    p.add_argument("--theta-max", type=float, default=1.0)
    p.add_argument("--resolution", type=float, default=0.02)
    common(p)
    p.set_defaults(func=cmd_surface)

    p = sub.add_parser("jump", help="locate the even-surface first-order jump")
    p.add_argument("--n-atoms", type=int, default=20)
    p.add_argument("--omega-a", type=float, default=1.0)
    p.add_argument("--gamma-lo", type=float, default=None,
                   help="scan start (default 0.8 * critical coupling)")
    p.add_argument("--gamma-hi", type=float, default=None,
                   help="scan end (default 1.4 * critical coupling)")
    p.add_argument("--resolution", type=float, default=1e-3)
    common(p)
    p.set_defaults(func=cmd_jump)

    return parser


def _add_config_flags(p):
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--n-atoms", type=_int_list, default=None, help="e.g. 20,60")
    p.add_argument("--omega-a", type=float, default=None)
    p.add_argument("--gamma-lo", type=float, default=None)
    p.add_argument("--gamma-hi", type=float, default=None)
    p.add_argument("--gamma-step", type=float, default=None)
    p.add_argument("--gamma-list", type=_float_list, default=None)
    p.add_argument("--methods", type=_str_list, default=None,
                   help=f"subset of {','.join(sweep.METHODS)}")
    p.add_argument("--delta-gamma", type=float, default=None)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)


def _config_from_args(args) -> sweep.SweepConfig:
    if args.config is not None:
        config = sweep.read_config(args.config)
    else:
        config = sweep.SweepConfig()
    overrides = {}
    for key in ("n_atoms", "omega_a", "gamma_lo", "gamma_hi", "gamma_step",
                "gamma_list", "methods", "delta_gamma", "tol", "seed"):
        value = getattr(args, key)
        if value is not None:
            overrides[key] = value
    if overrides:
        from dataclasses import replace
        grid_keys = ("gamma_lo", "gamma_hi", "gamma_step", "gamma_list")
        if any(k in overrides for k in grid_keys):
            # a grid given on the command line replaces the file's grid wholesale
            for k in grid_keys:
                overrides.setdefault(k, None)
        config = replace(config, **overrides)
    config.validate()
    return config


def cmd_critical(args) -> int:
    params = ModelParams(args.n_atoms, args.omega_a, 0.0)
    gc = critical_coupling(args.omega_a)
    rows = [("cs", sweep.format_float(gc), sweep.format_float(0.0))]
    log.info("coherent-state critical coupling: %.6f", gc)

    result = semiclassical.sas_jump_gamma(
        args.n_atoms, args.omega_a,
        scan=(0.8 * gc, 1.4 * gc), target_resolution=args.resolution,
    )
    if result is None:
        rows.append(("sas_jump", "", ""))
        print("no jump found in the scan window", file=sys.stderr)
    else:
        rows.append(("sas_jump", sweep.format_float(result.gamma_c),
                     sweep.format_float(result.resolution)))
        log.info("projected-state jump: %.4f (+/- %.1e)",
                 result.gamma_c, result.resolution)

    step = args.fidelity_step
    grid = np.arange(0.9 * gc, 1.4 * gc + step / 2, step)
    scan = exact.fidelity_scan(
        args.n_atoms, args.omega_a, grid,
        delta_gamma=args.delta_gamma, trunc_tol=args.tol, n_max=args.n_max,
    )
    rows.append(("exact_fidelity", sweep.format_float(scan.gamma_c),
                 sweep.format_float(step)))
    log.info("fidelity minimum: %.4f (grid step %.1e, n_max %d)",
             scan.gamma_c, step, scan.n_max)

    out = _resolve_out(args.out, f"critical_n{args.n_atoms}.csv")
    fh, owned = sweep._open_out(out)
    try:
        fh.write("method,gamma_c,uncertainty\n")
        for row in rows:
            fh.write(",".join(row) + "\n")
    finally:
        if owned:
            fh.close()
    for name, value, unc in rows:
        print(f"{name:>15s}: {value or 'not found'}"
              + (f" +/- {unc}" if unc else ""), file=sys.stderr)
    return 0


def cmd_sweep(args) -> int:
    config = _config_from_args(args)
    out = args.out if args.out is not None else config.out
    out = _resolve_out(out, "sweep.csv")
    skip = frozenset()
    existing = []
    if args.resume and out != "-" and os.path.exists(out):
        existing = sweep.read_raw_rows(out)
        skip = frozenset((int(r["n_atoms"]), r["gamma"]) for r in existing)
        log.info("resume: keeping %d completed rows", len(existing))
    records, metadata = sweep.run_sweep(config, jobs=args.jobs, skip=skip)
    rows = existing + [sweep.record_to_row(r) for r in records]
    rows.sort(key=lambda r: (int(r["n_atoms"]), float(r["gamma"])))
    sweep.write_raw_rows(rows, out)
    sidecar = _sidecar(out)
    if sidecar:
        sweep.write_metadata(metadata, config, sidecar)
    if sweep.sweep_has_errors(records):
        print("sweep finished with per-point error markers", file=sys.stderr)
        return 2
    print(f"wrote {len(rows)} rows", file=sys.stderr)
    return 0


def cmd_curve(args) -> int:
    config = _config_from_args(args)
    out = args.out if args.out is not None else config.out
    out = _resolve_out(out, "curve.csv")
    rows, metadata = sweep.universal_curve_dataset(config, jobs=args.jobs)
    sweep.write_curve_rows(rows, out)
    sidecar = _sidecar(out)
    if sidecar:
        sweep.write_metadata(metadata, config, sidecar)
    expected = len(config.gammas()) * len(set(config.n_atoms)) * len(config.methods)
    if len(rows) < expected:
        print(f"{expected - len(rows)} method points failed and were dropped",
              file=sys.stderr)
        return 2
    print(f"wrote {len(rows)} curve points", file=sys.stderr)
    return 0


def cmd_fidelity(args) -> int:
    gc = critical_coupling(args.omega_a)
    lo = args.gamma_lo if args.gamma_lo is not None else 0.9 * gc
    hi = args.gamma_hi if args.gamma_hi is not None else 1.4 * gc
    step = args.gamma_step
    if not (lo < hi and step > 0):
        raise DomainError("fidelity grid requires gamma_lo < gamma_hi and step > 0")
    grid = np.arange(lo, hi + step / 2, step)
    scan = exact.fidelity_scan(
        args.n_atoms, args.omega_a, grid,
        delta_gamma=args.delta_gamma, sector=args.sector,
        trunc_tol=args.tol, n_max=args.n_max,
    )
    out = _resolve_out(args.out, f"fidelity_n{args.n_atoms}.csv")
    fh, owned = sweep._open_out(out)
    try:
        fh.write("gamma,fidelity,susceptibility,flagged\n")
        for i, g in enumerate(scan.gamma_grid):
            fh.write(",".join((
                sweep.format_float(g),
                sweep.format_float(scan.fidelity[i]),
                sweep.format_float(scan.susceptibility[i]),
                "true" if scan.flagged[i] else "false",
            )) + "\n")
    finally:
        if owned:
            fh.close()
    print(f"fidelity minimum at gamma = {scan.gamma_c:.6f} "
          f"(n_max {scan.n_max}, delta_gamma {scan.delta_gamma})", file=sys.stderr)
    return 0


def cmd_surface(args) -> int:
    params = ModelParams(args.n_atoms, args.omega_a, args.gamma)
    grid = semiclassical.surface_grid(
        params, args.parity,
        (args.q_min, args.q_max), (args.theta_min, args.theta_max),
        args.resolution,
    )
    out = _resolve_out(args.out, f"surface_{args.parity}.csv")
    sweep.write_surface(grid, out)
    print(f"wrote {grid.q_values.size * grid.theta_values.size} grid points",
          file=sys.stderr)
    return 0


def cmd_jump(args) -> int:
    gc = critical_coupling(args.omega_a)
    lo = args.gamma_lo if args.gamma_lo is not None else 0.8 * gc
    hi = args.gamma_hi if args.gamma_hi is not None else 1.4 * gc
    result = semiclassical.sas_jump_gamma(
        args.n_atoms, args.omega_a, scan=(lo, hi),
        target_resolution=args.resolution,
    )
    out = _resolve_out(args.out, f"jump_n{args.n_atoms}.csv")
    fh, owned = sweep._open_out(out)
    try:
        fh.write("gamma_c,q_before,q_after,resolution\n")
        if result is not None:
            fh.write(",".join(sweep.format_float(v) for v in (
                result.gamma_c, result.q_before, result.q_after, result.resolution,
            )) + "\n")
    finally:
        if owned:
            fh.close()
    if result is None:
        print(f"no jump found in [{lo:g}, {hi:g}]", file=sys.stderr)
    else:
        print(f"jump at gamma = {result.gamma_c:.6f} "
              f"(q: {result.q_before:.3f} -> {result.q_after:.3f})", file=sys.stderr)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(
        stream=sys.stderr,
        level=max(logging.WARNING - 10 * args.verbose, logging.DEBUG),
        format="%(levelname)s %(message)s",
    )
    try:
        return args.func(args)
    except (ConfigError, _UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DickeError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
