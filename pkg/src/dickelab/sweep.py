"""Parameter sweeps across all methods, with CSV persistence and config files.

One sweep record holds everything computed at a single ``(n_atoms, gamma)``
point.  The CSV schema is fixed (see :data:`CSV_COLUMNS`): two key columns
followed by one block per method in :data:`METHODS` order, each block being
``energy, q, theta, n_photons, jz`` plus ``fidelity`` and ``n_max`` for the
exact methods and a trailing ``error`` marker column.  Cells for methods that
were not requested, or quantities a method does not produce, are empty -
never zero.  Floats are serialized with 17 significant digits, so a write /
read-back round trip is bit exact, and re-running a sweep with the same
config and seed reproduces the data file byte for byte.  Wall-clock timings
go to the metadata sidecar, not the data rows, for the same reason.

Config files are flat ``key = value`` text; see :data:`CONFIG_KEYS`.
"""

from __future__ import annotations

import csv
import io
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import exact, semiclassical
from .errors import ConfigError, DomainError
from .model import ModelParams, build_basis
from .semiclassical import SurfaceGrid

METHODS = ("cs", "sas_even", "sas_odd", "exact_even", "exact_odd")

_BLOCK = ("energy", "q", "theta", "n_photons", "jz")
_EXACT_EXTRAS = ("fidelity", "n_max")


def _method_columns(method: str) -> list[str]:
    cols = [f"{method}_{name}" for name in _BLOCK]
    if method.startswith("exact"):
        cols += [f"{method}_{name}" for name in _EXACT_EXTRAS]
    return cols + [f"{method}_error"]


CSV_COLUMNS = ["n_atoms", "gamma"] + [
    col for method in METHODS for col in _method_columns(method)
]

CURVE_COLUMNS = ["method", "n_atoms", "gamma", "theta_c", "q_norm",
                 "curve_residual", "flagged"]

SURFACE_COLUMNS = ["q", "theta", "energy"]


def format_float(x: float) -> str:
    return format(float(x), ".17g")


@dataclass
class MethodResult:
    """Outputs of one method at one grid point (None = not produced)."""

    energy: float | None = None
    q: float | None = None
    theta: float | None = None
    n_photons: float | None = None
    jz: float | None = None
    fidelity: float | None = None
    n_max: int | None = None
    error: str | None = None
    wall_time: float = 0.0


@dataclass
class SweepRecord:
    """All requested method outputs at one ``(n_atoms, gamma)`` grid point."""

    n_atoms: int
    gamma: float
    results: dict[str, MethodResult] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

CONFIG_KEYS = (
    "n_atoms", "omega_a", "gamma_lo", "gamma_hi", "gamma_step", "gamma_list",
    "methods", "delta_gamma", "tol", "seed", "out",
)


@dataclass(frozen=True)
class SweepConfig:
    """Sweep description; defaults mirror the standard study (N = 20 and 60)."""

    n_atoms: tuple[int, ...] = (20, 60)
    omega_a: float = 1.0
    gamma_lo: float | None = None
    gamma_hi: float | None = None
    gamma_step: float | None = None
    gamma_list: tuple[float, ...] | None = None
    methods: tuple[str, ...] = METHODS
    delta_gamma: float = 1e-3
    tol: float = 1e-9
    seed: int | None = None
    out: str | None = None

    def validate(self) -> None:
        if not self.n_atoms:
            raise ConfigError("n_atoms must list at least one atom count")
        if any(n < 1 for n in self.n_atoms):
            raise ConfigError(f"atom counts must be >= 1, got {self.n_atoms}")
        if not (math.isfinite(self.omega_a) and self.omega_a > 0):
            raise ConfigError(f"omega_a must be positive, got {self.omega_a}")
        if not self.methods:
            raise ConfigError("methods must not be empty")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ConfigError(f"unknown methods {unknown}; valid: {list(METHODS)}")
        grid = (self.gamma_lo, self.gamma_hi, self.gamma_step)
        has_grid = any(v is not None for v in grid)
        if has_grid and any(v is None for v in grid):
            raise ConfigError("gamma_lo, gamma_hi and gamma_step must be given together")
        if has_grid and self.gamma_list is not None:
            raise ConfigError("give either gamma_lo/hi/step or gamma_list, not both")
        if not has_grid and self.gamma_list is None:
            raise ConfigError("no coupling grid: set gamma_lo/hi/step or gamma_list")
        if has_grid:
            if self.gamma_step <= 0:
                raise ConfigError(f"gamma_step must be positive, got {self.gamma_step}")
            if self.gamma_hi < self.gamma_lo:
                raise ConfigError("gamma_hi must be >= gamma_lo")
        if self.gamma_list is not None:
            if len(self.gamma_list) == 0:
                raise ConfigError("gamma_list must not be empty")
            if any(b <= a for a, b in zip(self.gamma_list, self.gamma_list[1:])):
                raise ConfigError("gamma_list must be strictly ascending")
        if not self.delta_gamma > 0:
            raise ConfigError(f"delta_gamma must be positive, got {self.delta_gamma}")
        if not self.tol > 0:
            raise ConfigError(f"tol must be positive, got {self.tol}")

    def gammas(self) -> np.ndarray:
        self.validate()
        if self.gamma_list is not None:
            return np.asarray(self.gamma_list, dtype=float)
        count = int(math.floor((self.gamma_hi - self.gamma_lo) / self.gamma_step + 1e-9)) + 1
        return self.gamma_lo + self.gamma_step * np.arange(count)


def _parse_value(key: str, text: str):
    try:
        if key == "n_atoms":
            return tuple(int(tok) for tok in text.split(","))
        if key in ("omega_a", "gamma_lo", "gamma_hi", "gamma_step",
                   "delta_gamma", "tol"):
            return float(text)
        if key == "gamma_list":
            return tuple(float(tok) for tok in text.split(","))
        if key == "methods":
            return tuple(tok.strip() for tok in text.split(","))
        if key == "seed":
            return int(text)
        return text  # out
    except ValueError as exc:
        raise ConfigError(f"invalid value for '{key}': {text!r} ({exc})") from exc


def read_config(source) -> SweepConfig:
    """Parse a flat key=value config file (path, or file-like object).

    Unknown or repeated keys and malformed values raise :class:`ConfigError`
    naming the offending line.
    """
    if hasattr(source, "read"):
        lines = source.read().splitlines()
        name = getattr(source, "name", "<config>")
    else:
        with open(source, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        name = str(source)
    values = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{name}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, text = line.partition("=")
        key, text = key.strip(), text.strip()
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{name}:{lineno}: unknown key '{key}'")
        if key in values:
            raise ConfigError(f"{name}:{lineno}: duplicate key '{key}'")
        try:
            values[key] = _parse_value(key, text)
        except ConfigError as exc:
            raise ConfigError(f"{name}:{lineno}: {exc}") from None
    config = SweepConfig(**values)
    config.validate()
    return config


def write_config(config: SweepConfig, target) -> None:
    """Emit a config in the same key=value format (lossless round trip)."""
    own = {f.name: getattr(config, f.name) for f in fields(config)}
    lines = []
    for key in CONFIG_KEYS:
        value = own[key]
        if value is None:
            continue
        if key in ("n_atoms", "methods"):
            text = ",".join(str(v) for v in value)
        elif key == "gamma_list":
            text = ",".join(format_float(v) for v in value)
        elif isinstance(value, float):
            text = format_float(value)
        else:
            text = str(value)
        lines.append(f"{key} = {text}\n")
    if hasattr(target, "write"):
        target.writelines(lines)
    else:
        with open(target, "w", encoding="utf-8") as fh:
            fh.writelines(lines)


# ---------------------------------------------------------------------------
# per-method computations
# ---------------------------------------------------------------------------

def _guard(fn):
    """Run one method unit of work, converting failures into error markers."""
    start = time.perf_counter()
    try:
        result = fn()
        result.wall_time = time.perf_counter() - start
        return result
    except Exception as exc:  # failure isolation: the sweep must continue
        return MethodResult(
            error=f"{type(exc).__name__}: {exc}",
            wall_time=time.perf_counter() - start,
        )


def _cs_result(params: ModelParams) -> MethodResult:
    cp = semiclassical.cs_critical_point(params)
    pt = cp.point
    return MethodResult(
        energy=cp.energy, q=pt.q, theta=pt.theta,
        n_photons=0.5 * (pt.q**2 + pt.p**2),
        jz=-params.j * math.cos(pt.theta),
    )


def _run_cs(n_atoms, omega_a, gammas) -> list[MethodResult]:
    return [
        _guard(lambda g=g: _cs_result(ModelParams(n_atoms, omega_a, float(g))))
        for g in gammas
    ]


def _run_sas(n_atoms, omega_a, gammas, parity, seed) -> list[MethodResult]:
    # warm-start continuation along the ascending coupling ladder keeps the
    # minimizer on the tracked branch near the jump
    rng = np.random.default_rng(seed) if seed is not None else None
    warm = None
    out = []
    for g in gammas:
        params = ModelParams(n_atoms, omega_a, float(g))

        def unit(params=params, warm=warm):
            minimum = semiclassical.sas_minimize(params, parity, warm_start=warm, rng=rng)
            obs = semiclassical.sas_observables(params, minimum.point, parity)
            return MethodResult(
                energy=minimum.energy, q=minimum.point.q, theta=minimum.point.theta,
                n_photons=obs.n_photons, jz=obs.jz,
            )

        result = _guard(unit)
        if result.error is None:
            warm = semiclassical.PhasePoint(result.q, 0.0, result.theta, 0.0)
        out.append(result)
    return out


def _run_exact(n_atoms, omega_a, gammas, parity, delta_gamma, tol, jobs) -> list[MethodResult]:
    sector = parity
    j = n_atoms / 2.0
    try:
        top = float(gammas[-1]) + delta_gamma
        n_max = exact.select_truncation(ModelParams(n_atoms, omega_a, top), tol)
        basis = build_basis(ModelParams(n_atoms, omega_a, 0.0), n_max, sector)
    except Exception as exc:
        message = f"{type(exc).__name__}: {exc}"
        return [MethodResult(error=message) for _ in gammas]

    def solve(gamma: float):
        start = time.perf_counter()
        h = exact.build_hamiltonian(ModelParams(n_atoms, omega_a, gamma), basis)
        state = exact.lowest_eigenpairs(h, 1)[0]
        return state, time.perf_counter() - start

    gammas = np.asarray(gammas, dtype=float)
    uniform = gammas.size > 1 and np.allclose(
        np.diff(gammas), delta_gamma, rtol=1e-9, atol=1e-12
    )
    if uniform:
        points = np.append(gammas, gammas[-1] + delta_gamma)
    else:
        points = np.concatenate([gammas, gammas + delta_gamma])
    try:
        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                solved = list(pool.map(solve, (float(g) for g in points)))
        else:
            solved = [solve(float(g)) for g in points]
    except Exception as exc:
        message = f"{type(exc).__name__}: {exc}"
        return [MethodResult(error=message) for _ in gammas]

    out = []
    for i in range(gammas.size):
        state, wall = solved[i]
        neighbor = solved[i + 1 if uniform else i + gammas.size][0]

        def unit(state=state, neighbor=neighbor):
            obs = exact.observables(state)
            q, theta = exact.to_phase_coordinates(obs, j)
            return MethodResult(
                energy=state.energy, q=q, theta=theta,
                n_photons=obs.n_photons, jz=obs.jz,
                fidelity=exact.fidelity(state, neighbor), n_max=n_max,
            )

        result = _guard(unit)
        result.wall_time += wall
        out.append(result)
    return out


def run_sweep(config: SweepConfig, jobs: int = 1, skip=frozenset()):
    """Run every requested method over the (N, gamma) grid.

    Returns ``(records, metadata)`` with records sorted by ``(n_atoms,
    gamma)``.  A method failure at one grid point leaves an error marker in
    that record and the sweep continues.  ``skip`` is a set of
    ``(n_atoms, format_float(gamma))`` keys to leave out (resume support).
    """
    config.validate()
    gammas = config.gammas()
    if gammas.size == 0:
        raise ConfigError("empty gamma grid")
    metadata = {
        "seed": config.seed,
        "jobs": jobs,
        "methods": ",".join(config.methods),
    }
    records = []
    for n_atoms in sorted(set(config.n_atoms)):
        wanted = [
            (i, float(g)) for i, g in enumerate(gammas)
            if (n_atoms, format_float(g)) not in skip
        ]
        if not wanted:
            continue
        sub = np.array([g for _, g in wanted])
        columns: dict[str, list[MethodResult]] = {}
        for method in config.methods:
            if method == "cs":
                columns[method] = _run_cs(n_atoms, config.omega_a, sub)
            elif method.startswith("sas"):
                columns[method] = _run_sas(
                    n_atoms, config.omega_a, sub, method.removeprefix("sas_"),
                    config.seed,
                )
            else:
                columns[method] = _run_exact(
                    n_atoms, config.omega_a, sub, method.removeprefix("exact_"),
                    config.delta_gamma, config.tol, jobs,
                )
            metadata[f"wall_{method}_n{n_atoms}"] = format_float(
                sum(r.wall_time for r in columns[method])
            )
            marked = [r for r in columns[method] if r.error is not None]
            if marked:
                metadata[f"errors_{method}_n{n_atoms}"] = len(marked)
        for row, (_, g) in enumerate(wanted):
            records.append(SweepRecord(
                n_atoms, g,
                {method: columns[method][row] for method in config.methods},
            ))
    records.sort(key=lambda r: (r.n_atoms, r.gamma))
    metadata["rows"] = len(records)
    return records, metadata


def sweep_has_errors(records) -> bool:
    return any(
        res.error is not None for rec in records for res in rec.results.values()
    )


# ---------------------------------------------------------------------------
# universal-curve dataset
# ---------------------------------------------------------------------------

def curve_row(method, n_atoms, gamma, q, theta, omega_a):
    """One universal-curve table row; points beyond the fold are flagged."""
    q_norm = q / math.sqrt(n_atoms)
    if not 0.0 <= theta < math.pi / 2.0:
        return {
            "method": method, "n_atoms": n_atoms, "gamma": gamma,
            "theta_c": theta, "q_norm": q_norm,
            "curve_residual": None, "flagged": True,
        }
    residual = q_norm - semiclassical.universal_curve(theta, omega_a)
    return {
        "method": method, "n_atoms": n_atoms, "gamma": gamma,
        "theta_c": theta, "q_norm": q_norm,
        "curve_residual": residual, "flagged": False,
    }


def universal_curve_dataset(config: SweepConfig, jobs: int = 1):
    """Sweep, then reduce every method point to (theta_c, q/sqrt(N), residual).

    The residual column is the distance from the method's point to the
    N- and coupling-independent curve, and is the quantity the acceptance
    checks bound.
    """
    records, metadata = run_sweep(config, jobs=jobs)
    rows = []
    for rec in records:
        for method in config.methods:
            res = rec.results[method]
            if res.error is not None or res.q is None or res.theta is None:
                continue
            rows.append(curve_row(
                method, rec.n_atoms, rec.gamma, res.q, res.theta, config.omega_a
            ))
    return rows, metadata


# ---------------------------------------------------------------------------
# CSV persistence
# ---------------------------------------------------------------------------

def _open_out(path):
    if path == "-":
        return sys.stdout, False
    return open(path, "w", encoding="utf-8", newline=""), True


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, float):
        return format_float(value)
    return str(value)


def record_to_row(record: SweepRecord) -> dict[str, str]:
    row = {"n_atoms": str(record.n_atoms), "gamma": format_float(record.gamma)}
    for method in METHODS:
        res = record.results.get(method)
        names = _BLOCK + (_EXACT_EXTRAS if method.startswith("exact") else ())
        for name in names:
            row[f"{method}_{name}"] = _cell(getattr(res, name)) if res else ""
        row[f"{method}_error"] = _cell(res.error) if res else ""
    return row


def _write_rows(columns, dict_rows, path):
    fh, owned = _open_out(path)
    try:
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        writer.writerows(dict_rows)
    finally:
        if owned:
            fh.close()


def write_records(records, path) -> None:
    """Write sweep records as CSV (``path='-'`` streams to stdout)."""
    _write_rows(CSV_COLUMNS, (record_to_row(r) for r in records), path)


def write_raw_rows(rows, path) -> None:
    _write_rows(CSV_COLUMNS, rows, path)


def read_raw_rows(path) -> list[dict[str, str]]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_COLUMNS:
            raise ConfigError(
                f"{path}: header does not match the sweep schema"
            )
        return list(reader)


def read_records(path) -> list[dict]:
    """Read a sweep CSV back into typed dicts (floats, ints, None, strings)."""
    out = []
    for raw in read_raw_rows(path):
        row: dict = {"n_atoms": int(raw["n_atoms"]), "gamma": float(raw["gamma"])}
        for col in CSV_COLUMNS[2:]:
            text = raw[col]
            if text == "":
                row[col] = None
            elif col.endswith("_error"):
                row[col] = text
            elif col.endswith("_n_max"):
                row[col] = int(text)
            else:
                row[col] = float(text)
        out.append(row)
    return out


def write_curve_rows(rows, path) -> None:
    dict_rows = (
        {key: _cell(row[key]) for key in CURVE_COLUMNS} for row in rows
    )
    _write_rows(CURVE_COLUMNS, dict_rows, path)


def write_surface(grid: SurfaceGrid, path) -> None:
    """3-column (q, theta, energy) CSV, row-major; NaN cells are left empty."""
    def rows():
        for i, q in enumerate(grid.q_values):
            for k, th in enumerate(grid.theta_values):
                e = grid.energies[i, k]
                yield {
                    "q": format_float(q),
                    "theta": format_float(th),
                    "energy": "" if math.isnan(e) else format_float(e),
                }
    _write_rows(SURFACE_COLUMNS, rows(), path)


def write_metadata(metadata: dict, config: SweepConfig, path) -> None:
    """key=value sidecar: config echo plus run info (timings are not data)."""
    fh, owned = _open_out(path)
    try:
        buf = io.StringIO()
        write_config(config, buf)
        for line in buf.getvalue().splitlines():
            fh.write(f"config_{line}\n")
        for key in sorted(metadata):
            fh.write(f"{key} = {metadata[key]}\n")
    finally:
        if owned:
            fh.close()
