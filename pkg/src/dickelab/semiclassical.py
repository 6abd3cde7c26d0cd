"""Variational energy surfaces: plain coherent states and their parity projections.

Two families of trial states are evaluated on the phase space
``(q, p, theta, phi)``:

* product coherent states (field x spin), whose energy surface

      H_cl = (p^2 + q^2)/2 - j*omega_a*cos(theta)
             + sqrt(2N)*gamma*q*sin(theta)*cos(phi)

  has closed-form minima and a critical coupling sqrt(omega_a)/2;

* even/odd projections of the same states onto the two sectors of the
  total-excitation parity.  Their surfaces depend on N beyond the overall
  scale, must be minimized numerically, and the even surface develops two
  competing local minima whose exchange of stability marks the finite-N
  transition.

Both projected surfaces involve ``(cos theta)^(+-N)``, which overflows for
large N when evaluated directly; everything here goes through
``y = exp(-(q^2+p^2)) * cos(theta)^N`` and its companions computed in log
form, which keeps the expressions finite for all ``theta != pi`` and any N.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import ConvergenceError, DomainError, SingularSurfaceError
from .model import (
    ModelParams,
    Observables,
    PhasePoint,
    critical_coupling,
)

# Radius in (q, p, theta) below which the odd projection is numerically
# ill-conditioned (its normalization diverges at the origin).  The odd
# minimum always carries at least one excitation, so the exclusion cannot
# clip it.
GUARD_RADIUS = 1e-6

# |delta q| between adjacent minimizers that counts as a genuine first-order
# jump rather than smooth drift.
JUMP_THRESHOLD = 0.5

# Minimization stays below the equator: every minimum of either family has
# cos(theta) > 0, and both surfaces keep growing as theta -> pi/2 at the
# couplings of interest.
_THETA_LIMIT = math.pi / 2.0 - 1e-9

_NM_OPTIONS = dict(xatol=1e-10, fatol=1e-12, maxiter=4000, maxfev=8000)


# ---------------------------------------------------------------------------
# raw kernels (vectorized over q, p, theta, phi)
# ---------------------------------------------------------------------------

def _cs_energy_raw(n, omega_a, gamma, q, p, theta, phi):
    q, p, theta, phi = np.broadcast_arrays(q, p, theta, phi)
    return (
        0.5 * (p * p + q * q)
        - 0.5 * n * omega_a * np.cos(theta)
        + np.sqrt(2.0 * n) * gamma * q * np.sin(theta) * np.cos(phi)
    )


def _parity_pieces(n, q, p, theta):
    """Shared building blocks y = e^{-r^2} cos^N, y1 = e^{-r^2} cos^(N-1)."""
    r2 = p * p + q * q
    c = np.cos(theta)
    absc = np.abs(c)
    with np.errstate(divide="ignore"):
        logc = np.log(absc)  # -inf at the equator; exp(-inf) = 0 below
    t = r2 - n * logc
    u1 = r2 - (n - 1) * logc
    neg = c < 0
    sgn_n = np.where(neg & (n % 2 == 1), -1.0, 1.0)
    sgn_n1 = np.where(neg & ((n - 1) % 2 == 1), -1.0, 1.0)
    y = sgn_n * np.exp(-t)
    y1 = sgn_n1 * np.exp(-u1)
    one_minus_y = np.where(y > 0, -np.expm1(-t), 1.0 - y)
    return r2, c, np.sin(theta), y, y1, one_minus_y


def _sas_energy_raw(n, omega_a, gamma, q, p, theta, phi, parity):
    q, p, theta, phi = np.broadcast_arrays(
        *(np.asarray(a, dtype=float) for a in (q, p, theta, phi))
    )
    r2, c, s, y, y1, one_minus_y = _parity_pieces(n, q, p, theta)
    pref = np.sqrt(2.0 * n) * gamma
    with np.errstate(divide="ignore", invalid="ignore"):
        if parity == "even":
            one_plus_y = 1.0 + y
            return (
                0.5 * r2 * (one_minus_y / one_plus_y)
                - 0.5 * n * omega_a * (c + s * s * y1 / one_plus_y)
                + pref * s * (p * np.sin(phi) * y1 + q * np.cos(phi)) / one_plus_y
            )
        return (
            -0.5 * r2
            + (
                r2
                - 0.5 * n * omega_a * (c - y1)
                + pref * s * (q * np.cos(phi) - p * np.sin(phi) * y1)
            )
            / one_minus_y
        )


def _sas_observables_raw(n, q, p, theta, parity):
    r2, c, _s, y, y1, one_minus_y = _parity_pieces(n, q, p, theta)
    j = n / 2.0
    one_plus_y = 1.0 + y
    with np.errstate(divide="ignore", invalid="ignore"):
        if parity == "even":
            n_ph = 0.5 * r2 * one_minus_y / one_plus_y
            jz = -j * (c + y1) / one_plus_y
        else:
            n_ph = 0.5 * r2 * one_plus_y / one_minus_y
            jz = -j * (c - y1) / one_minus_y
    return n_ph, jz


def _check_parity(parity):
    if parity not in ("even", "odd"):
        raise DomainError(f"parity must be 'even' or 'odd', got {parity!r}")


def _check_point(point):
    for v in (point.q, point.p, point.theta, point.phi):
        if not math.isfinite(v):
            raise DomainError(f"phase point has non-finite coordinates: {point}")


def _guarded(point_radius2):
    return point_radius2 < GUARD_RADIUS * GUARD_RADIUS


def _cos_phi_branch(phi_branch):
    if abs(phi_branch) <= 1e-12:
        return 1.0
    if abs(phi_branch - math.pi) <= 1e-12:
        return -1.0
    raise DomainError(f"phi_branch must be 0 or pi, got {phi_branch!r}")


# ---------------------------------------------------------------------------
# coherent-state surface
# ---------------------------------------------------------------------------

def cs_energy(params: ModelParams, point: PhasePoint) -> float:
    """Coherent-state energy at one phase-space point."""
    _check_point(point)
    return float(
        _cs_energy_raw(
            params.n_atoms, params.omega_a, params.gamma,
            point.q, point.p, point.theta, point.phi,
        )
    )


@dataclass(frozen=True)
class CriticalPoint:
    """Minimizer of the coherent-state surface for one azimuth branch."""

    point: PhasePoint
    energy: float
    branch: str  # 'normal' | 'superradiant'
    phi_branch: float


def cs_critical_point(params: ModelParams, phi_branch: float = 0.0) -> CriticalPoint:
    """Closed-form minimum of the coherent-state surface.

    Below the critical coupling the minimum sits at the origin; above it,
    ``cos(theta) = (gamma_c/gamma)^2`` and the quadrature is displaced to
    ``q = -2 sqrt(j) gamma sqrt(1 - (gamma_c/gamma)^4) cos(phi_branch)``.
    """
    cphi = _cos_phi_branch(phi_branch)
    gamma = params.gamma
    gc = critical_coupling(params.omega_a)
    if abs(gamma) <= gc:
        point = PhasePoint(0.0, 0.0, 0.0, phi_branch)
        return CriticalPoint(point, cs_energy(params, point), "normal", phi_branch)
    u = (gc / gamma) ** 2
    theta = math.acos(u)
    q = -2.0 * math.sqrt(params.j) * gamma * math.sqrt(1.0 - u * u) * cphi
    point = PhasePoint(q, 0.0, theta, phi_branch)
    return CriticalPoint(point, cs_energy(params, point), "superradiant", phi_branch)


def universal_curve(theta, omega_a: float, phi_branch: float = 0.0):
    """Coupling- and N-independent quadrature along the minimum branch.

    Returns ``q/sqrt(N) = -sqrt(omega_a) * sin(theta)/sqrt(2 cos(theta))
    * cos(phi_branch)``, valid for ``0 <= theta < pi/2``.  Scalar in, scalar
    out; arrays broadcast.
    """
    if not (np.isfinite(omega_a) and omega_a > 0):
        raise DomainError(f"omega_a must be positive and finite, got {omega_a}")
    cphi = _cos_phi_branch(phi_branch)
    th = np.asarray(theta, dtype=float)
    if np.any(~np.isfinite(th)) or np.any(th < 0) or np.any(th >= math.pi / 2.0):
        raise DomainError("theta must lie in [0, pi/2) for the universal curve")
    out = -math.sqrt(omega_a) * np.sin(th) / np.sqrt(2.0 * np.cos(th)) * cphi
    return float(out) if np.isscalar(theta) else out


# ---------------------------------------------------------------------------
# parity-projected surfaces
# ---------------------------------------------------------------------------

def sas_energy(params: ModelParams, point: PhasePoint, parity: str) -> float:
    """Energy of the parity-projected coherent state at one point.

    The odd projection has no norm at the phase-space origin; points within
    ``GUARD_RADIUS`` of it (in ``(q, p, theta)``) raise
    :class:`SingularSurfaceError`.
    """
    _check_parity(parity)
    _check_point(point)
    if parity == "odd" and _guarded(point.q**2 + point.p**2 + point.theta**2):
        raise SingularSurfaceError(
            f"odd projection is singular within {GUARD_RADIUS} of the origin: {point}"
        )
    return float(
        _sas_energy_raw(
            params.n_atoms, params.omega_a, params.gamma,
            point.q, point.p, point.theta, point.phi, parity,
        )
    )


def sas_observables(params: ModelParams, point: PhasePoint, parity: str) -> Observables:
    """Photon number and collective inversion in the projected state."""
    _check_parity(parity)
    _check_point(point)
    if parity == "odd" and _guarded(point.q**2 + point.p**2 + point.theta**2):
        raise SingularSurfaceError(
            f"odd projection is singular within {GUARD_RADIUS} of the origin: {point}"
        )
    n_ph, jz = _sas_observables_raw(
        params.n_atoms, point.q, point.p, point.theta, parity
    )
    return Observables(float(n_ph), float(jz))


@dataclass(frozen=True)
class SasMinimum:
    """Global minimum of one projected surface at fixed (N, gamma)."""

    parity: str
    point: PhasePoint
    energy: float
    n_atoms: int
    gamma: float


@dataclass(frozen=True)
class JumpResult:
    """Location of the discontinuity of the even-surface global minimizer."""

    gamma_c: float
    q_before: float
    q_after: float
    resolution: float


def _nelder_mead(fun, x0, steps):
    x0 = np.asarray(x0, dtype=float)
    simplex = [x0]
    for i, h in enumerate(steps):
        v = x0.copy()
        v[i] += h
        simplex.append(v)
    return minimize(
        fun, x0, method="Nelder-Mead",
        options=dict(initial_simplex=np.asarray(simplex), **_NM_OPTIONS),
    )


def _sas_objective(params, parity):
    n = params.n_atoms
    omega_a = params.omega_a
    gamma = params.gamma
    sqn = math.sqrt(n)
    odd = parity == "odd"

    def fun(x):
        qt, theta = x
        if not (0.0 <= theta <= _THETA_LIMIT):
            return np.inf
        q = qt * sqn
        if odd and _guarded(q * q + theta * theta):
            return np.inf
        return float(_sas_energy_raw(n, omega_a, gamma, q, 0.0, theta, 0.0, parity))

    return fun


def _seed_points(params, parity, warm_start, rng):
    """Multistart seeds in scaled coordinates (q/sqrt(N), theta)."""
    gamma = params.gamma
    seeds = [(0.0, 0.0)] if parity == "even" else [(-0.05, 0.05)]
    gc = critical_coupling(params.omega_a)
    if abs(gamma) > gc:
        cp = cs_critical_point(params).point
        seeds.append((cp.q / math.sqrt(params.n_atoms), cp.theta))
    if warm_start is not None:
        seeds.append((warm_start.q / math.sqrt(params.n_atoms), warm_start.theta))
    # coarse grid scan: the even surface can hold two competing minima, and
    # single-start descent silently tracks the wrong branch near the jump
    fun = _sas_objective(params, parity)
    span = max(1.0, math.sqrt(2.0) * abs(gamma) * 1.3 + 0.3)
    grid_best = min(
        ((fun((qt, th)), (qt, th))
         for qt in np.linspace(-span, span, 8)
         for th in np.linspace(0.01, 1.45, 8)),
        key=lambda item: item[0],
    )
    seeds.append(grid_best[1])
    if rng is not None:
        base = np.asarray(grid_best[1])
        for _ in range(2):
            seeds.append(tuple(base + rng.normal(scale=0.05, size=2)))
    return seeds


def sas_minimize(
    params: ModelParams,
    parity: str,
    warm_start: PhasePoint | None = None,
    rng: np.random.Generator | None = None,
    refine_full: bool = False,
) -> SasMinimum:
    """Global minimum of a projected surface over (q, theta) at p=0, phi=0.

    Multistart simplex descent seeded from the origin, the coherent-state
    minimum, an optional warm start (previous coupling on a sweep), a coarse
    grid scan, plus optional jittered copies when ``rng`` is given.  The
    minima of both projected surfaces sit at ``p = 0`` and ``phi in {0, pi}``;
    the ``phi = pi`` partner is the mirror image ``q -> -q`` and is not
    recomputed.  ``refine_full=True`` re-minimizes over all four coordinates
    afterwards (verification aid).
    """
    _check_parity(parity)
    fun = _sas_objective(params, parity)
    sqn = math.sqrt(params.n_atoms)
    best = None
    for seed in _seed_points(params, parity, warm_start, rng):
        steps = (0.25, 0.25 if seed[1] < 1.2 else -0.25)
        res = _nelder_mead(fun, seed, steps)
        if best is None or res.fun < best.fun:
            best = res
    retries = 0
    while not best.success and retries < 2:
        res = _nelder_mead(fun, best.x, (0.05, 0.05 if best.x[1] < 1.2 else -0.05))
        if res.fun <= best.fun:
            best = res
        retries += 1
    if not best.success or not math.isfinite(best.fun):
        partial = SasMinimum(
            parity, PhasePoint(best.x[0] * sqn, 0.0, best.x[1], 0.0),
            float(best.fun), params.n_atoms, params.gamma,
        )
        raise ConvergenceError(
            f"surface minimization did not converge for parity={parity}, "
            f"N={params.n_atoms}, gamma={params.gamma}",
            best=partial,
        )
    point = PhasePoint(best.x[0] * sqn, 0.0, best.x[1], 0.0)
    result = SasMinimum(parity, point, float(best.fun), params.n_atoms, params.gamma)
    if refine_full:
        result = _refine_full(params, parity, result)
    return result


def _refine_full(params, parity, start: SasMinimum) -> SasMinimum:
    """Re-minimize over (q, p, theta, phi); used to verify the p=0 restriction."""
    n = params.n_atoms
    sqn = math.sqrt(n)
    odd = parity == "odd"

    def fun(x):
        qt, pt, theta, phi = x
        if not (0.0 <= theta <= _THETA_LIMIT):
            return np.inf
        q, p = qt * sqn, pt * sqn
        if odd and _guarded(q * q + p * p + theta * theta):
            return np.inf
        return float(
            _sas_energy_raw(n, params.omega_a, params.gamma, q, p, theta, phi, parity)
        )

    x0 = np.array([start.point.q / sqn, 0.0, start.point.theta, start.point.phi])
    res = minimize(fun, x0, method="Nelder-Mead",
                   options=dict(**_NM_OPTIONS))
    if res.fun >= start.energy:
        return start
    q, p = res.x[0] * sqn, res.x[1] * sqn
    point = PhasePoint(q, p, res.x[2], res.x[3] % (2.0 * math.pi))
    return SasMinimum(parity, point, float(res.fun), n, params.gamma)


def _local_minimum(params, parity, seed, step=0.02):
    """Descend from ``seed`` staying inside its basin (small initial simplex)."""
    fun = _sas_objective(params, parity)
    x = np.asarray(seed, dtype=float)
    for h in (step, step / 5.0):
        res = _nelder_mead(fun, x, (h, h if x[1] < 1.2 else -h))
        if abs(res.x[0] - seed[0]) <= 0.3:
            return float(res.fun), tuple(res.x)
    return float(res.fun), tuple(res.x)


def sas_jump_gamma(
    n_atoms: int,
    omega_a: float,
    scan: tuple[float, float] = (0.4, 0.7),
    target_resolution: float = 1e-3,
) -> JumpResult | None:
    """Locate the coupling where the even-surface global minimizer jumps.

    A coarse sweep with warm starts finds the pair of adjacent couplings whose
    minimizers differ by more than :data:`JUMP_THRESHOLD` in q.  The two local
    branches are then continued into the bracket and the crossing of their
    energies is bisected down to ``target_resolution``; the returned value is
    resolution independent, unlike thresholding |dq| on a fixed grid.

    Returns ``None`` when no jump exists in the scan window (e.g. deep in the
    normal phase); solver breakdown raises :class:`ConvergenceError` instead.
    """
    lo, hi = scan
    if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
        raise DomainError(f"scan window must satisfy lo < hi, got {scan}")
    if not target_resolution > 0:
        raise DomainError(f"target_resolution must be positive, got {target_resolution}")
    base = ModelParams(n_atoms, omega_a, 0.0)
    sqn = math.sqrt(n_atoms)
    coarse = np.linspace(lo, hi, 25)
    bracket = None
    prev = None
    warm = None
    for g in coarse:
        m = sas_minimize(base.with_gamma(float(g)), "even", warm_start=warm)
        warm = m.point
        cur = (float(g), m.point.q, (m.point.q / sqn, m.point.theta))
        if prev is not None and abs(cur[1] - prev[1]) > JUMP_THRESHOLD:
            bracket = (prev[0], cur[0], prev[2], cur[2])
            break
        prev = cur
    if bracket is None:
        return None
    g_lo, g_hi, seed_lo, seed_hi = bracket
    while g_hi - g_lo > target_resolution:
        mid = 0.5 * (g_lo + g_hi)
        pm = base.with_gamma(mid)
        e_lo, x_lo = _local_minimum(pm, "even", seed_lo)
        e_hi, x_hi = _local_minimum(pm, "even", seed_hi)
        if e_lo <= e_hi:
            g_lo, seed_lo = mid, x_lo
        else:
            g_hi, seed_hi = mid, x_hi
    gamma_c = 0.5 * (g_lo + g_hi)
    pm = base.with_gamma(gamma_c)
    _, x_lo = _local_minimum(pm, "even", seed_lo)
    _, x_hi = _local_minimum(pm, "even", seed_hi)
    q_before = x_lo[0] * sqn
    q_after = x_hi[0] * sqn
    if abs(q_after - q_before) <= JUMP_THRESHOLD:
        raise ConvergenceError(
            f"branch tracking collapsed onto one minimum near gamma={gamma_c:.6f}",
            best=(q_before, q_after),
        )
    return JumpResult(float(gamma_c), float(q_before), float(q_after), float(g_hi - g_lo))


# ---------------------------------------------------------------------------
# surface grids for contour plots
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SurfaceGrid:
    """Energies over a rectangular (q, theta) window at p=0, phi=0.

    ``energies[i, j]`` belongs to ``(q_values[i], theta_values[j])``.  Odd
    grid points inside the singular guard are NaN, not errors.
    """

    q_values: np.ndarray
    theta_values: np.ndarray
    energies: np.ndarray


def _axis(lo: float, hi: float, step: float) -> np.ndarray:
    if not (np.isfinite(lo) and np.isfinite(hi)) or hi < lo:
        raise DomainError(f"range must be finite with lo <= hi, got ({lo}, {hi})")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(count)


def surface_grid(
    params: ModelParams,
    parity: str,
    q_range: tuple[float, float],
    theta_range: tuple[float, float],
    resolution: float,
) -> SurfaceGrid:
    """Tabulate one energy surface on a regular grid (deterministic, row-major)."""
    if parity not in ("even", "odd", "cs"):
        raise DomainError(f"parity must be 'even', 'odd' or 'cs', got {parity!r}")
    if not (np.isfinite(resolution) and resolution > 0):
        raise DomainError(f"resolution must be positive, got {resolution}")
    qs = _axis(*q_range, resolution)
    ths = _axis(*theta_range, resolution)
    q = qs[:, None]
    th = ths[None, :]
    if parity == "cs":
        e = _cs_energy_raw(params.n_atoms, params.omega_a, params.gamma, q, 0.0, th, 0.0)
    else:
        e = _sas_energy_raw(
            params.n_atoms, params.omega_a, params.gamma, q, 0.0, th, 0.0, parity
        )
        if parity == "odd":
            e = np.where(q * q + th * th < GUARD_RADIUS**2, np.nan, e)
    e = np.broadcast_to(e, (qs.size, ths.size)).copy()
    return SurfaceGrid(qs, ths, e)
