"""Physical parameters, phase-space coordinates and the parity-labeled product basis.

The collective model couples ``n_atoms`` two-level atoms (pseudospin
j = n_atoms/2, maximal symmetric sector only) to a single bosonic mode.
Everything here is immutable and safe to share between workers.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ContractError, DomainError

PARITIES = ("even", "odd")
SECTORS = ("even", "odd", "full")

TWO_PI = 2.0 * math.pi


class Observables(NamedTuple):
    """Photon number and collective inversion expectation values."""

    n_photons: float
    jz: float


@dataclass(frozen=True)
class ModelParams:
    """Model inputs: atom number, atomic/field frequency ratio, coupling strength.

    Frequencies are measured in units of the field frequency, so ``omega_a``
    and ``gamma`` are dimensionless.  The pseudospin length is fixed to
    ``j = n_atoms / 2``.
    """

    n_atoms: int
    omega_a: float
    gamma: float

    def __post_init__(self):
        if not isinstance(self.n_atoms, (int, np.integer)) or isinstance(self.n_atoms, bool):
            raise DomainError(f"n_atoms must be an integer, got {self.n_atoms!r}")
        if self.n_atoms < 1:
            raise DomainError(f"n_atoms must be >= 1, got {self.n_atoms}")
        if not (math.isfinite(self.omega_a) and self.omega_a > 0):
            raise DomainError(f"omega_a must be positive and finite, got {self.omega_a}")
        if not math.isfinite(self.gamma):
            raise DomainError(f"gamma must be finite, got {self.gamma}")

    @property
    def j(self) -> float:
        return self.n_atoms / 2.0

    def with_gamma(self, gamma: float) -> "ModelParams":
        return ModelParams(self.n_atoms, self.omega_a, gamma)


def critical_coupling(omega_a: float) -> float:
    """Mean-field critical coupling sqrt(omega_a)/2.

    This is where the coherent-state energy surface changes from a single
    minimum at the origin to a pair of displaced minima.
    """
    if not (np.isfinite(omega_a) and omega_a > 0):
        raise DomainError(f"omega_a must be positive and finite, got {omega_a}")
    return math.sqrt(omega_a) / 2.0


@dataclass(frozen=True)
class PhasePoint:
    """A point of the product phase space: field quadratures x Bloch sphere.

    ``(q, p)`` are the field quadrature expectations, ``theta`` and ``phi``
    the Bloch polar/azimuthal angles.  The equivalent coherent-state labels
    are ``alpha = (q + i p)/sqrt(2)`` and ``zeta = exp(-i phi) tan(theta/2)``.
    """

    q: float
    p: float
    theta: float
    phi: float

    @property
    def alpha(self) -> complex:
        return complex(self.q, self.p) / math.sqrt(2.0)

    @property
    def zeta(self) -> complex:
        return cmath.exp(-1j * self.phi) * math.tan(self.theta / 2.0)

    @classmethod
    def from_coherent(cls, alpha: complex, zeta: complex) -> "PhasePoint":
        q = math.sqrt(2.0) * alpha.real
        p = math.sqrt(2.0) * alpha.imag
        theta = 2.0 * math.atan(abs(zeta))
        phi = (-cmath.phase(zeta)) % TWO_PI if zeta != 0 else 0.0
        return cls(q, p, theta, phi)


def normalize_phase_point(raw: PhasePoint) -> PhasePoint:
    """Fold ``theta`` into [0, pi] and ``phi`` into [0, 2*pi); ``(q, p)`` unchanged.

    Standard sphere folding: a negative polar angle is reflected through the
    pole, which shifts the azimuth by pi.  Idempotent.
    """
    vals = (raw.q, raw.p, raw.theta, raw.phi)
    if not all(math.isfinite(v) for v in vals):
        raise DomainError(f"phase point has non-finite coordinates: {vals}")
    theta = raw.theta % TWO_PI
    phi = raw.phi
    if theta > math.pi:
        theta = TWO_PI - theta
        phi = phi + math.pi
    phi = phi % TWO_PI
    return PhasePoint(raw.q, raw.p, theta, phi)


def excitation_parity(nu: int, m: float, j: float) -> str:
    """Parity ('even'/'odd') of the total excitation number nu + m + j.

    ``m`` and ``j`` are both integers or both half-odd integers, so the sum
    is always a non-negative integer.
    """
    lam = nu + m + j
    lam_int = int(round(lam))
    if abs(lam - lam_int) > 1e-9 or lam_int < 0:
        raise DomainError(f"nu + m + j = {lam} is not a non-negative integer")
    return "even" if lam_int % 2 == 0 else "odd"


@dataclass(frozen=True)
class BasisState:
    """One product label |nu> x |j, m> with its excitation parity."""

    nu: int
    m: float
    parity: str


@dataclass(frozen=True, eq=False)
class ParityBasis:
    """Ordered product basis restricted to one excitation-parity sector.

    States are sorted lexicographically in (nu, m), ascending, which keeps
    matrix fixtures and on-disk datasets stable across runs.  ``index`` maps
    each (nu, m) pair to its contiguous row number; ``nu_values``/``m_values``
    mirror the ordering as arrays for fast expectation values.
    """

    params: ModelParams
    n_max: int
    sector: str
    states: tuple[BasisState, ...]
    index: dict[tuple[int, float], int]
    nu_values: np.ndarray = field(repr=False)
    m_values: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.states)

    def same_space(self, other: "ParityBasis") -> bool:
        return (
            self.params.n_atoms == other.params.n_atoms
            and self.n_max == other.n_max
            and self.sector == other.sector
        )

    def require_same_space(self, other: "ParityBasis") -> None:
        if not self.same_space(other):
            raise ContractError(
                f"bases differ: (N={self.params.n_atoms}, n_max={self.n_max}, "
                f"{self.sector}) vs (N={other.params.n_atoms}, "
                f"n_max={other.n_max}, {other.sector})"
            )


def build_basis(params: ModelParams, n_max: int, sector: str = "full") -> ParityBasis:
    """Enumerate the truncated product basis, optionally restricted by parity.

    The full basis has (n_max+1)(n_atoms+1) states; the even and odd sectors
    partition it.
    """
    if not isinstance(n_max, (int, np.integer)) or n_max < 0:
        raise DomainError(f"n_max must be a non-negative integer, got {n_max!r}")
    if sector not in SECTORS:
        raise DomainError(f"sector must be one of {SECTORS}, got {sector!r}")
    j = params.j
    m_values = [mi - j for mi in range(params.n_atoms + 1)]
    states = []
    for nu in range(n_max + 1):
        for m in m_values:
            parity = excitation_parity(nu, m, j)
            if sector == "full" or parity == sector:
                states.append(BasisState(nu, m, parity))
    index = {(s.nu, s.m): i for i, s in enumerate(states)}
    nu_arr = np.array([s.nu for s in states], dtype=np.int64)
    m_arr = np.array([s.m for s in states], dtype=np.float64)
    nu_arr.flags.writeable = False
    m_arr.flags.writeable = False
    return ParityBasis(params, int(n_max), sector, tuple(states), index, nu_arr, m_arr)
