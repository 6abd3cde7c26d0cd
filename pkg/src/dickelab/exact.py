"""Exact diagonalization in parity blocks: spectra, observables, fidelity scans.

The Hamiltonian

    H = a'a + omega_a * Jz + (gamma/sqrt(N)) * (a' + a) * (J+ + J-)

is real symmetric in the product basis and couples only states with
``|d_nu| = 1`` and ``|d_m| = 1``, so it never mixes the two excitation-parity
sectors and each block is extremely sparse.  Blocks are stored in CSR form;
the eigensolver densifies small blocks and uses Lanczos above
:data:`DENSE_DIM_LIMIT`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sparse
import scipy.sparse.linalg as sparse_linalg

from .errors import (
    ContractError,
    ConvergenceError,
    DomainError,
    ResourceLimitError,
)
from .model import ModelParams, Observables, ParityBasis, build_basis
from .semiclassical import cs_critical_point

# Below this dimension a full dense decomposition beats Lanczos.
DENSE_DIM_LIMIT = 1200

# Relative residual each returned eigenpair must satisfy.
RESIDUAL_TOL = 1e-10

# Ground states closer than this are treated as degenerate in fidelity scans.
DEGENERACY_GAP = 1e-10

_TRUNCATION_LADDER = tuple(32 * 2**k for k in range(8))  # 32 .. 4096


@dataclass(frozen=True, eq=False)
class HamiltonianMatrix:
    """One parity block of the Hamiltonian, built symmetric entry by entry."""

    basis: ParityBasis
    matrix: sparse.csr_matrix

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()


def build_hamiltonian(params: ModelParams, basis: ParityBasis) -> HamiltonianMatrix:
    """Assemble one sector of the Hamiltonian over ``basis``.

    Diagonal entries are ``nu + omega_a * m``; the coupling connects
    ``(nu, m) <-> (nu+1, m+-1)`` with element
    ``(gamma/sqrt(N)) * sqrt(nu+1) * sqrt(j(j+1) - m*m')``.  ``omega_a`` and
    ``gamma`` are taken from ``params``; the basis fixes the atom count.
    """
    if basis.params.n_atoms != params.n_atoms:
        raise ContractError(
            f"basis was built for N={basis.params.n_atoms}, "
            f"params have N={params.n_atoms}"
        )
    n = params.n_atoms
    j = params.j
    nu = basis.nu_values
    m = basis.m_values
    dim = basis.size
    # row lookup by (nu, m + j); -1 marks states outside this sector/truncation
    lookup = np.full((basis.n_max + 2, n + 2), -1, dtype=np.int64)
    lookup[nu, np.rint(m + j).astype(np.int64)] = np.arange(dim)
    rows = []
    cols = []
    vals = []
    scale = params.gamma / math.sqrt(n)
    for dm in (1.0, -1.0):
        m2 = m + dm
        ok = (np.abs(m2) <= j + 1e-9) & (nu + 1 <= basis.n_max)
        src = np.nonzero(ok)[0]
        dst = lookup[nu[src] + 1, np.rint(m2[src] + j).astype(np.int64)]
        present = dst >= 0
        src, dst = src[present], dst[present]
        v = scale * np.sqrt(nu[src] + 1.0) * np.sqrt(j * (j + 1.0) - m[src] * m2[src])
        rows.extend((src, dst))
        cols.extend((dst, src))
        vals.extend((v, v))
    diag = nu + params.omega_a * m
    off = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(dim, dim),
    )
    matrix = (off + sparse.diags(diag)).tocsr()
    return HamiltonianMatrix(basis, matrix)


@dataclass(frozen=True, eq=False)
class QuantumState:
    """A normalized eigenvector with its eigenvalue and sector label."""

    basis: ParityBasis
    amplitudes: np.ndarray
    energy: float
    parity: str

    @property
    def tail_probability(self) -> float:
        """Probability weight on the top two Fock layers (truncation health)."""
        mask = self.basis.nu_values >= self.basis.n_max - 1
        return float(np.sum(self.amplitudes[mask] ** 2))


def _canonical_sign(vec: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(vec)))
    return -vec if vec[k] < 0 else vec


def lowest_eigenpairs(
    h: HamiltonianMatrix, k: int, dense_limit: int = DENSE_DIM_LIMIT
) -> list[QuantumState]:
    """The k lowest eigenpairs of one block, ascending, residual-checked.

    Dense full decomposition below ``dense_limit``; implicitly restarted
    Lanczos with a fixed starting vector above it (fixed so repeated runs
    are bit-for-bit reproducible).
    """
    dim = h.dim
    if not 1 <= k <= dim:
        raise DomainError(f"k must satisfy 1 <= k <= {dim}, got {k}")
    if dim <= dense_limit or k >= dim - 1:
        w, v = scipy.linalg.eigh(h.toarray(), subset_by_index=(0, k - 1))
    else:
        try:
            w, v = sparse_linalg.eigsh(
                h.matrix, k=k, which="SA", v0=np.ones(dim)
            )
        except sparse_linalg.ArpackNoConvergence:
            try:
                w, v = sparse_linalg.eigsh(
                    h.matrix, k=k, which="SA", v0=np.ones(dim),
                    ncv=min(dim, max(6 * k + 20, 80)), maxiter=50 * dim,
                )
            except sparse_linalg.ArpackNoConvergence as exc:
                raise ConvergenceError(
                    f"Lanczos failed for dim={dim}, k={k}", best=exc
                ) from exc
        order = np.argsort(w)
        w, v = w[order], v[:, order]
    scale = max(1.0, float(np.max(np.abs(h.matrix.diagonal()))), float(np.max(np.abs(w))))
    states = []
    for i in range(k):
        vec = _canonical_sign(np.ascontiguousarray(v[:, i]))
        residual = np.linalg.norm(h.matrix @ vec - w[i] * vec)
        if residual > RESIDUAL_TOL * scale:
            raise ConvergenceError(
                f"eigenpair residual {residual:.2e} exceeds {RESIDUAL_TOL:.0e}*|H|",
                best=(w[i], residual),
            )
        vec.flags.writeable = False
        states.append(QuantumState(h.basis, vec, float(w[i]), h.basis.sector))
    return states


def ground_state(params: ModelParams, n_max: int, sector: str = "even") -> QuantumState:
    """Convenience: lowest state of one sector at the given truncation."""
    basis = build_basis(params, n_max, sector)
    return lowest_eigenpairs(build_hamiltonian(params, basis), 1)[0]


def select_truncation(params: ModelParams, tol: float) -> int:
    """Smallest Fock cutoff on the doubling ladder {32, 64, ...} that is converged.

    A cutoff passes when doubling it moves the (even-sector) ground energy by
    less than ``tol`` and the ground state carries less than ``tol``
    probability on its top two Fock layers.  The starting rung comes from the
    coherent-state estimate ``ceil(q_c^2 / 2) + 20``.
    """
    if not tol > 0:
        raise DomainError(f"tol must be positive, got {tol}")
    q_c = cs_critical_point(params).point.q
    n_est = math.ceil(q_c * q_c / 2.0) + 20
    ladder = [r for r in _TRUNCATION_LADDER if r >= n_est]
    if not ladder:
        raise ResourceLimitError(
            f"coherent-state estimate n_est={n_est} exceeds the "
            f"{_TRUNCATION_LADDER[-1]} ladder cap"
        )
    state = ground_state(params, ladder[0])
    for rung in ladder:
        doubled = ground_state(params, 2 * rung)
        if abs(doubled.energy - state.energy) < tol and state.tail_probability < tol:
            return rung
        state = doubled
    raise ResourceLimitError(
        f"truncation ladder exhausted at {_TRUNCATION_LADDER[-1]} "
        f"(N={params.n_atoms}, gamma={params.gamma}, tol={tol})"
    )


def observables(state: QuantumState) -> Observables:
    """Photon number and collective inversion of an eigenstate."""
    prob = state.amplitudes**2
    return Observables(
        float(prob @ state.basis.nu_values),
        float(prob @ state.basis.m_values),
    )


def to_phase_coordinates(
    obs: Observables, j: float, phi_branch: float = 0.0
) -> tuple[float, float]:
    """Map (n_photons, jz) onto the semiclassical (q, theta) coordinates.

    ``q = -sqrt(2 n_photons)`` on the phi=0 branch (positive for phi=pi) and
    ``theta = arccos(-jz/j)``.  ``|jz|`` may exceed ``j`` only by rounding
    slack (1e-9).
    """
    n_photons, jz = obs
    if n_photons < -1e-12:
        raise DomainError(f"n_photons must be non-negative, got {n_photons}")
    if abs(jz) > j + 1e-9:
        raise DomainError(f"|jz| = {abs(jz)} exceeds j = {j}")
    if abs(phi_branch) <= 1e-12:
        sign = -1.0
    elif abs(phi_branch - math.pi) <= 1e-12:
        sign = 1.0
    else:
        raise DomainError(f"phi_branch must be 0 or pi, got {phi_branch!r}")
    q = sign * math.sqrt(2.0 * max(n_photons, 0.0))
    theta = math.acos(min(1.0, max(-1.0, -jz / j)))
    return q, theta


def fidelity(a: QuantumState, b: QuantumState) -> float:
    """Squared overlap of two states on the same basis (phase/sign immune)."""
    a.basis.require_same_space(b.basis)
    if a.parity != b.parity:
        raise ContractError(f"parity mismatch: {a.parity} vs {b.parity}")
    return min(1.0, float(np.dot(a.amplitudes, b.amplitudes)) ** 2)


@dataclass(frozen=True, eq=False)
class FidelityScanResult:
    """Fidelity between neighboring couplings along a grid, and its minimum.

    ``fidelity[i]`` compares the ground states at ``gamma_grid[i]`` and
    ``gamma_grid[i] + delta_gamma``; ``susceptibility`` is the finite-coupling
    surrogate ``2 (1 - F) / delta_gamma^2``.  ``gamma_c`` locates the fidelity
    minimum, refined by a parabola through the minimum and its neighbors.
    Grid points with a (near-)degenerate ground state are flagged and skipped
    by the minimum search.
    """

    gamma_grid: np.ndarray
    fidelity: np.ndarray
    susceptibility: np.ndarray
    gamma_c: float
    delta_gamma: float
    flagged: np.ndarray
    n_max: int


def _parabolic_refine(x: np.ndarray, y: np.ndarray, i: int) -> float:
    if i == 0 or i == len(x) - 1:
        return float(x[i])
    denom = y[i - 1] - 2.0 * y[i] + y[i + 1]
    if denom <= 0:
        return float(x[i])
    return float(x[i] - 0.5 * (x[i + 1] - x[i - 1]) * (y[i + 1] - y[i - 1]) / (2.0 * denom))


def fidelity_scan(
    n_atoms: int,
    omega_a: float,
    gamma_grid,
    delta_gamma: float = 1e-3,
    sector: str = "even",
    trunc_tol: float = 1e-9,
    n_max: int | None = None,
) -> FidelityScanResult:
    """Ground-state fidelity F(gamma) = |<psi(gamma)|psi(gamma+dg)>|^2 on a grid.

    One eigensolve per distinct coupling: when the grid is uniform with
    spacing equal to ``delta_gamma`` the neighbor states are reused, otherwise
    each grid point solves its own pair.  The truncation is chosen once, at
    the largest coupling involved, unless ``n_max`` is supplied.
    """
    grid = np.asarray(gamma_grid, dtype=float)
    if grid.ndim != 1 or grid.size < 1:
        raise DomainError("gamma_grid must be a non-empty 1-d sequence")
    if grid.size > 1 and np.any(np.diff(grid) <= 0):
        raise DomainError("gamma_grid must be strictly ascending")
    if not delta_gamma > 0:
        raise DomainError(f"delta_gamma must be positive, got {delta_gamma}")
    if grid.size > 1 and delta_gamma > np.min(np.diff(grid)) * (1.0 + 1e-9):
        raise DomainError("delta_gamma must not exceed the grid spacing")
    top = float(grid[-1] + delta_gamma)
    if n_max is None:
        n_max = select_truncation(ModelParams(n_atoms, omega_a, top), trunc_tol)
    basis = build_basis(ModelParams(n_atoms, omega_a, 0.0), n_max, sector)

    def solve(gamma: float):
        h = build_hamiltonian(ModelParams(n_atoms, omega_a, gamma), basis)
        k = 2 if h.dim >= 2 else 1
        pair = lowest_eigenpairs(h, k)
        gap = pair[1].energy - pair[0].energy if k == 2 else np.inf
        return pair[0], gap

    uniform = grid.size > 1 and np.allclose(
        np.diff(grid), delta_gamma, rtol=1e-9, atol=1e-12
    )
    if uniform:
        points = np.append(grid, grid[-1] + delta_gamma)
        solved = [solve(float(g)) for g in points]
        pairs = [(solved[i], solved[i + 1]) for i in range(grid.size)]
    else:
        pairs = [(solve(float(g)), solve(float(g) + delta_gamma)) for g in grid]
    fid = np.array([fidelity(a[0], b[0]) for a, b in pairs])
    flagged = np.array(
        [a[1] < DEGENERACY_GAP or b[1] < DEGENERACY_GAP for a, b in pairs]
    )
    chi = 2.0 * (1.0 - fid) / delta_gamma**2
    usable = np.where(~flagged)[0]
    if usable.size == 0:
        raise ConvergenceError("all grid points were flagged as degenerate")
    i_min = int(usable[np.argmin(fid[usable])])
    if 0 < i_min < grid.size - 1 and not flagged[i_min - 1] and not flagged[i_min + 1]:
        gamma_c = _parabolic_refine(grid, fid, i_min)
    else:
        gamma_c = float(grid[i_min])
    return FidelityScanResult(
        grid, fid, chi, gamma_c, float(delta_gamma), flagged, int(n_max)
    )
