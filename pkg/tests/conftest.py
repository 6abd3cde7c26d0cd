"""Shared test helpers: brute-force coherent/projected state construction.

These rebuild the trial states as explicit amplitude vectors in a truncated
basis and take expectation values against the assembled Hamiltonian matrix,
giving an oracle for the closed-form energy surfaces that shares no code
with them.
"""

import math

import numpy as np
from scipy.special import comb

from dickelab import build_basis, build_hamiltonian
from dickelab.model import ModelParams, PhasePoint


def coherent_amplitudes(basis, alpha: complex, zeta: complex) -> np.ndarray:
    """Amplitudes of |alpha> x |zeta> on the (nu, m) product basis."""
    j = basis.params.j
    nu = basis.nu_values
    m = basis.m_values
    log_fact = np.array([math.lgamma(v + 1.0) for v in nu])
    field = np.exp(-abs(alpha) ** 2 / 2.0) * alpha**nu * np.exp(-0.5 * log_fact)
    k = np.rint(m + j).astype(int)
    spin = (
        (1.0 + abs(zeta) ** 2) ** (-j)
        * np.sqrt(comb(basis.params.n_atoms, k))
        * zeta**k
    )
    return field * spin


def oracle_energies(n_atoms, omega_a, gamma, point: PhasePoint, n_max=80):
    """(plain, even, odd) energies of the trial state by explicit projection.

    Returns NaN for a projection with negligible norm.  Truncation error is
    exponentially small as long as |alpha|^2 << n_max.
    """
    params = ModelParams(n_atoms, omega_a, gamma)
    basis = build_basis(params, n_max, "full")
    h = build_hamiltonian(params, basis).matrix
    c = coherent_amplitudes(basis, point.alpha, point.zeta)
    parities = np.array([s.parity == "even" for s in basis.states])

    def expectation(vec):
        norm2 = np.vdot(vec, vec).real
        if norm2 < 1e-300:
            return math.nan
        return (np.vdot(vec, h @ vec).real / norm2)

    return (
        expectation(c),
        expectation(np.where(parities, c, 0.0)),
        expectation(np.where(parities, 0.0, c)),
    )


def oracle_observables(n_atoms, gamma, point: PhasePoint, parity: str, n_max=80):
    """(n_photons, jz) of the projected trial state by explicit projection."""
    params = ModelParams(n_atoms, 1.0, gamma)
    basis = build_basis(params, n_max, "full")
    c = coherent_amplitudes(basis, point.alpha, point.zeta)
    keep = np.array([s.parity == parity for s in basis.states])
    vec = np.where(keep, c, 0.0)
    prob = np.abs(vec) ** 2
    prob /= prob.sum()
    return float(prob @ basis.nu_values), float(prob @ basis.m_values)
