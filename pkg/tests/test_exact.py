import math

import numpy as np
import pytest

from dickelab import (
    ContractError,
    DomainError,
    ModelParams,
    Observables,
    build_basis,
    build_hamiltonian,
    fidelity,
    fidelity_scan,
    ground_state,
    lowest_eigenpairs,
    observables,
    select_truncation,
    to_phase_coordinates,
)
from dickelab.exact import QuantumState


def hamiltonian(n_atoms, omega_a, gamma, n_max, sector):
    params = ModelParams(n_atoms, omega_a, gamma)
    return build_hamiltonian(params, build_basis(params, n_max, sector))


class TestBuildHamiltonian:
    def test_single_atom_matches_hand_matrix(self):
        gamma = 0.37
        h = hamiltonian(1, 1.0, gamma, 1, "full").toarray()
        expected = np.array([
            [-0.5, 0.0, 0.0, gamma],
            [0.0, 0.5, gamma, 0.0],
            [0.0, gamma, 0.5, 0.0],
            [gamma, 0.0, 0.0, 1.5],
        ])
        assert np.allclose(h, expected, atol=1e-15)

    def test_decoupled_limit_is_diagonal(self):
        omega_a = 0.8
        h = hamiltonian(5, omega_a, 0.0, 6, "full")
        basis = h.basis
        dense = h.toarray()
        expected = np.diag([s.nu + omega_a * s.m for s in basis.states])
        assert np.array_equal(dense, expected)

    def test_symmetric_by_construction(self):
        h = hamiltonian(6, 1.3, 0.9, 10, "even")
        assert (h.matrix - h.matrix.T).nnz == 0

    def test_band_structure(self):
        h = hamiltonian(4, 1.0, 0.7, 6, "full")
        states = h.basis.states
        coo = h.matrix.tocoo()
        for i, k, v in zip(coo.row, coo.col, coo.data):
            if i == k:
                continue
            assert abs(states[i].nu - states[k].nu) == 1
            assert abs(states[i].m - states[k].m) == 1.0
            assert v != 0.0

    def test_full_space_is_block_diagonal_under_parity_reordering(self):
        h = hamiltonian(4, 1.0, 0.9, 6, "full")
        order = np.argsort(
            [0 if s.parity == "even" else 1 for s in h.basis.states],
            kind="stable",
        )
        n_even = sum(1 for s in h.basis.states if s.parity == "even")
        dense = h.toarray()[np.ix_(order, order)]
        assert np.max(np.abs(dense[:n_even, n_even:])) == 0.0
        assert np.max(np.abs(dense[n_even:, :n_even])) == 0.0

    def test_deterministic_assembly(self):
        a = hamiltonian(6, 1.0, 1.1, 12, "odd")
        b = hamiltonian(6, 1.0, 1.1, 12, "odd")
        assert np.array_equal(a.matrix.indptr, b.matrix.indptr)
        assert np.array_equal(a.matrix.indices, b.matrix.indices)
        assert np.array_equal(a.matrix.data, b.matrix.data)

    def test_atom_count_mismatch_is_a_contract_error(self):
        basis = build_basis(ModelParams(4, 1.0, 0.0), 6, "even")
        with pytest.raises(ContractError):
            build_hamiltonian(ModelParams(6, 1.0, 0.0), basis)


class TestLowestEigenpairs:
    def test_decoupled_even_ground(self):
        h = hamiltonian(20, 1.0, 0.0, 32, "even")
        state = lowest_eigenpairs(h, 1)[0]
        assert state.energy == pytest.approx(-10.0, abs=1e-12)
        i = h.basis.index[(0, -10.0)]
        assert state.amplitudes[i] == pytest.approx(1.0, abs=1e-12)
        assert state.tail_probability == pytest.approx(0.0, abs=1e-20)

    def test_decoupled_odd_sector_is_twofold_degenerate(self):
        h = hamiltonian(20, 1.0, 0.0, 32, "odd")
        states = lowest_eigenpairs(h, 2)
        assert states[0].energy == pytest.approx(-9.0, abs=1e-12)
        assert states[1].energy == pytest.approx(-9.0, abs=1e-12)

    @pytest.mark.parametrize("gamma", [0.3, 0.8, 1.4])
    def test_sparse_path_matches_dense_oracle(self, gamma):
        h = hamiltonian(3, 1.0, gamma, 15, "even")
        reference = np.sort(np.linalg.eigvalsh(h.toarray()))
        dense = lowest_eigenpairs(h, 3)                  # dense route
        sparse = lowest_eigenpairs(h, 3, dense_limit=1)  # force Lanczos
        for k in range(3):
            assert dense[k].energy == pytest.approx(reference[k], abs=1e-10)
            assert sparse[k].energy == pytest.approx(reference[k], abs=1e-10)

    @pytest.mark.parametrize("dense_limit", [1, 10_000])
    def test_residual_and_orthonormality_contract(self, dense_limit):
        h = hamiltonian(4, 0.9, 1.2, 20, "odd")
        states = lowest_eigenpairs(h, 4, dense_limit=dense_limit)
        scale = max(1.0, np.max(np.abs(h.matrix.diagonal())))
        vecs = np.column_stack([s.amplitudes for s in states])
        assert np.allclose(vecs.T @ vecs, np.eye(4), atol=1e-12)
        for s in states:
            residual = np.linalg.norm(h.matrix @ s.amplitudes - s.energy * s.amplitudes)
            assert residual <= 1e-10 * scale
            assert abs(np.linalg.norm(s.amplitudes) - 1.0) < 1e-12
        energies = [s.energy for s in states]
        assert energies == sorted(energies)

    def test_lanczos_is_deterministic(self):
        h = hamiltonian(6, 1.0, 0.9, 30, "even")
        a = lowest_eigenpairs(h, 1, dense_limit=1)[0]
        b = lowest_eigenpairs(h, 1, dense_limit=1)[0]
        assert np.array_equal(a.amplitudes, b.amplitudes)

    def test_sign_convention(self):
        h = hamiltonian(6, 1.0, 0.9, 20, "even")
        for s in lowest_eigenpairs(h, 3):
            assert s.amplitudes[np.argmax(np.abs(s.amplitudes))] > 0

    def test_k_validation(self):
        h = hamiltonian(2, 1.0, 0.1, 2, "even")
        with pytest.raises(DomainError):
            lowest_eigenpairs(h, 0)
        with pytest.raises(DomainError):
            lowest_eigenpairs(h, h.dim + 1)


class TestSelectTruncation:
    def test_decoupled_limit_takes_the_smallest_rung(self):
        assert select_truncation(ModelParams(20, 1.0, 0.0), 1e-9) == 32

    def test_superradiant_reference(self):
        n_max = select_truncation(ModelParams(20, 1.0, 1.0), 1e-9)
        # coherent-state estimate ceil(q_c^2/2) + 20 = 39 is a lower bound
        assert n_max >= 39
        assert n_max == 64  # converged rung, frozen as a regression value

    def test_tighter_tolerance_never_shrinks_the_cutoff(self):
        params = ModelParams(20, 1.0, 1.0)
        assert select_truncation(params, 1e-10) >= select_truncation(params, 1e-6)

    def test_doubling_beyond_selection_is_stable(self):
        params = ModelParams(20, 1.0, 1.0)
        tol = 1e-9
        n_max = select_truncation(params, tol)
        a = ground_state(params, n_max)
        b = ground_state(params, 2 * n_max)
        assert abs(a.energy - b.energy) < tol
        assert abs(observables(a).n_photons - observables(b).n_photons) < 10 * tol


class TestObservables:
    def test_decoupled_ground(self):
        state = ground_state(ModelParams(20, 1.0, 0.0), 32)
        obs = observables(state)
        assert obs.n_photons == pytest.approx(0.0, abs=1e-15)
        assert obs.jz == pytest.approx(-10.0, abs=1e-12)

    def test_bounds(self):
        h = hamiltonian(6, 1.0, 1.1, 24, "even")
        for state in lowest_eigenpairs(h, 4):
            obs = observables(state)
            assert -3.0 - 1e-12 <= obs.jz <= 3.0 + 1e-12
            assert -1e-12 <= obs.n_photons <= 24.0

    def test_superradiant_photon_number_tracks_the_mean_field_value(self):
        state = ground_state(ModelParams(20, 1.0, 1.0), 64)
        obs = observables(state)
        assert obs.n_photons == pytest.approx(18.75, rel=0.1)


class TestPhaseCoordinates:
    def test_polar_ground(self):
        assert to_phase_coordinates(Observables(0.0, -10.0), 10.0) == (0.0, 0.0)

    def test_equator(self):
        q, theta = to_phase_coordinates(Observables(18.0, 0.0), 10.0)
        assert q == pytest.approx(-6.0, abs=1e-14)
        assert theta == pytest.approx(math.pi / 2, abs=1e-14)

    def test_mirror_branch(self):
        q, _ = to_phase_coordinates(Observables(18.0, 0.0), 10.0, phi_branch=math.pi)
        assert q == pytest.approx(6.0)

    def test_rounding_slack(self):
        _, theta = to_phase_coordinates(Observables(0.0, -10.0 - 5e-10), 10.0)
        assert theta == 0.0
        with pytest.raises(DomainError):
            to_phase_coordinates(Observables(0.0, -10.1), 10.0)


class TestFidelity:
    @pytest.fixture()
    def pair(self):
        h = hamiltonian(8, 1.0, 0.5, 24, "even")
        return lowest_eigenpairs(h, 2)

    def test_self_overlap(self, pair):
        assert fidelity(pair[0], pair[0]) == 1.0

    def test_orthogonal_eigenstates(self, pair):
        assert fidelity(pair[0], pair[1]) == pytest.approx(0.0, abs=1e-20)

    def test_symmetric_and_sign_immune(self, pair):
        a, b20 = pair[0], ground_state(ModelParams(8, 1.0, 0.52), 24)
        assert fidelity(a, b20) == fidelity(b20, a)
        flipped = QuantumState(b20.basis, -b20.amplitudes, b20.energy, b20.parity)
        assert fidelity(a, flipped) == fidelity(a, b20)
        assert 0.0 <= fidelity(a, b20) <= 1.0

    def test_basis_mismatch(self, pair):
        other = ground_state(ModelParams(8, 1.0, 0.5), 30)
        with pytest.raises(ContractError):
            fidelity(pair[0], other)


class TestFidelityScan:
    def test_flat_in_the_normal_phase(self):
        scan = fidelity_scan(10, 1.0, np.array([0.10, 0.12, 0.14]),
                             delta_gamma=1e-3, n_max=32)
        assert np.all(scan.fidelity > 0.9999)
        assert np.all(~scan.flagged)
        assert scan.susceptibility == pytest.approx(
            2 * (1 - scan.fidelity) / 1e-6, rel=1e-12
        )

    def test_neighbor_reuse_matches_direct_pairs(self):
        grid = 0.55 + 0.001 * np.arange(4)
        scan = fidelity_scan(10, 1.0, grid, delta_gamma=1e-3, n_max=32)
        for i, g in enumerate(grid):
            a = ground_state(ModelParams(10, 1.0, float(g)), 32)
            b = ground_state(ModelParams(10, 1.0, float(g) + 1e-3), 32)
            assert scan.fidelity[i] == pytest.approx(fidelity(a, b), abs=1e-12)

    def test_degenerate_points_are_flagged_and_skipped(self):
        # the odd sector is exactly twofold degenerate at zero coupling
        scan = fidelity_scan(6, 1.0, np.array([0.0, 0.05, 0.10]),
                             delta_gamma=1e-3, sector="odd", n_max=24)
        assert scan.flagged[0]
        assert not scan.flagged[-1]
        assert scan.gamma_c != 0.0

    def test_validation(self):
        with pytest.raises(DomainError):
            fidelity_scan(6, 1.0, np.array([0.2, 0.1]), n_max=16)
        with pytest.raises(DomainError):
            fidelity_scan(6, 1.0, np.array([0.1, 0.2]), delta_gamma=0.0, n_max=16)
        with pytest.raises(DomainError):
            fidelity_scan(6, 1.0, np.array([0.1, 0.2]), delta_gamma=0.5, n_max=16)


class TestSpectrumParityOrdering:
    @pytest.mark.parametrize("n_atoms,gammas", [
        (10, (0.0, 0.5, 1.0, 2.0)),
        (20, (0.0, 0.5, 1.0, 2.0)),
        (60, (0.553,)),
    ])
    def test_ground_is_even_and_first_excited_is_odd(self, n_atoms, gammas):
        for gamma in gammas:
            params = ModelParams(n_atoms, 1.0, gamma)
            n_max = select_truncation(params, 1e-8)
            even = lowest_eigenpairs(
                build_hamiltonian(params, build_basis(params, n_max, "even")), 2
            )
            odd = lowest_eigenpairs(
                build_hamiltonian(params, build_basis(params, n_max, "odd")), 1
            )
            assert even[0].energy <= odd[0].energy + 1e-9
            assert odd[0].energy <= even[1].energy + 1e-9
