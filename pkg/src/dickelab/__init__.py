"""Finite-N phase transition of the Dicke model by three mutually validating
methods: exact diagonalization in parity blocks, coherent-state mean-field
theory, and parity-projected (symmetry-adapted) variational states.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    ContractError,
    ConvergenceError,
    DickeError,
    DomainError,
    ResourceLimitError,
    SingularSurfaceError,
)
from .exact import (
    FidelityScanResult,
    HamiltonianMatrix,
    QuantumState,
    build_hamiltonian,
    fidelity,
    fidelity_scan,
    ground_state,
    lowest_eigenpairs,
    observables,
    select_truncation,
    to_phase_coordinates,
)
from .model import (
    BasisState,
    ModelParams,
    Observables,
    ParityBasis,
    PhasePoint,
    build_basis,
    critical_coupling,
    excitation_parity,
    normalize_phase_point,
)
from .semiclassical import (
    GUARD_RADIUS,
    JUMP_THRESHOLD,
    CriticalPoint,
    JumpResult,
    SasMinimum,
    SurfaceGrid,
    cs_critical_point,
    cs_energy,
    sas_energy,
    sas_jump_gamma,
    sas_minimize,
    sas_observables,
    surface_grid,
    universal_curve,
)
from .sweep import (
    SweepConfig,
    SweepRecord,
    read_config,
    run_sweep,
    universal_curve_dataset,
    write_config,
    write_records,
)

__all__ = [name for name in dir() if not name.startswith("_")]
