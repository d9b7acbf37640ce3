"""Simulation of a cavity-mediated controlled-phase gate between two
quantum dots in tunnel-coupled cavities.

Energies are in meV and times in ns throughout (``HBAR`` in meV ns).
"""

from .dynamics import (
    IntegratorConfig,
    Trajectory,
    evolve_density,
    evolve_state,
    frame_map,
    mcwf_evolve,
)
from .errors import (
    CavityCZError,
    ConfigError,
    GateTimeUndefinedError,
    HermiticityError,
    IntegratorFailureError,
    InvalidStateError,
    InvalidTruncationError,
    LayoutMismatchError,
    LeakageTooLargeError,
    MaxStepsExceededError,
    ResonanceError,
    SamplingTooCoarseError,
    StabilityError,
)
from .gate import (
    GateReport,
    apply_correction,
    conditional_phase,
    decoherence_budget,
    extract_phases,
    gate_fidelity,
    ideal_cz,
    population_stats,
    run_cz_protocol,
)
from .model import (
    DerivedCouplings,
    SystemParams,
    collapse_operators,
    derived_couplings,
    h_eff_stage1,
    h_eff_stage2,
    h_eff_vacuum,
    hamiltonian_eq1,
    hamiltonian_eq3,
    hamiltonian_static,
    normal_mode_splitting,
    regime_report,
)
from .qalgebra import (
    HBAR,
    BosonMode,
    DensityMatrix,
    HilbertSpace,
    Operator,
    QDot,
    StateVector,
    commutator,
    embed,
    fock_annihilator,
    propagator,
    qd_operator,
)

__version__ = "0.1.0"
