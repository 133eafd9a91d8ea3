"""Micromaser with periodic, number-fluctuating atom injection.

Microscopic kick-and-decay dynamics, the coarse-grained macroscopic
generator, and tools to compare the two.
"""
from .errors import (
    ConfigError,
    DegenerateSteadyStateError,
    GateFailure,
    MaserLabError,
    NearDefectiveError,
    NumericalMethodError,
    PoleProximityError,
    SeriesNotConvergedError,
)
from .fockspace import (
    DensityOperator,
    FockSpace,
    Superoperator,
    annihilation,
    choi_matrix,
    creation,
    dissipator,
    fock_state,
    left_mult,
    number,
    right_mult,
    thermal_state,
    unvec,
    vec,
)
from .injection import (
    InjectionStatistics,
    KickModel,
    PumpSchedule,
    average_kick,
    kick_family,
    multi_atom_kick,
    sample_event,
    single_atom_kick,
)
from .liouvillian import (
    CavityParams,
    SpectralDecomposition,
    build_cavity_liouvillian,
    exp_action,
    lift_scalar_function,
    maser_kernel,
    spectral_decompose,
)
from .macro import (
    MacroGenerator,
    build_macro_generator,
    evolve_macro,
    macro_initial_state,
    pump_generator_series,
    pump_generator_spectral,
    steady_state,
)
from .micro import (
    CoarseGrainFilter,
    Trajectory,
    coarse_grain,
    evolve_micro,
    evolve_micro_ensemble,
    evolve_micro_stochastic,
    limit_cycle,
    stroboscopic_step,
)
from .observables import PhotonStatistics, limit_cycle_average, photon_statistics, trace_distance
from .config import SimulationConfig, load_config, parse_config
from .runner import RunReport, emit_csv, run

__version__ = "0.1.0"
