"""Leakage repumping in hyperfine qubits: simulation, fitting and benchmarking analysis."""
__version__ = "0.1.0"

from .atomic import (
    AtomicConstants,
    SublevelDistribution,
    TransitionGeometry,
    bracket_decay_distribution,
    geometric_factor,
    load_branching_table,
    selection_table,
)
from .budget import BudgetInput, leakage_after_cycles, min_cycles, schedule_time, total_error
from .errors import (
    ConstraintViolation,
    ConvergenceError,
    DomainError,
    InfeasibleTargetError,
    InsufficientDataError,
)
from .fit import FitResult, PumpModelParams, build_pump_matrix, fit_pump_model, predict
from .pulse import (
    PulseEnvelope,
    TwoLevelState,
    ac_stark_phase,
    coupling_ratio,
    propagate,
    scattering_error_floor,
    shaped_pulse_offres_error,
    square_pulse_offres_error,
)
from .rb import (
    DecayFit,
    RBConfig,
    RBDataset,
    bootstrap_ci,
    fit_decay,
    fit_population_decay,
    interleaved_error,
    simulate_rb,
)
from .repump import (
    PumpMatrix,
    RepumpConfig,
    apply_cycles,
    fig2_synthetic_dataset,
    ideal_pump_matrix,
    run_monte_carlo,
)
