"""Regularized extended play-type hysteresis for unsaturated porous media flow.

The model is solved in the transformed variables ``u = b(p)`` and
``v = S + u`` with a fixed-point Rothe scheme on a P1/Q1 mesh.
"""

from .analysis import (
    CheckResult,
    DiagnosticsReport,
    SweepTable,
    energy_ledger,
    mismatch_bound,
    scan_loop_0d,
    tau_mismatch,
    tau_sweep,
)
from .config import PRESETS, RunConfig, parse_config
from .constitutive import (
    DRAINAGE,
    IMBIBITION,
    CapillaryCurvePair,
    ConstitutiveSet,
    PermeabilityCurve,
    PlayMap,
    RhoCurves,
    box_bounds,
    build_rho_tables,
    pc_eval,
    pc_inverse,
    phi_tau,
    play_eval,
    play_inverse,
)
from .errors import (
    ConfigError,
    ConstitutiveInconsistencyError,
    DegeneracyError,
    DomainError,
    HysteraError,
    NonContractionError,
    NumericError,
    PreconditionError,
    SolverAbort,
    StateCorruptionError,
)
from .grid import Grid, assemble_step_system, build_grid
from .stepper import State, StepperConfig, Trajectory, fixed_point_solve, time_march

__version__ = "0.1.0"
