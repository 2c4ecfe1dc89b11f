"""Coupled thermoviscoelastic damage simulator in enthalpy form.

Finite elements in space (P1 intervals, optionally Q1 structured quads for
the scalar operators), a semi-implicit energy-stable Euler scheme in time,
a bilateral obstacle solver for the damage update, and a diagnostics layer
that re-checks every structural property of the scheme (positivity of the
enthalpy, irreversibility and box constraints on the damage field, the
per-step and windowed energy inequalities, remainder cancellation, weak
residuals and multiplier consistency) on stored trajectories.
"""

__version__ = "0.1.0"

from .constitutive import (
    CoefficientSet,
    ConstitutiveError,
    ConvexConcaveSplit,
    EnthalpyModel,
    ExponentReport,
    GrowthConstants,
    ScalarFunction,
    h2_bootstrap_iterations,
    k_M,
    k_hat_M,
    make_function,
    split_convex_concave,
    theta_M,
    truncate,
    validate_exponents,
)
from .discretization import (
    AssemblyError,
    FieldState,
    Mesh,
    assemble_elasticity,
    assemble_mass,
    assemble_weighted_stiffness,
    interval_mesh,
    p_laplacian_residual,
    rectangle_mesh,
)
from .solver_core import ObstacleProblem, ObstacleResult, SolverError, solve_obstacle, solve_spd
from .stepper import (
    SemiImplicitStepper,
    StepControls,
    StepRejected,
    StepReport,
    Trajectory,
    run,
)
from .diagnostics import DiagnosticsReport, audit_trajectory, free_energy

__all__ = [
    "AssemblyError",
    "CoefficientSet",
    "ConstitutiveError",
    "ConvexConcaveSplit",
    "DiagnosticsReport",
    "EnthalpyModel",
    "ExponentReport",
    "FieldState",
    "GrowthConstants",
    "Mesh",
    "ObstacleProblem",
    "ObstacleResult",
    "ScalarFunction",
    "SemiImplicitStepper",
    "SolverError",
    "StepControls",
    "StepRejected",
    "StepReport",
    "Trajectory",
    "assemble_elasticity",
    "assemble_mass",
    "assemble_weighted_stiffness",
    "audit_trajectory",
    "free_energy",
    "h2_bootstrap_iterations",
    "interval_mesh",
    "k_M",
    "k_hat_M",
    "make_function",
    "p_laplacian_residual",
    "rectangle_mesh",
    "run",
    "solve_obstacle",
    "solve_spd",
    "split_convex_concave",
    "theta_M",
    "truncate",
    "validate_exponents",
]
