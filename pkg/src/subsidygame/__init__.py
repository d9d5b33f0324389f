"""Solver for a subsidized new-technology pricing game.

A firm prices a durable good continuously; a government adjusts a
discrete-valued consumer subsidy at fixed decision dates to reach a
cumulative-sales target at minimum discounted expenditure.  The package
computes the firm's value-function coefficients by backward Riccati
integration, simulates the closed-loop equilibrium dynamics, and optimizes
the government's schedule both by exact enumeration and by grid-based
backward induction, with a scenario-driven command-line front end.
"""

from .model import (
    CoefficientPath,
    CoefficientSegment,
    Diagnostic,
    EquilibriumOutcome,
    GameParameters,
    SubsidyGameError,
    SubsidyProgram,
    SubsidySchedule,
    Trajectory,
    unit_cost,
    validate,
)
from .riccati import (
    RiccatiBlowUpError,
    SegmentSpec,
    coefficient_rhs,
    integrate_segment,
    solve_coefficients,
    subsidy_intervals,
)
from .dynamics import (
    NonInteriorPriceError,
    PayoffBreakdown,
    closed_loop_rate,
    composite_simpson,
    demand_rate,
    equilibrium_price,
    payoffs,
    propagate,
)
from .equilibrium import (
    CandidateRow,
    EnumerationSizeError,
    GridExtrapolationError,
    GridSpec,
    PolicyTable,
    ProgramInfeasibleError,
    SolveReport,
    dp_solve,
    enumerate_schedules,
    intervention_value,
)
from .scenario import (
    Numerics,
    Scenario,
    ScenarioError,
    SweepSpec,
    load_scenario,
    scenario_for_sweep_value,
    serialize_scenario,
)

__version__ = "0.1.0"

__all__ = [
    "GameParameters",
    "SubsidyProgram",
    "SubsidySchedule",
    "CoefficientPath",
    "CoefficientSegment",
    "Trajectory",
    "EquilibriumOutcome",
    "PayoffBreakdown",
    "Diagnostic",
    "SolveReport",
    "CandidateRow",
    "PolicyTable",
    "GridSpec",
    "SegmentSpec",
    "SubsidyGameError",
    "RiccatiBlowUpError",
    "NonInteriorPriceError",
    "ProgramInfeasibleError",
    "EnumerationSizeError",
    "GridExtrapolationError",
    "validate",
    "unit_cost",
    "coefficient_rhs",
    "integrate_segment",
    "solve_coefficients",
    "subsidy_intervals",
    "equilibrium_price",
    "demand_rate",
    "closed_loop_rate",
    "propagate",
    "payoffs",
    "composite_simpson",
    "enumerate_schedules",
    "intervention_value",
    "dp_solve",
    "Scenario",
    "Numerics",
    "SweepSpec",
    "ScenarioError",
    "load_scenario",
    "serialize_scenario",
    "scenario_for_sweep_value",
    "__version__",
]
