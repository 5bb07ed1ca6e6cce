"""Day-ahead household energy optimization with lossy battery storage.

Two notions of optimality over an N-period horizon: minimizing the total
bill (a linear program) and leveling consumption so the grid sees a
uniform demand at no extra cost (a geometric program). Both run against
the same budget, consumption-box and cumulative storage constraints.
"""

from .domain import (
    BatterySpec,
    BoundaryMismatch,
    DegenerateWeights,
    InfeasibleBoundary,
    InvalidBattery,
    LengthMismatch,
    NegativeEntry,
    ScenarioInput,
    Scheme,
    Solution,
    StoretradeError,
    TimeGrid,
    effective_soc_bounds,
    new_scenario,
)
from .model import (
    EPSILON_KWH,
    FeasibilityReport,
    ObjectiveSpec,
    ProblemInstance,
    build_alphas,
    build_box_bounds,
    build_budget,
    build_instance,
    build_posynomial_constraints,
    build_storage_system,
    check_feasible,
)
from .solver import (
    KktMultipliers,
    KktReport,
    SolveDiagnostics,
    SolveStatus,
    SolverConfig,
    solve_balance,
    solve_cost_min,
    verify_kkt,
)
from .analysis import (
    ArbitrageFlag,
    ReportMetrics,
    arbitrage_conditions,
    compute_metrics,
    recover_trajectory,
    savings_decomposition,
)
from .scenario import (
    AggregatedScenario,
    InvalidAggregation,
    LoadProfile,
    ParseError,
    SweepAxis,
    SweepRow,
    SweepSpec,
    aggregate,
    generate_synthetic_load,
    load_battery_config,
    load_scenario_csv,
    run_sweep,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # domain
    "BatterySpec",
    "TimeGrid",
    "ScenarioInput",
    "Solution",
    "Scheme",
    "new_scenario",
    "effective_soc_bounds",
    "StoretradeError",
    "LengthMismatch",
    "NegativeEntry",
    "InvalidBattery",
    "DegenerateWeights",
    "InfeasibleBoundary",
    "BoundaryMismatch",
    # model
    "EPSILON_KWH",
    "ProblemInstance",
    "ObjectiveSpec",
    "FeasibilityReport",
    "build_budget",
    "build_box_bounds",
    "build_storage_system",
    "build_alphas",
    "build_posynomial_constraints",
    "build_instance",
    "check_feasible",
    # solver
    "SolverConfig",
    "SolveStatus",
    "SolveDiagnostics",
    "KktMultipliers",
    "KktReport",
    "solve_cost_min",
    "solve_balance",
    "verify_kkt",
    # analysis
    "ReportMetrics",
    "ArbitrageFlag",
    "recover_trajectory",
    "compute_metrics",
    "arbitrage_conditions",
    "savings_decomposition",
    # scenario
    "ParseError",
    "InvalidAggregation",
    "LoadProfile",
    "SweepAxis",
    "SweepSpec",
    "SweepRow",
    "AggregatedScenario",
    "load_scenario_csv",
    "load_battery_config",
    "generate_synthetic_load",
    "aggregate",
    "run_sweep",
]
