"""switchflow: finite-horizon optimal multi-mode switching.

Value functions for a system of variational inequalities with
interconnected obstacles, cross-validated against discrete
dynamic-programming oracles, with policy extraction and Monte Carlo
evaluation of the extracted strategy.
"""

__version__ = "0.1.0"

from .model import (
    CoefficientFunction,
    SwitchingProblem,
    ValidationReport,
    Violation,
    eval_coef,
    validate_problem,
)
from .sde import MarkovChainLattice, PathEnsemble, TimeGrid, build_lattice, simulate_paths
from .dp_oracle import (
    BestStrategy,
    LatticeValues,
    enumerate_strategies,
    snell_value,
    switching_value_dp,
)
from .pde import (
    ResidualReport,
    SpaceGrid,
    ValueSurface,
    obstacle_project,
    pde_step,
    picard_solve,
    solve_system,
    suggest_space_grid,
)
from .strategy import (
    ExecutedStrategy,
    SwitchingPolicy,
    SwitchTailStats,
    ValueEstimate,
    estimate_value,
    extract_policy,
    simulate_strategy,
    switch_count_tail,
)
from .config import RunConfig, load_config, parse_config_text
from .runner import RunResult, run

__all__ = [
    "CoefficientFunction",
    "SwitchingProblem",
    "ValidationReport",
    "Violation",
    "eval_coef",
    "validate_problem",
    "TimeGrid",
    "PathEnsemble",
    "MarkovChainLattice",
    "simulate_paths",
    "build_lattice",
    "LatticeValues",
    "BestStrategy",
    "snell_value",
    "switching_value_dp",
    "enumerate_strategies",
    "SpaceGrid",
    "ValueSurface",
    "ResidualReport",
    "pde_step",
    "obstacle_project",
    "solve_system",
    "picard_solve",
    "suggest_space_grid",
    "SwitchingPolicy",
    "ExecutedStrategy",
    "SwitchTailStats",
    "ValueEstimate",
    "extract_policy",
    "simulate_strategy",
    "estimate_value",
    "switch_count_tail",
    "RunConfig",
    "load_config",
    "parse_config_text",
    "RunResult",
    "run",
    "example_config_path",
]


def example_config_path(name: str):
    """Path to a shipped example config ('example1' or 'example2')."""
    from importlib.resources import files

    return files("switchflow").joinpath("configs", f"{name}.cfg")
