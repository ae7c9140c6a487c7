"""Solvers for the dynamic curb zoning problem."""

from .model import (Allocation, Curb, FeasibilityReport, InfeasibleError, Scenario, ScenarioError, ZoneType,
                    brute_force_solve, change_count, check_feasible, evaluate, make_scenario, regularizer)

__version__ = "0.1.0"

__all__ = [
    "Allocation", "Curb", "FeasibilityReport", "InfeasibleError", "Scenario", "ScenarioError", "ZoneType",
    "brute_force_solve", "change_count", "check_feasible", "evaluate", "make_scenario", "regularizer",
    "__version__",
]
