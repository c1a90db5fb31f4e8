"""Design phase: which IFs become production centers, how many printers each
holds, and which source serves every demanded (IF, part) pair."""

from amsupply.locdesign.model import (
    INFEASIBLE,
    OPTIMAL,
    ConstraintViolation,
    DanglingReferenceError,
    DesignModel,
    DesignModelError,
    DesignSolution,
    build_design_model,
    check_feasibility,
    evaluate_cost,
    printers_needed,
    solution_from_dict,
    solution_to_dict,
)
from amsupply.locdesign.oracle import OracleSizeError, brute_force_design
from amsupply.locdesign.solver import SolveStats, solve_design

__all__ = [
    "INFEASIBLE",
    "OPTIMAL",
    "ConstraintViolation",
    "DanglingReferenceError",
    "DesignModel",
    "DesignModelError",
    "DesignSolution",
    "OracleSizeError",
    "SolveStats",
    "brute_force_design",
    "build_design_model",
    "check_feasibility",
    "evaluate_cost",
    "printers_needed",
    "solution_from_dict",
    "solution_to_dict",
    "solve_design",
]
