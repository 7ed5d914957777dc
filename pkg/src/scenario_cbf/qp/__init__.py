"""Certified dense convex QP solving for the per-step scenario programs."""
from .kkt import KktReport, check_kkt
from .problem import QpProblem, QpSolution
from .prune import prune_redundant, prune_rows
from .solver import SolverOptions, solve, solve_with_slack
from .textio import dump_problem, load_problem

__all__ = [
    "KktReport", "QpProblem", "QpSolution", "SolverOptions",
    "check_kkt", "dump_problem", "load_problem", "prune_redundant",
    "prune_rows", "solve", "solve_with_slack",
]
