"""
QP Core Module
Active-set convex QP solver and branch and bound for binary variables
"""

from .qp_solver import QpOptions, QpProblem, SolveReport, SolveStatus, solve_qp
from .branch_and_bound import MiqpOptions, MiqpProblem, enumerate_miqp, solve_miqp

__all__ = [
    'QpOptions', 'QpProblem', 'SolveReport', 'SolveStatus', 'solve_qp',
    'MiqpOptions', 'MiqpProblem', 'enumerate_miqp', 'solve_miqp',
]
