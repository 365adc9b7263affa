"""
Secondary Control Module
SQP-based translation of EMS power references into DGU voltage references
"""

from .sqp_solver import NlpProblem, SqpOptions, SqpResult, project_pd, solve_sqp
from .secondary_control import (
    NecessaryCondition,
    PowerFlowNlp,
    SecondaryOptions,
    SecondaryRequest,
    SecondaryResult,
    Translator,
    necessary_condition,
    solve_scpf,
    solve_spf,
)

__all__ = [
    'NlpProblem', 'SqpOptions', 'SqpResult', 'project_pd', 'solve_sqp',
    'NecessaryCondition', 'PowerFlowNlp', 'SecondaryOptions', 'SecondaryRequest',
    'SecondaryResult', 'Translator', 'necessary_condition', 'solve_scpf', 'solve_spf',
]
