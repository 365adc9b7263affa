"""
Power Flow Module
Residuals, load-flow solvers and solvability certificates at fixed DGU voltages
"""

from .residuals import (
    LoadSnapshot,
    OperatingPoint,
    dgu_currents,
    dgu_powers,
    jacobian_f_l,
    residual_f_g,
    residual_f_l,
)
from .certificates import (
    ExistenceCertificate,
    PowerBalance,
    UniquenessReport,
    existence_certificate,
    feasibility_alpha,
    power_balance,
    uniqueness_check,
)
from .load_flow import (
    LoadFlowOptions,
    operating_point,
    solve_load_flow_banach,
    solve_load_flow_newton,
)

__all__ = [
    'LoadSnapshot', 'OperatingPoint', 'dgu_currents', 'dgu_powers', 'jacobian_f_l',
    'residual_f_g', 'residual_f_l', 'ExistenceCertificate', 'PowerBalance',
    'UniquenessReport', 'existence_certificate', 'feasibility_alpha', 'power_balance',
    'uniqueness_check', 'LoadFlowOptions', 'operating_point', 'solve_load_flow_banach',
    'solve_load_flow_newton',
]
