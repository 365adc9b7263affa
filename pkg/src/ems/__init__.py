"""
EMS Module
Receding-horizon mixed-integer energy management: model transcription and planning
"""

from .ems_model import (
    EmsInputs,
    EmsLayout,
    EmsWeights,
    UnitWeights,
    build_problem,
    estimate_load_power,
)
from .ems_planner import EmsOptions, EmsPlan, curtailing_units, fallback_plan, plan

__all__ = [
    'EmsInputs', 'EmsLayout', 'EmsWeights', 'UnitWeights', 'build_problem',
    'estimate_load_power', 'EmsOptions', 'EmsPlan', 'curtailing_units',
    'fallback_plan', 'plan',
]
