"""
Simulation Module
Scenario files, multi-rate closed-loop simulation and run logs
"""

from .scenario import (
    Clocks,
    InstantState,
    LoadSpec,
    Profile,
    Scenario,
    apply_overrides,
    ems_inputs,
    instant_state,
    load_scenario,
    parse_scenario,
    read_document,
    save_scenario,
    scenario_to_dict,
    validate_scenario,
)
from .sim_log import SimLog, dumps, summarize, write_log
from .simulator import RunOptions, Simulator, run, soc_integrate

__all__ = [
    'Clocks', 'InstantState', 'LoadSpec', 'Profile', 'Scenario', 'apply_overrides',
    'ems_inputs', 'instant_state', 'load_scenario', 'parse_scenario', 'read_document',
    'save_scenario', 'scenario_to_dict', 'validate_scenario', 'SimLog', 'dumps',
    'summarize', 'write_log', 'RunOptions', 'Simulator', 'run', 'soc_integrate',
]
