"""
Network Model Module
Graph, admittance partition, ZIP loads and EMS-driven topology edits
"""

from .topology import (
    BatteryParams,
    DguKind,
    DguSpec,
    NetworkTopology,
    ZipLoad,
    apply_decisions,
    load_vector,
)
from .admittance import AdmittancePartition, build_admittance, line_losses, load_power
from .lemmas import LemmaReport, check_lemma_structure

__all__ = [
    'BatteryParams', 'DguKind', 'DguSpec', 'NetworkTopology', 'ZipLoad',
    'apply_decisions', 'load_vector', 'AdmittancePartition', 'build_admittance',
    'line_losses', 'load_power', 'LemmaReport', 'check_lemma_structure',
]
