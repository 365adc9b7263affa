"""
Admittance - Weighted Laplacian Y = B diag(conductance) B^T partitioned DGUs-first
"""
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import ConstructionError
from .topology import NetworkTopology, ZipLoad


@dataclass(frozen=True, eq=False)
class AdmittancePartition:
    """Blocks of the network admittance matrix; G = DGU nodes, L = load nodes"""

    y_gg: np.ndarray
    y_gl: np.ndarray
    y_lg: np.ndarray
    y_ll: np.ndarray

    @property
    def n(self) -> int:
        return self.y_gg.shape[0]

    @property
    def m(self) -> int:
        return self.y_ll.shape[0]

    @property
    def full(self) -> np.ndarray:
        return np.block([[self.y_gg, self.y_gl], [self.y_lg, self.y_ll]])

    def loaded_ll(self, y_l: np.ndarray) -> np.ndarray:
        """Y_LL + diag(Y_L)"""
        return self.y_ll + np.diag(np.asarray(y_l, dtype=float))


def build_admittance(topology: NetworkTopology) -> AdmittancePartition:
    """
    Build the admittance partition of a connected topology

    Args:
        topology: Network topology (DGUs-first ordering)

    Returns:
        AdmittancePartition with Y_GG (n x n), Y_GL (n x m), Y_LG (m x n), Y_LL (m x m)
    """
    if not topology.is_connected():
        raise ConstructionError("cannot build admittance of a disconnected network")

    b = topology.incidence
    y = b @ np.diag(topology.conductances) @ b.T
    n = topology.n
    return AdmittancePartition(
        y_gg=y[:n, :n].copy(),
        y_gl=y[:n, n:].copy(),
        y_lg=y[n:, :n].copy(),
        y_ll=y[n:, n:].copy(),
    )


def line_losses(partition: AdmittancePartition, v_full: np.ndarray) -> float:
    """Total line losses V^T Y V (W) for DGUs-first stacked voltages"""
    v_full = np.asarray(v_full, dtype=float)
    return float(v_full @ partition.full @ v_full)


def load_power(loads: Sequence[ZipLoad], v_l: np.ndarray) -> np.ndarray:
    """Power absorbed by each ZIP load at the given voltages (W)"""
    return np.array([load.power(v) for load, v in zip(loads, np.asarray(v_l, dtype=float))])
