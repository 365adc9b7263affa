"""
Residuals - Steady-state power and current balance of DGU and load nodes
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import ConstructionError, DomainError
from ..network.admittance import AdmittancePartition
from ..network.topology import ZipLoad


@dataclass(frozen=True, eq=False)
class LoadSnapshot:
    """Vectorized ZIP loads at one instant (one entry per load node)"""

    i_bar: np.ndarray
    p_bar: np.ndarray
    y_l: np.ndarray

    def __post_init__(self):
        m = len(self.i_bar)
        if len(self.p_bar) != m or len(self.y_l) != m:
            raise ConstructionError("load snapshot vectors must have equal length")
        if np.any(np.asarray(self.y_l) < 0):
            raise ConstructionError("load conductances must be >= 0")

    @classmethod
    def from_loads(cls, loads: Sequence[ZipLoad]) -> "LoadSnapshot":
        return cls(
            i_bar=np.array([ld.i_const for ld in loads], dtype=float),
            p_bar=np.array([ld.p_const for ld in loads], dtype=float),
            y_l=np.array([ld.y_const for ld in loads], dtype=float),
        )

    @classmethod
    def empty(cls, m: int) -> "LoadSnapshot":
        return cls(np.zeros(m), np.zeros(m), np.zeros(m))

    @property
    def m(self) -> int:
        return len(self.i_bar)

    def power(self, v_l: np.ndarray) -> np.ndarray:
        """Per-load absorbed power Ī V + Y_L V² + P̄ (W)"""
        v_l = np.asarray(v_l, dtype=float)
        return self.i_bar * v_l + self.y_l * v_l ** 2 + self.p_bar


@dataclass(frozen=True, eq=False)
class OperatingPoint:
    v_g: np.ndarray
    v_l: np.ndarray
    p_g: np.ndarray
    i_g: np.ndarray

    @property
    def v_full(self) -> np.ndarray:
        return np.concatenate([self.v_g, self.v_l])


def _check_dims(v_g, v_l, partition: AdmittancePartition):
    if len(v_g) != partition.n or len(v_l) != partition.m:
        raise ConstructionError(
            f"voltage dimensions ({len(v_g)}, {len(v_l)}) do not match partition "
            f"({partition.n}, {partition.m})"
        )


def dgu_currents(v_g, v_l, partition: AdmittancePartition) -> np.ndarray:
    """Filter currents I_G = Y_GG V_G + Y_GL V_L (A)"""
    v_g = np.asarray(v_g, dtype=float)
    v_l = np.asarray(v_l, dtype=float)
    _check_dims(v_g, v_l, partition)
    return partition.y_gg @ v_g + partition.y_gl @ v_l


def dgu_powers(v_g, v_l, partition: AdmittancePartition, r_filter) -> np.ndarray:
    """DGU input powers [V_G] I_G + [I_G] R I_G (W): network injection plus filter loss"""
    i_g = dgu_currents(v_g, v_l, partition)
    return np.asarray(v_g, dtype=float) * i_g + np.asarray(r_filter, dtype=float) * i_g ** 2


def residual_f_g(v_g, v_l, p_g, partition: AdmittancePartition, r_filter) -> np.ndarray:
    """DGU power balance [V_G]Y_GG V_G + [V_G]Y_GL V_L + [I_G]R I_G - P_G (W)"""
    return dgu_powers(v_g, v_l, partition, r_filter) - np.asarray(p_g, dtype=float)


def residual_f_l(v_g, v_l, loads: LoadSnapshot, partition: AdmittancePartition) -> np.ndarray:
    """Load current balance Y_LG V_G + (Y_LL + Y_L) V_L + Ī + [V_L]^-1 P̄ (A)"""
    v_g = np.asarray(v_g, dtype=float)
    v_l = np.asarray(v_l, dtype=float)
    _check_dims(v_g, v_l, partition)
    if np.any(v_l == 0):
        raise DomainError("load voltage is zero; constant-power current undefined")
    return (
        partition.y_lg @ v_g
        + partition.y_ll @ v_l
        + loads.y_l * v_l
        + loads.i_bar
        + loads.p_bar / v_l
    )


def jacobian_f_l(v_l, loads: LoadSnapshot, partition: AdmittancePartition) -> np.ndarray:
    """Jacobian of the load residual w.r.t. V_L at fixed V_G: Y_LL + Y_L - [P̄ / V_L²]"""
    v_l = np.asarray(v_l, dtype=float)
    if np.any(v_l == 0):
        raise DomainError("load voltage is zero; Jacobian undefined")
    return partition.y_ll + np.diag(loads.y_l - loads.p_bar / v_l ** 2)
