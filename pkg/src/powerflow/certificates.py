"""
Certificates - Existence, feasibility witness, uniqueness and power-conservation checks
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np
import scipy.linalg

from ..errors import ConstructionError, SingularMatrixError
from ..network.admittance import AdmittancePartition
from .residuals import LoadSnapshot, OperatingPoint

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ExistenceCertificate:
    v_tilde: np.ndarray
    p_crit: np.ndarray
    delta: float
    solvable: bool

    def to_dict(self) -> dict:
        return {
            "v_tilde": [float(v) for v in self.v_tilde],
            "delta": float(self.delta),
            "solvable": bool(self.solvable),
        }


@dataclass
class UniquenessReport:
    per_load: List[bool]
    margins: List[float]
    holds: bool

    @property
    def violations(self) -> List[int]:
        return [i for i, ok in enumerate(self.per_load) if not ok]

    def to_dict(self) -> dict:
        return {"holds": self.holds, "per_load": self.per_load, "margins_w": self.margins}


@dataclass
class PowerBalance:
    generation: float
    load: float
    line_losses: float
    filter_losses: float
    mismatch: float = field(init=False)
    relative: float = field(init=False)

    def __post_init__(self):
        consumed = self.load + self.line_losses + self.filter_losses
        self.mismatch = self.generation - consumed
        scale = max(abs(self.generation), abs(self.load), self.line_losses + self.filter_losses, 1.0)
        self.relative = abs(self.mismatch) / scale


def _factor_loaded_ll(loads: LoadSnapshot, partition: AdmittancePartition) -> Tuple[np.ndarray, tuple]:
    loaded = partition.loaded_ll(loads.y_l)
    lu = scipy.linalg.lu_factor(loaded)
    scale = max(1.0, float(np.max(np.abs(loaded))))
    if np.min(np.abs(np.diag(lu[0]))) <= 1e-14 * scale:
        raise SingularMatrixError("Y_LL + Y_L is singular")
    return loaded, lu


def existence_certificate(v_g, loads: LoadSnapshot, partition: AdmittancePartition) -> ExistenceCertificate:
    """
    Contraction-based existence certificate for the load flow at fixed V_G

    Ṽ = -(Y_LL + Y_L)^-1 (Y_LG V_G + Ī), P_crit = ¼ [Ṽ](Y_LL + Y_L)[Ṽ],
    Δ = ||P_crit^-1 P̄||_inf; a solution exists when Δ < 1 and Ṽ > 0.
    """
    v_g = np.asarray(v_g, dtype=float)
    if partition.m == 0:
        return ExistenceCertificate(np.zeros(0), np.zeros((0, 0)), 0.0, True)

    loaded, lu = _factor_loaded_ll(loads, partition)
    v_tilde = -scipy.linalg.lu_solve(lu, partition.y_lg @ v_g + loads.i_bar)
    p_crit = 0.25 * np.diag(v_tilde) @ loaded @ np.diag(v_tilde)
    try:
        ratio = scipy.linalg.solve(p_crit, loads.p_bar)
    except scipy.linalg.LinAlgError as e:
        raise SingularMatrixError(f"P_crit is singular: {e}") from e
    delta = float(np.max(np.abs(ratio)))
    solvable = bool(delta < 1.0 and np.all(v_tilde > 0))
    return ExistenceCertificate(v_tilde=v_tilde, p_crit=p_crit, delta=delta, solvable=solvable)


def feasibility_alpha(
    loads: LoadSnapshot,
    partition: AdmittancePartition,
    alpha_seed: float = 100.0,
    guard: float = 1e9,
) -> Tuple[float, np.ndarray]:
    """
    Double a uniform DGU voltage until the existence certificate holds

    Args:
        loads: Load snapshot
        partition: Admittance partition
        alpha_seed: First voltage tried (V)
        guard: Overflow guard (V)

    Returns:
        (alpha, V_G = alpha * 1), a witness that a load-flow solution exists
    """
    if alpha_seed <= 0:
        raise ValueError("alpha_seed must be > 0")
    alpha = float(alpha_seed)
    while alpha <= guard:
        v_g = np.full(partition.n, alpha)
        if existence_certificate(v_g, loads, partition).solvable:
            logger.debug("feasibility witness found at alpha = %.6g V", alpha)
            return alpha, v_g
        alpha *= 2.0
    raise ConstructionError(f"no certifying alpha below {guard:.3g} V; check the network model")


def uniqueness_check(loads: LoadSnapshot, v_min_per_load) -> UniquenessReport:
    """
    Per-load condition P̄_i < (V_i^min)² Y_L,i guaranteeing a unique solution above V^min

    Injections (P̄ <= 0) satisfy the condition trivially.
    """
    v_min = np.broadcast_to(np.asarray(v_min_per_load, dtype=float), (loads.m,))
    bound = v_min ** 2 * loads.y_l
    margins = bound - loads.p_bar
    per_load = [bool(p <= 0 or p < b) for p, b in zip(loads.p_bar, bound)]
    return UniquenessReport(per_load=per_load, margins=[float(x) for x in margins], holds=all(per_load))


def power_balance(
    point: OperatingPoint,
    loads: LoadSnapshot,
    partition: AdmittancePartition,
    r_filter,
) -> PowerBalance:
    """Generation against load power, line losses V^T Y V and filter losses Σ R I²"""
    v_full = point.v_full
    return PowerBalance(
        generation=float(np.sum(point.p_g)),
        load=float(np.sum(loads.power(point.v_l))),
        line_losses=float(v_full @ partition.full @ v_full),
        filter_losses=float(np.sum(np.asarray(r_filter, dtype=float) * point.i_g ** 2)),
    )
