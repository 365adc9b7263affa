"""
Structural checks on the load block of the admittance matrix
"""
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np
import scipy.linalg

from ..errors import SingularMatrixError
from .admittance import AdmittancePartition
from .topology import ZipLoad


@dataclass
class LemmaReport:
    decomposition_ok: bool
    decomposition_residual: float
    nonnegative_ok: bool
    negative_entries: List[Tuple[int, int]] = field(default_factory=list)
    zero_rows: List[int] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.decomposition_ok and self.nonnegative_ok

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "decomposition_ok": self.decomposition_ok,
            "decomposition_residual": self.decomposition_residual,
            "nonnegative_ok": self.nonnegative_ok,
            "negative_entries": [list(e) for e in self.negative_entries],
            "zero_rows": self.zero_rows,
        }


def check_lemma_structure(
    partition: AdmittancePartition,
    loads: Sequence[ZipLoad],
    tol: float = 1e-12,
) -> LemmaReport:
    """
    Verify the structure of Y_LL and of the load-voltage sensitivity to DGU voltages

    Checks (a) Y_LL = Y_hat + diag(-Y_LG 1) with Y_hat a zero-row-sum Laplacian and
    (b) -(Y_LL + Y_L)^-1 Y_LG is entrywise nonnegative without all-zero rows.

    Args:
        partition: Admittance partition of a connected network
        loads: One ZIP load per load node
        tol: Relative tolerance for the checks

    Returns:
        LemmaReport with pass/fail per check and offending indices
    """
    y_ll, y_lg = partition.y_ll, partition.y_lg
    scale = max(1.0, float(np.max(np.abs(partition.full)))) if partition.full.size else 1.0

    # Y_hat keeps the load-load couplings and the load-load part of the diagonal
    y_hat = y_ll - np.diag(-y_lg.sum(axis=1))
    offdiag = y_hat - np.diag(np.diag(y_hat))
    row_sums = np.abs(y_hat.sum(axis=1)) if y_hat.size else np.zeros(0)
    residual = float(row_sums.max()) if row_sums.size else 0.0
    decomposition_ok = residual <= tol * scale and bool(np.all(offdiag <= tol * scale))

    y_l = np.array([load.y_const for load in loads], dtype=float)
    loaded = partition.loaded_ll(y_l)
    sensitivity = np.zeros((0, partition.n))
    if loaded.size:
        lu = scipy.linalg.lu_factor(loaded)
        if np.min(np.abs(np.diag(lu[0]))) <= 1e-14 * scale:
            raise SingularMatrixError("Y_LL + Y_L is singular")
        sensitivity = -scipy.linalg.lu_solve(lu, y_lg)
    negative = [tuple(int(k) for k in idx) for idx in np.argwhere(sensitivity < -tol)]
    zero_rows = [int(i) for i in np.where(np.all(np.abs(sensitivity) <= tol, axis=1))[0]]
    return LemmaReport(
        decomposition_ok=decomposition_ok,
        decomposition_residual=residual,
        nonnegative_ok=not negative and not zero_rows,
        negative_entries=negative,
        zero_rows=zero_rows,
    )
