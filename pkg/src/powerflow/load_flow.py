"""
Load Flow - Load voltages at fixed DGU voltages (Newton and contraction-map solvers)
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from ..errors import ConvergenceError, NotCertifiedError, SingularJacobianError
from ..network.admittance import AdmittancePartition
from .certificates import existence_certificate
from .residuals import (
    LoadSnapshot,
    OperatingPoint,
    dgu_currents,
    dgu_powers,
    jacobian_f_l,
    residual_f_l,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LoadFlowOptions:
    """
    Solver settings

    Args:
        tol: Residual tolerance on the load currents (A)
        step_tol: Step tolerance (V)
        max_iter: Newton iteration limit
        v_nominal: Flat-start voltage (V)
        v_min: Minimum admissible voltage; Newton iterates are kept above 0.5 * v_min
        banach_tol: Step tolerance of the contraction iteration (V)
        banach_max_iter: Iteration limit of the contraction iteration
    """

    tol: float = 1e-9
    step_tol: float = 1e-10
    max_iter: int = 50
    v_nominal: float = 100.0
    v_min: float = 90.0
    banach_tol: float = 1e-10
    banach_max_iter: int = 10000


def _initial_guess(m: int, v_init, opts: LoadFlowOptions) -> np.ndarray:
    if v_init is None:
        return np.full(m, opts.v_nominal, dtype=float)
    v = np.array(v_init, dtype=float)
    if v.shape != (m,):
        raise ValueError(f"initial guess must have shape ({m},), got {v.shape}")
    return v


def solve_load_flow_newton(
    v_g,
    loads: LoadSnapshot,
    partition: AdmittancePartition,
    opts: Optional[LoadFlowOptions] = None,
    v_init=None,
) -> np.ndarray:
    """
    Solve f_L(V_G, V_L) = 0 for V_L with a damped Newton method

    Args:
        v_g: Fixed DGU voltages (V)
        loads: Load snapshot
        partition: Admittance partition
        opts: Solver options
        v_init: Initial guess, flat v_nominal when omitted

    Returns:
        Load voltages with max residual <= opts.tol
    """
    opts = opts or LoadFlowOptions()
    m = partition.m
    if m == 0:
        return np.zeros(0)

    v = _initial_guess(m, v_init, opts)
    floor = min(0.5 * opts.v_min, 0.5 * float(np.min(v)))

    for iteration in range(opts.max_iter + 1):
        f = residual_f_l(v_g, v, loads, partition)
        if np.max(np.abs(f)) <= opts.tol:
            logger.debug("newton load flow converged in %d iterations", iteration)
            return v
        if iteration == opts.max_iter:
            break

        jac = jacobian_f_l(v, loads, partition)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
                dv = scipy.linalg.solve(jac, -f)
        except (scipy.linalg.LinAlgError, scipy.linalg.LinAlgWarning) as e:
            raise SingularJacobianError(f"load-flow Jacobian singular at iteration {iteration}: {e}") from e

        # damping keeps iterates away from the zero-voltage singularity
        step = 1.0
        while np.any(v + step * dv <= floor) and step > 1e-12:
            step *= 0.5
        if np.any(v + step * dv <= floor):
            raise ConvergenceError(
                f"newton load flow stalled at the voltage floor {floor:.3g} V in iteration {iteration}"
            )
        v = v + step * dv

        if np.max(np.abs(step * dv)) <= opts.step_tol:
            f = residual_f_l(v_g, v, loads, partition)
            if np.max(np.abs(f)) <= opts.tol:
                return v

    residual = float(np.max(np.abs(residual_f_l(v_g, v, loads, partition))))
    raise ConvergenceError(
        f"newton load flow did not converge in {opts.max_iter} iterations (residual {residual:.3e} A)"
    )


def solve_load_flow_banach(
    v_g,
    loads: LoadSnapshot,
    partition: AdmittancePartition,
    opts: Optional[LoadFlowOptions] = None,
) -> np.ndarray:
    """
    Solve the load flow by iterating V_L <- Ṽ - (Y_LL + Y_L)^-1 [V_L]^-1 P̄ from V_L = Ṽ

    Only applicable when the existence certificate holds; used as an independent
    oracle for the Newton solver.
    """
    opts = opts or LoadFlowOptions()
    if partition.m == 0:
        return np.zeros(0)

    certificate = existence_certificate(v_g, loads, partition)
    if not certificate.solvable:
        raise NotCertifiedError(
            f"existence certificate fails (delta = {certificate.delta:.4f}); contraction not guaranteed"
        )

    lu = scipy.linalg.lu_factor(partition.loaded_ll(loads.y_l))
    v_tilde = certificate.v_tilde
    v = v_tilde.copy()
    for iteration in range(1, opts.banach_max_iter + 1):
        v_next = v_tilde - scipy.linalg.lu_solve(lu, loads.p_bar / v)
        if not np.all(np.isfinite(v_next)) or np.any(v_next <= 0):
            raise ConvergenceError(f"contraction iteration left the positive orthant at step {iteration}")
        step = np.max(np.abs(v_next - v))
        v = v_next
        if step <= opts.banach_tol:
            logger.debug("contraction iteration converged in %d steps", iteration)
            return v

    raise ConvergenceError(f"contraction iteration did not converge in {opts.banach_max_iter} steps")


def operating_point(
    v_g,
    loads: LoadSnapshot,
    partition: AdmittancePartition,
    r_filter,
    opts: Optional[LoadFlowOptions] = None,
    v_init=None,
) -> OperatingPoint:
    """Solve the load flow at fixed V_G and return the full operating point"""
    v_g = np.asarray(v_g, dtype=float)
    v_l = solve_load_flow_newton(v_g, loads, partition, opts, v_init=v_init)
    return OperatingPoint(
        v_g=v_g,
        v_l=v_l,
        p_g=dgu_powers(v_g, v_l, partition, r_filter),
        i_g=dgu_currents(v_g, v_l, partition),
    )
