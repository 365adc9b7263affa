"""
SQP Solver - Sequential quadratic programming for smooth equality-constrained problems with bounds

    min  phi(z)   s.t.  c(z) = 0,  lb <= z <= ub

Each iteration solves a convex QP (src.qp.solve_qp) built from the Lagrangian
Hessian, projected to positive definite, and the linearized constraints. Steps
are accepted by backtracking on the l1 merit function phi + rho * ||c||_1.
"""
from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from ..qp.qp_solver import QpOptions, QpProblem, SolveReport, solve_qp

logger = logging.getLogger(__name__)


class NlpProblem(ABC):
    """Smooth problem data consumed by solve_sqp; bounds may contain infinities"""

    lb: np.ndarray
    ub: np.ndarray

    @abstractmethod
    def objective(self, z: np.ndarray) -> float: ...

    @abstractmethod
    def gradient(self, z: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def constraints(self, z: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def jacobian(self, z: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def lagrangian_hessian(self, z: np.ndarray, lam: np.ndarray) -> np.ndarray:
        """Hessian of phi(z) + lam' c(z)"""


@dataclass(frozen=True)
class SqpOptions:
    """
    SQP settings

    Args:
        max_iter: Major iteration limit
        feas_tol: Constraint violation accepted at convergence (scaled units)
        step_tol: Step size accepted at convergence
        opt_tol: Stationarity residual accepted at convergence
        relaxation: Fractions beta of the linearized constraint residual tried in turn
        curvature_floor: Relative eigenvalue floor of the projected Hessian
        rho_init: Initial merit penalty; afterwards it follows the QP multipliers
        armijo: Sufficient-decrease constant
        min_step: Smallest line-search step before the iteration is declared stalled
        stall_iter: Feasible iterations without objective progress before stopping
        stall_tol: Relative objective change counted as no progress
    """

    max_iter: int = 100
    feas_tol: float = 1e-10
    step_tol: float = 1e-10
    opt_tol: float = 1e-8
    relaxation: Sequence[float] = (1.0, 0.5, 0.1)
    curvature_floor: float = 1e-8
    rho_init: float = 0.0
    armijo: float = 1e-4
    min_step: float = 1e-10
    stall_iter: int = 5
    stall_tol: float = 1e-12


@dataclass
class SqpResult:
    z: np.ndarray
    lam: np.ndarray
    converged: bool
    iterations: int
    violation: float
    kkt_residual: float
    message: str = ""
    history: list = field(default_factory=list)


def project_pd(hessian: np.ndarray, floor: float) -> np.ndarray:
    """Clip the spectrum of a symmetric matrix from below"""
    sym = 0.5 * (hessian + hessian.T)
    w, u = scipy.linalg.eigh(sym)
    cutoff = floor * max(1.0, float(np.max(np.abs(w), initial=0.0)))
    w = np.maximum(w, cutoff)
    return (u * w) @ u.T


def _merit(problem: NlpProblem, z: np.ndarray, rho: float) -> Tuple[float, np.ndarray]:
    c = problem.constraints(z)
    return problem.objective(z) + rho * float(np.sum(np.abs(c))), c


def _subproblem(
    w: np.ndarray, g: np.ndarray, jac: np.ndarray, c: np.ndarray,
    lo: np.ndarray, hi: np.ndarray, beta: float,
) -> SolveReport:
    return solve_qp(QpProblem(H=w, f=g, A_eq=jac, b_eq=-beta * c, lb=lo, ub=hi, check_psd=False),
                    QpOptions(warm_start=np.zeros(g.size)))


def _elastic_subproblem(
    w: np.ndarray, g: np.ndarray, jac: np.ndarray, c: np.ndarray,
    lo: np.ndarray, hi: np.ndarray, rho: float,
) -> SolveReport:
    """J d + s+ - s- = -c with s+/- >= 0 penalized by rho in the l1 norm"""
    n, k = g.size, c.size
    size = n + 2 * k
    h = np.zeros((size, size))
    h[:n, :n] = w
    f = np.concatenate([g, np.full(2 * k, rho)])
    a_eq = np.hstack([jac, np.eye(k), -np.eye(k)])
    lb = np.concatenate([lo, np.zeros(2 * k)])
    ub = np.concatenate([hi, np.full(2 * k, np.inf)])
    report = solve_qp(QpProblem(H=h, f=f, A_eq=a_eq, b_eq=-c, lb=lb, ub=ub, check_psd=False),
                      QpOptions(warm_start=np.zeros(size)))
    report.x = report.x[:n]
    return report


def solve_sqp(problem: NlpProblem, z0: np.ndarray, opts: Optional[SqpOptions] = None) -> SqpResult:
    """
    Local SQP solve from z0

    Args:
        problem: Objective, constraints and derivatives
        z0: Starting point, clipped into the bounds
        opts: SQP settings

    Returns:
        SqpResult; converged is False when the iteration limit is reached or the line search stalls
    """
    opts = opts or SqpOptions()
    z = np.clip(np.asarray(z0, dtype=float), problem.lb, problem.ub)
    rho = opts.rho_init
    lam = np.zeros(problem.constraints(z).size)
    history = []
    objectives: list = []

    for iteration in range(1, opts.max_iter + 1):
        g = problem.gradient(z)
        c = problem.constraints(z)
        jac = problem.jacobian(z)
        w = project_pd(problem.lagrangian_hessian(z, lam), opts.curvature_floor)
        lo, hi = problem.lb - z, problem.ub - z

        report, beta = None, 1.0
        for beta in opts.relaxation:
            candidate = _subproblem(w, g, jac, c, lo, hi, beta)
            if candidate.optimal:
                report = candidate
                break
        if report is None:
            beta = 0.0
            report = _elastic_subproblem(w, g, jac, c, lo, hi, max(rho, 1.0))
            if not report.optimal:
                return SqpResult(z, lam, False, iteration, float(np.max(np.abs(c), initial=0.0)), np.inf,
                                 f"QP subproblem failed: {report.status.value}", history)

        d = report.x
        lam_qp = report.multipliers_eq if report.multipliers_eq.size == c.size else lam
        violation = float(np.max(np.abs(c), initial=0.0))
        step = float(np.max(np.abs(d), initial=0.0))
        kkt = float(np.max(np.abs(g + jac.T @ lam_qp + _bound_part(report, lo, hi)), initial=0.0))
        history.append({"iteration": iteration, "violation": violation, "step": step, "beta": beta})

        small_step = step <= opts.step_tol * max(1.0, float(np.max(np.abs(z), initial=0.0)))
        if violation <= opts.feas_tol and (small_step or kkt <= opts.opt_tol):
            return SqpResult(z, lam_qp, True, iteration, violation, kkt, "converged", history)

        phi = problem.objective(z)
        objectives.append(phi)
        recent = objectives[-(opts.stall_iter + 1):]
        if (violation <= opts.feas_tol and len(recent) > opts.stall_iter
                and max(recent) - min(recent) <= opts.stall_tol * abs(phi)):
            return SqpResult(z, lam_qp, True, iteration, violation, kkt, "converged (objective stalled)", history)

        # Powell's update: at least |lambda|, decaying towards it when the multipliers shrink
        lam_norm = 1.1 * float(np.max(np.abs(lam_qp), initial=0.0))
        rho = max(lam_norm, 0.5 * (rho + lam_norm))
        predicted = float(g @ d) - rho * (float(np.sum(np.abs(c))) - float(np.sum(np.abs(c + jac @ d))))
        if predicted >= 0:
            predicted = -0.5 * float(d @ w @ d)
        current, _ = _merit(problem, z, rho)

        trial, t = _line_search(problem, z, d, jac, rho, current, predicted, opts)
        if trial is None:
            if violation <= opts.feas_tol:
                return SqpResult(z, lam_qp, True, iteration, violation, kkt, "converged (merit stationary)", history)
            return SqpResult(z, lam, False, iteration, violation, kkt, "line search stalled", history)

        z = trial
        lam = lam + t * (lam_qp - lam)
        logger.debug("sqp iter %d: violation %.3e, step %.3e, t %.3g, rho %.3g", iteration, violation, step, t, rho)

    c = problem.constraints(z)
    return SqpResult(z, lam, False, opts.max_iter, float(np.max(np.abs(c), initial=0.0)), np.inf,
                     "iteration limit reached", history)


def _second_order_correction(problem: NlpProblem, point: np.ndarray, jac: np.ndarray) -> Optional[np.ndarray]:
    """Minimum-norm move of the free variables that cancels the constraint residual at point"""
    free = (point > problem.lb) & (point < problem.ub)
    if not np.any(free):
        return None
    c = problem.constraints(point)
    correction = np.zeros_like(point)
    correction[free] = -scipy.linalg.lstsq(jac[:, free], c)[0]
    return np.clip(point + correction, problem.lb, problem.ub)


def _line_search(
    problem: NlpProblem, z: np.ndarray, d: np.ndarray, jac: np.ndarray,
    rho: float, current: float, predicted: float, opts: SqpOptions,
) -> Tuple[Optional[np.ndarray], float]:
    """
    Backtracking on the l1 merit function

    A rejected full step is retried once with a second-order correction before
    backtracking. Returns (None, 0.0) when no step down to min_step is accepted.
    """
    def accepted(point: np.ndarray, t: float) -> bool:
        value, _ = _merit(problem, point, rho)
        return bool(np.isfinite(value) and value <= current + opts.armijo * t * predicted)

    full = np.clip(z + d, problem.lb, problem.ub)
    if accepted(full, 1.0):
        return full, 1.0
    corrected = _second_order_correction(problem, full, jac)
    if corrected is not None and accepted(corrected, 1.0):
        return corrected, 1.0

    t = 0.5
    while t >= opts.min_step:
        trial = np.clip(z + t * d, problem.lb, problem.ub)
        if accepted(trial, t):
            return trial, t
        t *= 0.5
    return None, 0.0


def _bound_part(report: SolveReport, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Bound-multiplier term of the stationarity residual: -nu at lower bounds, +nu at upper bounds"""
    n = lo.size
    nu = report.multipliers_bounds[:n] if report.multipliers_bounds.size >= n else np.zeros(n)
    d = report.x[:n]
    at_upper = np.abs(hi - d) < np.abs(d - lo)
    return np.where(at_upper, nu, -nu)
