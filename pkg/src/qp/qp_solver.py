"""
QP Solver - Primal active-set method for convex quadratic programs

    min  0.5 x'Hx + f'x + constant
    s.t. A_eq x = b_eq,  A_in x <= b_in,  lb <= x <= ub

A feasible start comes from a phase-1 LP (HiGHS through scipy.optimize.linprog)
that minimizes the L1 distance to a reference point, so warm starts from a
parent branch-and-bound node stay close to the parent solution.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.optimize import linprog

from ..errors import ConstructionError

logger = logging.getLogger(__name__)


class SolveStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    ITER_LIMIT = "iter_limit"
    UNBOUNDED = "unbounded"


def _as_matrix(a, n: int) -> np.ndarray:
    if a is None:
        return np.zeros((0, n))
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.size == 0:
        return np.zeros((0, n))
    return a


def _as_vector(b, rows: int) -> np.ndarray:
    if b is None:
        return np.zeros(rows)
    return np.asarray(b, dtype=float).reshape(-1)


@dataclass(eq=False)
class QpProblem:
    """
    Convex QP data

    Args:
        H: Symmetric positive semidefinite cost matrix
        f: Linear cost vector
        A_eq, b_eq: Equality constraints
        A_in, b_in: Inequality constraints A_in x <= b_in
        lb, ub: Variable bounds (may contain -inf / inf)
        constant: Objective offset
        check_psd: Validate symmetry and semidefiniteness on construction
    """

    H: np.ndarray
    f: np.ndarray
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None
    A_in: Optional[np.ndarray] = None
    b_in: Optional[np.ndarray] = None
    lb: Optional[np.ndarray] = None
    ub: Optional[np.ndarray] = None
    constant: float = 0.0
    check_psd: bool = True

    def __post_init__(self):
        self.f = np.asarray(self.f, dtype=float).reshape(-1)
        n = self.f.size
        self.H = np.asarray(self.H, dtype=float).reshape(n, n)
        self.A_eq = _as_matrix(self.A_eq, n)
        self.b_eq = _as_vector(self.b_eq, self.A_eq.shape[0])
        self.A_in = _as_matrix(self.A_in, n)
        self.b_in = _as_vector(self.b_in, self.A_in.shape[0])
        self.lb = np.full(n, -np.inf) if self.lb is None else np.asarray(self.lb, dtype=float).copy()
        self.ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float).copy()

        if self.A_eq.shape[1] != n or self.A_in.shape[1] != n:
            raise ConstructionError("constraint matrices must have one column per variable")
        if self.b_eq.size != self.A_eq.shape[0] or self.b_in.size != self.A_in.shape[0]:
            raise ConstructionError("right-hand sides must have one entry per constraint row")
        if self.lb.size != n or self.ub.size != n:
            raise ConstructionError("bounds must have one entry per variable")
        if np.any(self.lb > self.ub):
            raise ConstructionError(f"lower bound above upper bound at {np.where(self.lb > self.ub)[0].tolist()}")
        if self.check_psd:
            self._validate_hessian()

    def _validate_hessian(self):
        scale = max(1.0, float(np.max(np.abs(self.H)))) if self.H.size else 1.0
        if not np.allclose(self.H, self.H.T, rtol=0.0, atol=1e-10 * scale):
            raise ConstructionError("H must be symmetric")
        if self.n == 0:
            return
        # Cholesky with a small diagonal shift accepts PSD and rejects indefinite matrices
        try:
            scipy.linalg.cholesky(self.H + 1e-9 * scale * np.eye(self.n), lower=True)
        except scipy.linalg.LinAlgError as e:
            raise ConstructionError("H must be positive semidefinite") from e

    @property
    def n(self) -> int:
        return self.f.size

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.H @ x + self.f @ x + self.constant)

    def violation(self, x: np.ndarray) -> float:
        """Largest constraint violation at x"""
        parts = [0.0]
        if self.A_eq.shape[0]:
            parts.append(float(np.max(np.abs(self.A_eq @ x - self.b_eq))))
        if self.A_in.shape[0]:
            parts.append(float(np.max(self.A_in @ x - self.b_in)))
        parts.append(float(np.max(self.lb - x, initial=0.0)))
        parts.append(float(np.max(x - self.ub, initial=0.0)))
        return max(parts)

    def with_bounds(self, lb: np.ndarray, ub: np.ndarray) -> "QpProblem":
        return replace(self, lb=lb, ub=ub, check_psd=False)


@dataclass
class QpOptions:
    feas_tol: float = 1e-9
    opt_tol: float = 1e-9
    max_iter: Optional[int] = None
    warm_start: Optional[np.ndarray] = None


@dataclass(eq=False)
class SolveReport:
    status: SolveStatus
    x: np.ndarray
    objective: float
    nodes_explored: int = 0
    gap: float = 0.0
    iterations: int = 0
    multipliers_eq: np.ndarray = field(default_factory=lambda: np.zeros(0))
    multipliers_in: np.ndarray = field(default_factory=lambda: np.zeros(0))
    multipliers_bounds: np.ndarray = field(default_factory=lambda: np.zeros(0))
    kkt: Dict[str, float] = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == SolveStatus.OPTIMAL


def _phase_one(problem: QpProblem, x_ref: np.ndarray, feas_tol: float) -> Tuple[Optional[np.ndarray], int]:
    """Feasible point closest to x_ref in the L1 norm; returns (x or None, linprog status)"""
    n = problem.n
    if problem.A_eq.shape[0] == 0 and problem.A_in.shape[0] == 0:
        return np.clip(x_ref, problem.lb, problem.ub), 0

    eye = sp.identity(n, format="csr")
    zeros_in = sp.csr_matrix((problem.A_in.shape[0], n))
    a_ub = sp.vstack([
        sp.hstack([sp.csr_matrix(problem.A_in), zeros_in]),
        sp.hstack([eye, -eye]),
        sp.hstack([-eye, -eye]),
    ], format="csr")
    b_ub = np.concatenate([problem.b_in, x_ref, -x_ref])
    a_eq = sp.hstack([sp.csr_matrix(problem.A_eq), sp.csr_matrix((problem.A_eq.shape[0], n))], format="csr")
    bounds = [(None if np.isinf(lo) else lo, None if np.isinf(hi) else hi) for lo, hi in zip(problem.lb, problem.ub)]
    bounds += [(0, None)] * n
    cost = np.concatenate([np.zeros(n), np.ones(n)])

    result = linprog(
        cost,
        A_ub=a_ub,
        b_ub=b_ub,
        A_eq=a_eq if problem.A_eq.shape[0] else None,
        b_eq=problem.b_eq if problem.A_eq.shape[0] else None,
        bounds=bounds,
        method="highs",
        options={"primal_feasibility_tolerance": max(feas_tol, 1e-10)},
    )
    if result.status != 0 or result.x is None:
        return None, int(result.status)
    return np.clip(result.x[:n], problem.lb, problem.ub), 0


class _ActiveSet:
    """Working set of one active-set solve on a scaled copy of the problem"""

    def __init__(self, problem: QpProblem, opts: QpOptions):
        self.problem = problem
        self.opts = opts
        n = problem.n
        self.scale = max(1.0, float(np.max(np.abs(problem.H), initial=0.0)), float(np.max(np.abs(problem.f), initial=0.0)))
        self.H = problem.H / self.scale
        self.f = problem.f / self.scale

        eq_norm = np.max(np.abs(problem.A_eq), axis=1, initial=0.0)
        self.eq_norm = np.where(eq_norm > 0, eq_norm, 1.0)
        self.A_eq = problem.A_eq / self.eq_norm[:, None]
        self.b_eq = problem.b_eq / self.eq_norm
        in_norm = np.max(np.abs(problem.A_in), axis=1, initial=0.0)
        self.in_norm = np.where(in_norm > 0, in_norm, 1.0)
        self.A_in = problem.A_in / self.in_norm[:, None]
        self.b_in = problem.b_in / self.in_norm

        # bound_state: 0 free, -1 at lower, +1 at upper, 2 fixed (lb == ub)
        self.bound_state = np.zeros(n, dtype=int)
        self.bound_state[problem.lb == problem.ub] = 2
        self.eq_rows: List[int] = []
        self.active_in: List[int] = []

    def seed_working_set(self, x: np.ndarray):
        """Greedy selection of linearly independent active constraints at a feasible x"""
        problem, tol = self.problem, self.opts.feas_tol
        n = problem.n
        basis = np.zeros((n, n))
        rank = 0

        def accept(vec: np.ndarray) -> bool:
            nonlocal rank
            if rank >= n:
                return False
            r = vec - basis[:, :rank] @ (basis[:, :rank].T @ vec)
            norm = np.linalg.norm(r)
            if norm <= 1e-8 * max(1.0, np.linalg.norm(vec)):
                return False
            basis[:, rank] = r / norm
            rank += 1
            return True

        def unit(j: int) -> np.ndarray:
            e = np.zeros(n)
            e[j] = 1.0
            return e

        for j in np.where(self.bound_state == 2)[0]:
            accept(unit(j))
        for i in range(self.A_eq.shape[0]):
            if accept(self.A_eq[i]):
                self.eq_rows.append(i)
        for j in range(n):
            if self.bound_state[j] != 0:
                continue
            if np.isfinite(problem.lb[j]) and x[j] - problem.lb[j] <= tol * (1 + abs(problem.lb[j])):
                if accept(unit(j)):
                    self.bound_state[j] = -1
            elif np.isfinite(problem.ub[j]) and problem.ub[j] - x[j] <= tol * (1 + abs(problem.ub[j])):
                if accept(unit(j)):
                    self.bound_state[j] = 1
        if self.A_in.shape[0]:
            slack = self.b_in - self.A_in @ x
            for i in np.where(slack <= tol * (1 + np.abs(self.b_in)))[0]:
                if accept(self.A_in[i]):
                    self.active_in.append(int(i))

    def snap(self, x: np.ndarray) -> np.ndarray:
        x = x.copy()
        lo = self.bound_state == -1
        hi = self.bound_state == 1
        fixed = self.bound_state == 2
        x[lo] = self.problem.lb[lo]
        x[hi] = self.problem.ub[hi]
        x[fixed] = self.problem.lb[fixed]
        return x

    def constraint_block(self, free: np.ndarray) -> np.ndarray:
        rows = [self.A_eq[self.eq_rows][:, free], self.A_in[self.active_in][:, free]]
        return np.vstack(rows) if rows else np.zeros((0, int(free.sum())))

    def equality_step(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray, bool]:
        """Step of the equality-constrained subproblem; returns (p, multipliers, zero_curvature)"""
        n = self.problem.n
        free = self.bound_state == 0
        g = self.H @ x + self.f
        c = self.constraint_block(free)
        k, nf = c.shape
        p = np.zeros(n)
        if nf == 0:
            return p, np.zeros(k), False

        hf = self.H[np.ix_(free, free)]
        gf = g[free]
        kkt = np.block([[hf, c.T], [c, np.zeros((k, k))]])
        rhs = np.concatenate([-gf, np.zeros(k)])
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
                sol = scipy.linalg.solve(kkt, rhs, assume_a="sym")
            p[free] = sol[:nf]
            return p, sol[nf:], False
        except (scipy.linalg.LinAlgError, scipy.linalg.LinAlgWarning):
            pass

        # singular KKT: zero curvature on the null space of the working set
        z = scipy.linalg.null_space(c) if k else np.eye(nf)
        if z.shape[1] == 0:
            mult = np.linalg.lstsq(c.T, -gf, rcond=None)[0]
            return p, mult, False
        hz = z.T @ hf @ z
        gz = z.T @ gf
        w, u = scipy.linalg.eigh(hz)
        flat = w <= 1e-10 * max(1.0, float(np.max(np.abs(w))))
        coeff = u.T @ gz
        if np.any(flat) and np.max(np.abs(coeff[flat])) > 1e-10 * max(1.0, float(np.max(np.abs(gz)))):
            p[free] = -z @ (u[:, flat] @ coeff[flat])
            return p, np.zeros(k), True
        step = np.zeros_like(coeff)
        step[~flat] = coeff[~flat] / w[~flat]
        p[free] = -z @ (u @ step)
        mult = np.linalg.lstsq(c.T, -(gf + hf @ p[free]), rcond=None)[0] if k else np.zeros(0)
        return p, mult, False

    def bound_multipliers(self, x: np.ndarray, mult: np.ndarray) -> np.ndarray:
        """Signed bound multipliers (>= 0 at optimum) for variables held at a bound"""
        k_eq = len(self.eq_rows)
        grad = self.H @ x + self.f
        if k_eq:
            grad = grad + self.A_eq[self.eq_rows].T @ mult[:k_eq]
        if self.active_in:
            grad = grad + self.A_in[self.active_in].T @ mult[k_eq:]
        nu = np.zeros(self.problem.n)
        nu[self.bound_state == -1] = grad[self.bound_state == -1]
        nu[self.bound_state == 1] = -grad[self.bound_state == 1]
        return nu


def solve_qp(problem: QpProblem, opts: Optional[QpOptions] = None) -> SolveReport:
    """
    Solve a convex QP with the primal active-set method

    Args:
        problem: QP data
        opts: Tolerances, iteration limit and optional warm start

    Returns:
        SolveReport with status, solution, objective, multipliers and KKT residuals
    """
    opts = opts or QpOptions()
    n = problem.n
    x_ref = np.zeros(n) if opts.warm_start is None else np.asarray(opts.warm_start, dtype=float)
    x_ref = np.clip(x_ref, problem.lb, problem.ub)

    x, lp_status = _phase_one(problem, x_ref, opts.feas_tol)
    if x is None:
        status = SolveStatus.INFEASIBLE if lp_status == 2 else SolveStatus.ITER_LIMIT
        logger.debug("phase-1 LP failed with status %d", lp_status)
        return SolveReport(status=status, x=x_ref, objective=float("nan"))

    state = _ActiveSet(problem, opts)
    state.seed_working_set(x)
    x = state.snap(x)
    max_iter = opts.max_iter or 10 * (n + problem.A_in.shape[0]) + 100
    n_in = problem.A_in.shape[0]

    for iteration in range(1, max_iter + 1):
        p, mult, ray = state.equality_step(x)
        step_norm = float(np.max(np.abs(p), initial=0.0))

        if not ray and step_norm <= 1e-11 * max(1.0, float(np.max(np.abs(x), initial=0.0))):
            nu = state.bound_multipliers(x, mult)
            k_eq = len(state.eq_rows)
            mu_in = mult[k_eq:]
            worst, worst_key = -opts.opt_tol, None
            for pos, row in sorted(enumerate(state.active_in), key=lambda item: item[1]):
                if mu_in[pos] < worst:
                    worst, worst_key = mu_in[pos], ("row", pos)
            for j in np.where((state.bound_state == -1) | (state.bound_state == 1))[0]:
                if nu[j] < worst:
                    worst, worst_key = nu[j], ("bound", int(j))
            if worst_key is None:
                return _finish(problem, state, x, mult, nu, iteration, SolveStatus.OPTIMAL)
            if worst_key[0] == "row":
                state.active_in.pop(worst_key[1])
            else:
                state.bound_state[worst_key[1]] = 0
            continue

        alpha = np.inf if ray else 1.0
        blocking = None
        if n_in:
            inactive = np.ones(n_in, dtype=bool)
            inactive[state.active_in] = False
            ap = state.A_in @ p
            slack = np.maximum(state.b_in - state.A_in @ x, 0.0)
            cand = np.where(inactive & (ap > 1e-12 * step_norm))[0]
            if cand.size:
                ratios = slack[cand] / ap[cand]
                best = int(np.argmin(ratios))
                if ratios[best] < alpha:
                    alpha, blocking = float(ratios[best]), ("row", int(cand[best]))
        free = state.bound_state == 0
        for j in np.where(free & (np.abs(p) > 1e-12 * step_norm))[0]:
            if p[j] > 0 and np.isfinite(problem.ub[j]):
                ratio = max(problem.ub[j] - x[j], 0.0) / p[j]
                side = 1
            elif p[j] < 0 and np.isfinite(problem.lb[j]):
                ratio = max(x[j] - problem.lb[j], 0.0) / -p[j]
                side = -1
            else:
                continue
            if ratio < alpha:
                alpha, blocking = ratio, ("bound", int(j), side)

        if not np.isfinite(alpha):
            logger.debug("zero-curvature descent direction is unblocked")
            return SolveReport(status=SolveStatus.UNBOUNDED, x=x, objective=-np.inf, iterations=iteration)

        x = x + alpha * p
        if blocking is not None:
            if blocking[0] == "row":
                state.active_in.append(blocking[1])
            else:
                state.bound_state[blocking[1]] = blocking[2]
        x = state.snap(x)

    logger.warning("active-set QP hit the iteration limit (%d)", max_iter)
    report = SolveReport(
        status=SolveStatus.ITER_LIMIT, x=x, objective=problem.objective(x), iterations=max_iter,
    )
    report.kkt = {"primal": problem.violation(x)}
    return report


def _finish(
    problem: QpProblem,
    state: _ActiveSet,
    x: np.ndarray,
    mult: np.ndarray,
    nu: np.ndarray,
    iterations: int,
    status: SolveStatus,
) -> SolveReport:
    """Unscale multipliers and assemble KKT diagnostics"""
    k_eq = len(state.eq_rows)
    lam_eq = np.zeros(problem.A_eq.shape[0])
    lam_eq[state.eq_rows] = mult[:k_eq] * state.scale / state.eq_norm[state.eq_rows]
    lam_in = np.zeros(problem.A_in.shape[0])
    lam_in[state.active_in] = mult[k_eq:] * state.scale / state.in_norm[state.active_in]
    lam_bounds = np.zeros(problem.n)
    held = (state.bound_state == -1) | (state.bound_state == 1)
    lam_bounds[held] = nu[held] * state.scale

    lower = state.bound_state == -1
    upper = state.bound_state == 1
    grad = problem.H @ x + problem.f + problem.A_eq.T @ lam_eq + problem.A_in.T @ lam_in
    grad = grad - np.where(lower, lam_bounds, 0.0) + np.where(upper, lam_bounds, 0.0)
    grad[state.bound_state == 2] = 0.0
    slack_in = problem.b_in - problem.A_in @ x
    complementarity = float(np.max(np.abs(lam_in * slack_in), initial=0.0))
    gap = float(np.sum(np.abs(lam_in * slack_in)))

    report = SolveReport(
        status=status,
        x=x,
        objective=problem.objective(x),
        iterations=iterations,
        gap=gap,
        multipliers_eq=lam_eq,
        multipliers_in=lam_in,
        multipliers_bounds=lam_bounds,
    )
    report.kkt = {
        "stationarity": float(np.max(np.abs(grad), initial=0.0)) / state.scale,
        "primal": problem.violation(x),
        "complementarity": complementarity / state.scale,
    }
    logger.debug("QP solved in %d iterations, objective %.6g", iterations, report.objective)
    return report
