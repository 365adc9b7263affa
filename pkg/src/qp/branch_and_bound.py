"""
Branch and Bound - Best-first search over binary variables on QP relaxations
"""
from __future__ import annotations

import heapq
import itertools
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from ..errors import ConstructionError
from .qp_solver import QpOptions, QpProblem, SolveReport, SolveStatus, solve_qp

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class MiqpProblem:
    qp: QpProblem
    binary_indices: Sequence[int]

    def __post_init__(self):
        self.binary_indices = [int(i) for i in self.binary_indices]
        n = self.qp.n
        for i in self.binary_indices:
            if not 0 <= i < n:
                raise ConstructionError(f"binary index {i} outside dimension {n}")
            if self.qp.lb[i] < 0 or self.qp.ub[i] > 1:
                raise ConstructionError(f"binary variable {i} has bounds outside [0, 1]")
        lb, ub = self.qp.lb.copy(), self.qp.ub.copy()
        lb[self.binary_indices] = np.ceil(lb[self.binary_indices] - 1e-12)
        ub[self.binary_indices] = np.floor(ub[self.binary_indices] + 1e-12)
        self.qp = self.qp.with_bounds(lb, ub)


@dataclass
class MiqpOptions:
    """
    Branch-and-bound settings

    Args:
        gap: Absolute pruning gap; None means 1e-6 * (1 + |incumbent|)
        node_limit: Maximum number of QP relaxations solved
        integrality_tol: Distance from 0/1 accepted as integral
        rounding_heuristic: Round the root relaxation once to seed an incumbent
        qp: Options passed to every relaxation
    """

    gap: Optional[float] = None
    node_limit: int = 2000
    integrality_tol: float = 1e-6
    rounding_heuristic: bool = True
    qp: QpOptions = field(default_factory=QpOptions)


def _gap_tolerance(opts: MiqpOptions, best: float) -> float:
    if opts.gap is not None:
        return opts.gap
    return 1e-6 * (1.0 + abs(best)) if np.isfinite(best) else 0.0


def _most_fractional(x: np.ndarray, binaries: List[int], tol: float) -> Optional[int]:
    best, pick = tol, None
    for i in binaries:  # ascending order, so ties keep the lowest index
        frac = min(x[i] - np.floor(x[i]), np.ceil(x[i]) - x[i])
        if frac > best:
            best, pick = frac, i
    return pick


def _solve_fixed(problem: MiqpProblem, x: np.ndarray, lb: np.ndarray, ub: np.ndarray, opts: MiqpOptions) -> SolveReport:
    """Re-solve with every binary fixed at its rounded value"""
    lb, ub = lb.copy(), ub.copy()
    idx = problem.binary_indices
    values = np.clip(np.round(x[idx]), lb[idx], ub[idx])
    lb[idx] = values
    ub[idx] = values
    return solve_qp(problem.qp.with_bounds(lb, ub), QpOptions(
        feas_tol=opts.qp.feas_tol, opt_tol=opts.qp.opt_tol, max_iter=opts.qp.max_iter, warm_start=x,
    ))


def solve_miqp(problem: MiqpProblem, opts: Optional[MiqpOptions] = None) -> SolveReport:
    """
    Solve a convex MIQP by best-bound branch and bound

    Nodes are ordered by relaxation bound with FIFO tie-break; branching picks the
    most fractional binary (lowest index on ties), so the search is deterministic.

    Args:
        problem: QP plus the indices of its binary variables
        opts: Gap, node limit and heuristic settings

    Returns:
        SolveReport of the incumbent; ITER_LIMIT when the node limit stops the search
    """
    opts = opts or MiqpOptions()
    qp = problem.qp
    binaries = sorted(problem.binary_indices)

    root = solve_qp(qp, opts.qp)
    nodes = 1
    if root.status != SolveStatus.OPTIMAL:
        root.nodes_explored = nodes
        logger.debug("root relaxation not optimal: %s", root.status.value)
        return root

    incumbent: Optional[SolveReport] = None
    best = np.inf

    def offer(report: SolveReport):
        nonlocal incumbent, best
        if report.status == SolveStatus.OPTIMAL and report.objective < best:
            incumbent, best = report, report.objective
            logger.debug("new incumbent %.8g after %d nodes", best, nodes)

    if opts.rounding_heuristic and binaries:
        offer(_solve_fixed(problem, root.x, qp.lb, qp.ub, opts))
        nodes += 1

    counter = itertools.count()
    heap = [(root.objective, next(counter), qp.lb.copy(), qp.ub.copy(), root)]
    hit_limit = False
    final_bound = None
    # parent bounds of subtrees whose relaxation stopped at the QP iteration limit
    unresolved: List[float] = []

    while heap:
        bound, _, lb, ub, report = heapq.heappop(heap)
        if bound >= best - _gap_tolerance(opts, best):
            final_bound = bound
            break

        branch = _most_fractional(report.x, binaries, opts.integrality_tol)
        if branch is None:
            fixed = _solve_fixed(problem, report.x, lb, ub, opts)
            nodes += 1
            if fixed.status == SolveStatus.ITER_LIMIT:
                unresolved.append(bound)
                offer(report)
            else:
                offer(fixed)
            continue

        for value in (0.0, 1.0):
            if nodes >= opts.node_limit:
                hit_limit = True
                break
            child_lb, child_ub = lb.copy(), ub.copy()
            child_lb[branch] = value
            child_ub[branch] = value
            child = solve_qp(qp.with_bounds(child_lb, child_ub), QpOptions(
                feas_tol=opts.qp.feas_tol, opt_tol=opts.qp.opt_tol,
                max_iter=opts.qp.max_iter, warm_start=report.x,
            ))
            nodes += 1
            if child.status == SolveStatus.ITER_LIMIT:
                logger.warning("relaxation hit the QP iteration limit at branch x[%d] = %g", branch, value)
                unresolved.append(bound)
            elif child.status == SolveStatus.OPTIMAL and child.objective < best - _gap_tolerance(opts, best):
                heapq.heappush(heap, (child.objective, next(counter), child_lb, child_ub, child))
        if hit_limit:
            heapq.heappush(heap, (bound, next(counter), lb, ub, report))
            break

    stopped = hit_limit or bool(unresolved)
    if incumbent is None:
        status = SolveStatus.ITER_LIMIT if stopped else SolveStatus.INFEASIBLE
        logger.warning("branch and bound found no incumbent (%s, %d nodes)", status.value, nodes)
        return SolveReport(status=status, x=root.x, objective=float("nan"), nodes_explored=nodes, gap=np.inf)

    if hit_limit:
        final_bound = min(entry[0] for entry in heap)
    if final_bound is None:
        final_bound = best
    if unresolved:
        final_bound = min(final_bound, min(unresolved))
    result = SolveReport(
        status=SolveStatus.ITER_LIMIT if stopped else SolveStatus.OPTIMAL,
        x=incumbent.x,
        objective=incumbent.objective,
        nodes_explored=nodes,
        gap=max(0.0, best - final_bound),
        iterations=incumbent.iterations,
        multipliers_eq=incumbent.multipliers_eq,
        multipliers_in=incumbent.multipliers_in,
        multipliers_bounds=incumbent.multipliers_bounds,
        kkt=incumbent.kkt,
    )
    if hit_limit:
        logger.warning("node limit %d reached; returning incumbent with gap %.3g", opts.node_limit, result.gap)
    return result


def enumerate_miqp(problem: MiqpProblem, opts: Optional[QpOptions] = None) -> SolveReport:
    """Exhaustive oracle: solve the QP for every 0/1 assignment of the binaries"""
    qp = problem.qp
    binaries = sorted(problem.binary_indices)
    best: Optional[SolveReport] = None
    count = 0
    for values in itertools.product((0.0, 1.0), repeat=len(binaries)):
        lb, ub = qp.lb.copy(), qp.ub.copy()
        if any(v < lo or v > hi for v, lo, hi in zip(values, lb[binaries], ub[binaries])):
            continue
        lb[binaries] = values
        ub[binaries] = values
        report = solve_qp(qp.with_bounds(lb, ub), opts)
        count += 1
        if report.status == SolveStatus.OPTIMAL and (best is None or report.objective < best.objective):
            best = report
    if best is None:
        return SolveReport(status=SolveStatus.INFEASIBLE, x=np.zeros(qp.n), objective=float("nan"), nodes_explored=count)
    best.nodes_explored = count
    return best
