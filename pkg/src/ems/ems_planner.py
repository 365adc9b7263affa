"""
EMS Planner - Solve one receding-horizon instant and decode the first-step decisions
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence

import numpy as np

from ..network.topology import DguSpec
from ..qp.branch_and_bound import MiqpOptions, solve_miqp
from ..qp.qp_solver import SolveReport, SolveStatus
from .ems_model import KW, EmsInputs, EmsLayout, EmsWeights, build_problem

logger = logging.getLogger(__name__)


@dataclass
class EmsOptions:
    """
    Planner settings

    Args:
        epsilon: Minimum curtailment when a PV unit leaves MPPT (W)
        freeze_from: Fix modes to their previous values from this step on (None = off)
        miqp: Branch-and-bound settings
    """

    epsilon: float = 1.0
    freeze_from: Optional[int] = None
    miqp: MiqpOptions = field(default_factory=lambda: MiqpOptions(node_limit=200))


@dataclass
class EmsPlan:
    """Decisions of one EMS instant; powers in W, trajectories indexed by horizon step"""

    p_ref: Dict[str, float]
    modes: Dict[str, int]
    power: Dict[str, List[float]]
    mode_trajectory: Dict[str, List[int]]
    soc: Dict[str, List[float]]
    slack: Dict[str, float]
    curtail: Dict[str, List[float]]
    balance_residual: List[float]
    load_estimate: List[float]
    objective: float
    status: str
    nodes_explored: int = 0
    infeasible: bool = False
    iter_limit: bool = False

    @property
    def flagged(self) -> bool:
        return self.infeasible or self.iter_limit

    def to_dict(self) -> Dict[str, Any]:
        return {
            "status": self.status,
            "objective": None if not np.isfinite(self.objective) else float(self.objective),
            "infeasible": self.infeasible,
            "iter_limit": self.iter_limit,
            "nodes_explored": self.nodes_explored,
            "p_ref_w": dict(self.p_ref),
            "modes": dict(self.modes),
            "power_w": {k: list(v) for k, v in self.power.items()},
            "mode_trajectory": {k: list(v) for k, v in self.mode_trajectory.items()},
            "soc": {k: list(v) for k, v in self.soc.items()},
            "soc_slack": dict(self.slack),
            "curtail_w": {k: list(v) for k, v in self.curtail.items()},
            "balance_residual_w": list(self.balance_residual),
            "load_estimate_w": list(self.load_estimate),
        }


def _decode(report: SolveReport, layout: EmsLayout, inputs: EmsInputs) -> EmsPlan:
    x = report.x
    N = layout.horizon
    load = inputs.load_estimates()
    power: Dict[str, List[float]] = {}
    modes: Dict[str, List[int]] = {}
    soc: Dict[str, List[float]] = {}
    slack: Dict[str, float] = {}
    curtail: Dict[str, List[float]] = {}

    for b, unit in enumerate(layout.batteries):
        power[unit.name] = [KW * float(x[layout.p_dh(i, b)] + x[layout.p_ch(i, b)]) for i in range(N)]
        modes[unit.name] = [int(round(x[layout.delta_b(i, b)])) for i in range(N)]
        soc[unit.name] = [float(inputs.soc[unit.name])] + [float(x[layout.soc(k, b)]) for k in range(1, N + 1)]
        slack[unit.name] = float(x[layout.slack(b)])
    for d, unit in enumerate(layout.dispatchables):
        power[unit.name] = [KW * float(x[layout.p_d(i, d)]) for i in range(N)]
        modes[unit.name] = [int(round(x[layout.delta_d(i, d)])) for i in range(N)]
    for p, unit in enumerate(layout.pvs):
        available = inputs.pv_available(unit.name)
        cut = [KW * float(x[layout.dp_pv(i, p)]) for i in range(N)]
        curtail[unit.name] = cut
        power[unit.name] = [float(available[i]) - cut[i] for i in range(N)]
        modes[unit.name] = [int(round(x[layout.delta_pv(i, p)])) for i in range(N)]

    residual = [
        float(sum(series[i] for series in power.values()) - load[i]) for i in range(N)
    ]
    return EmsPlan(
        p_ref={name: series[0] for name, series in power.items()},
        modes={name: series[0] for name, series in modes.items()},
        power=power,
        mode_trajectory=modes,
        soc=soc,
        slack=slack,
        curtail=curtail,
        balance_residual=residual,
        load_estimate=[float(v) for v in load],
        objective=float(report.objective),
        status=report.status.value,
        nodes_explored=report.nodes_explored,
        iter_limit=report.status == SolveStatus.ITER_LIMIT,
    )


def fallback_plan(inputs: EmsInputs, dgus: Sequence[DguSpec], status: str = "infeasible") -> EmsPlan:
    """Batteries idle, dispatchables at mid-range, PV in MPPT; flagged infeasible"""
    N = inputs.horizon
    layout = EmsLayout(dgus, N)
    power: Dict[str, List[float]] = {}
    modes: Dict[str, List[int]] = {}
    soc: Dict[str, List[float]] = {}
    for unit in layout.batteries:
        power[unit.name] = [0.0] * N
        modes[unit.name] = [1] * N
        soc[unit.name] = [float(inputs.soc[unit.name])] * (N + 1)
    for unit in layout.dispatchables:
        power[unit.name] = [0.5 * (max(unit.p_min, 0.0) + unit.p_max)] * N
        modes[unit.name] = [1] * N
    for unit in layout.pvs:
        power[unit.name] = [float(v) for v in inputs.pv_available(unit.name)]
        modes[unit.name] = [1] * N

    load = inputs.load_estimates()
    residual = [float(sum(series[i] for series in power.values()) - load[i]) for i in range(N)]
    logger.warning("EMS returned %s; using the fallback plan", status)
    return EmsPlan(
        p_ref={name: series[0] for name, series in power.items()},
        modes={name: series[0] for name, series in modes.items()},
        power=power,
        mode_trajectory=modes,
        soc=soc,
        slack={unit.name: 0.0 for unit in layout.batteries},
        curtail={unit.name: [0.0] * N for unit in layout.pvs},
        balance_residual=residual,
        load_estimate=[float(v) for v in load],
        objective=float("nan"),
        status=status,
        infeasible=True,
    )


def plan(
    inputs: EmsInputs,
    dgus: Sequence[DguSpec],
    weights: EmsWeights,
    extra_constraints: Sequence[Mapping[str, Any]] = (),
    opts: Optional[EmsOptions] = None,
) -> EmsPlan:
    """
    Solve the EMS problem for one instant

    Only the first step of the returned plan is meant to be applied; the
    horizon is shifted and the problem re-solved at the next EMS instant.

    Args:
        inputs: Measurements and forecasts
        dgus: Units in the network
        weights: Cost weights
        extra_constraints: Linear mode rows applied at every step
        opts: Planner settings

    Returns:
        EmsPlan; the fallback plan with infeasible=True when no integer-feasible point exists
    """
    opts = opts or EmsOptions()
    problem = build_problem(
        inputs, dgus, weights, extra_constraints,
        epsilon=opts.epsilon, freeze_from=opts.freeze_from,
    )
    layout = EmsLayout(dgus, inputs.horizon)
    report = solve_miqp(problem, opts.miqp)

    if report.status in (SolveStatus.INFEASIBLE, SolveStatus.UNBOUNDED) or not np.isfinite(report.objective):
        return fallback_plan(inputs, dgus, status=report.status.value)

    result = _decode(report, layout, inputs)
    if result.iter_limit:
        logger.warning("EMS node limit reached; plan taken from the incumbent (gap %.3g)", report.gap)
    worst = max((abs(r) for r in result.balance_residual), default=0.0)
    logger.debug("EMS plan: objective %.6g, %d nodes, balance residual %.2e W",
                 result.objective, result.nodes_explored, worst)
    return result


def curtailing_units(result: EmsPlan) -> List[str]:
    """PV units that leave MPPT in the first step"""
    return [name for name, cut in result.curtail.items() if result.modes.get(name, 1) == 0 and cut[0] > 0]
