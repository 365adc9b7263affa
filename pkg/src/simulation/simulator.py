"""
Simulator - Multi-rate closed loop of EMS, secondary control and quasi-static network

Clocks (defaults): EMS every 15 min, secondary every 3 min, loads and load flow
every minute. Between secondary instants the DGU voltages stay at the last
references; SOC is integrated from the realized battery power of each minute.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np

from ..ems.ems_planner import EmsOptions, EmsPlan, plan
from ..errors import DcmgError, InfeasibleError, TopologyError
from ..network.admittance import AdmittancePartition, build_admittance
from ..network.topology import BatteryParams, DguKind, NetworkTopology, ZipLoad, apply_decisions, load_vector
from ..powerflow.certificates import power_balance, uniqueness_check
from ..powerflow.load_flow import LoadFlowOptions, operating_point
from ..powerflow.residuals import LoadSnapshot
from ..qp.branch_and_bound import MiqpOptions
from ..secondary.secondary_control import SecondaryOptions, SecondaryResult, Translator, solve_spf
from .scenario import Scenario, ems_inputs, initial_modes, initial_soc
from .sim_log import SimLog

logger = logging.getLogger(__name__)


def soc_integrate(soc: float, p_b: float, battery: BatteryParams, dt_h: float) -> Tuple[float, bool]:
    """
    Advance the SOC by dt_h hours at battery output p_b (W)

    Discharge (p_b > 0) is divided by eta_dh, charge (p_b < 0) multiplied by eta_ch.

    Returns:
        (new SOC clamped to [0, 1], True if the clamp was applied)
    """
    if dt_h <= 0:
        raise ValueError("dt must be > 0")
    if p_b >= 0:
        delta = -dt_h / battery.capacity_wh * p_b / battery.eta_dh
    else:
        delta = -dt_h / battery.capacity_wh * battery.eta_ch * p_b
    new = soc + delta
    clamped = bool(new < 0.0 or new > 1.0)
    return min(max(new, 0.0), 1.0), clamped


@dataclass
class RunOptions:
    """
    Args:
        hours: Overrides the scenario duration
        ems: Planner settings; built from the scenario when omitted
        secondary: Secondary-control settings
        load_flow: Per-minute load-flow settings; v_nominal and v_min follow the scenario when omitted
    """

    hours: Optional[float] = None
    ems: Optional[EmsOptions] = None
    secondary: SecondaryOptions = field(default_factory=SecondaryOptions)
    load_flow: Optional[LoadFlowOptions] = None


class Simulator:
    """One sequential event loop over a scenario"""

    def __init__(self, scenario: Scenario, opts: Optional[RunOptions] = None):
        self.scenario = scenario
        self.opts = opts or RunOptions()
        self.ems_opts = self.opts.ems or EmsOptions(
            epsilon=scenario.epsilon,
            freeze_from=scenario.freeze_from,
            miqp=MiqpOptions(node_limit=scenario.node_limit),
        )
        self.lf_opts = self.opts.load_flow or LoadFlowOptions(v_nominal=scenario.v_nominal, v_min=scenario.v_min)
        self.translator = Translator(
            scenario.dgus, scenario.v_nominal, scenario.v_min, scenario.v_max, self.opts.secondary,
        )
        self.log = SimLog()

        self.soc = initial_soc(scenario)
        self.modes = initial_modes(scenario)
        self.topology: NetworkTopology = scenario.topology
        self.partition: AdmittancePartition = build_admittance(self.topology)
        self.plan: Optional[EmsPlan] = None
        self.secondary: Optional[SecondaryResult] = None
        self.v_ref: Dict[str, float] = {u.name: scenario.v_nominal for u in scenario.dgus}
        self.v_l_prev: Optional[np.ndarray] = None
        self.by_node = {u.node: u for u in scenario.dgus}

    # ----------------------------------------
    # measurements
    # ----------------------------------------

    def pv_now(self, t: float) -> Dict[str, float]:
        return {u.name: self.scenario.pv_at(u, t) for u in self.scenario.dgus if u.kind == DguKind.PV}

    def loads_now(self, t: float) -> Dict[str, ZipLoad]:
        """Actual loads per node, MPPT PV nodes carrying their current injection"""
        loads = self.scenario.load_at(t)
        pv = self.pv_now(t)
        for node, _ in self.topology.pv_injections:
            loads[node] = ZipLoad(p_const=-pv[self.by_node[node].name])
        return loads

    # ----------------------------------------
    # controller instants
    # ----------------------------------------

    def ems_step(self, t: float):
        inputs = ems_inputs(self.scenario, t, self.soc, self.modes)
        result = plan(inputs, self.scenario.dgus, self.scenario.weights, self.scenario.extra_constraints, self.ems_opts)
        self.log.add_event(
            "ems_plan", t,
            objective=result.objective,
            status=result.status,
            nodes_explored=result.nodes_explored,
            p_ref_w=result.p_ref,
            modes=result.modes,
            soc_slack=result.slack,
            max_balance_residual_w=max((abs(r) for r in result.balance_residual), default=0.0),
        )
        if result.infeasible:
            self.log.add_event("ems_fallback", t, status=result.status)
        elif result.iter_limit:
            self.log.add_event("ems_iter_limit", t, nodes_explored=result.nodes_explored, objective=result.objective)

        try:
            topology = apply_decisions(self.scenario.topology, result.modes, self.scenario.dgus, self.pv_now(t))
        except TopologyError as e:
            self.log.add_event("ems_fallback", t, status="topology", error=str(e))
            logger.warning("plan at t=%.0f s rejected: %s", t, e)
            if self.plan is None:
                self.plan = result
            return

        if topology.nodes != self.topology.nodes:
            self.log.add_event(
                "topology_change", t,
                dgu_nodes=list(topology.dgu_nodes),
                removed=list(topology.removed_nodes),
                mppt=[node for node, _ in topology.pv_injections],
            )
            self.partition = build_admittance(topology)
            self.v_l_prev = None
        self.topology = topology
        self.modes = dict(result.modes)
        self.plan = result

    def secondary_step(self, t: float):
        loads = self.loads_now(t)
        snapshot = LoadSnapshot.from_loads(load_vector(self.topology, loads))
        uniqueness = uniqueness_check(snapshot, self.scenario.v_min)
        if not uniqueness.holds:
            nodes = [self.topology.load_nodes[i] for i in uniqueness.violations]
            self.log.add_event("uniqueness_violation", t, nodes=nodes)

        pv = self.pv_now(t)
        try:
            result = self.translator.translate(self.plan, self.topology, loads, pv_available=pv, instant=t)
        except InfeasibleError as e:
            self.log.add_event("secondary_failure", t, error=str(e), fallback="spf")
            try:
                request = self.translator.request_for(self.plan, self.topology, loads, pv_available=pv)
                result = solve_spf(request, self.opts.secondary)
                result.references = {
                    self.by_node[node].name: float(v) for node, v in zip(self.topology.dgu_nodes, result.v_g_star)
                }
            except DcmgError as e2:
                self.log.add_event("secondary_failure", t, error=str(e2), fallback="hold")
                return

        for name, v in result.references.items():
            self.v_ref[name] = v
        self.secondary = result
        self.log.add_event(
            "secondary", t,
            cost_w=result.cost,
            exact=result.exact,
            start=result.start,
            iterations=result.iterations,
            references_v=result.references,
        )

    def load_step(self, t: float) -> bool:
        """Load flow at fixed references, record, integrate SOC; False when the load flow fails"""
        sc = self.scenario
        loads = self.loads_now(t)
        snapshot = LoadSnapshot.from_loads(load_vector(self.topology, loads))
        units = [self.by_node[node] for node in self.topology.dgu_nodes]
        v_g = np.array([self.v_ref[u.name] for u in units])
        r_filter = np.array([u.r_filter for u in units])
        try:
            point = operating_point(v_g, snapshot, self.partition, r_filter, self.lf_opts, v_init=self.v_l_prev)
        except DcmgError as e:
            self.log.add_event("load_flow_failure", t, error=str(e))
            logger.error("load flow failed at t=%.0f s: %s", t, e)
            return False
        self.v_l_prev = point.v_l

        voltage = dict(zip(self.topology.dgu_nodes, point.v_g))
        voltage.update(zip(self.topology.load_nodes, point.v_l))
        realized = {u.name: float(p) for u, p in zip(units, point.p_g)}
        pv = self.pv_now(t)
        for node, _ in self.topology.pv_injections:
            realized[self.by_node[node].name] = pv[self.by_node[node].name]
        load_power = dict(zip(self.topology.load_nodes, snapshot.power(point.v_l)))
        balance = power_balance(point, snapshot, self.partition, r_filter)

        record: Dict[str, Any] = {"time_s": t}
        for node in sc.topology.nodes:
            record[f"V_{node}"] = float(voltage.get(node, np.nan))
        for u in sc.dgus:
            record[f"P_{u.name}"] = realized.get(u.name, 0.0)
        for u in sc.dgus:
            record[f"Pref_{u.name}"] = float(self.plan.p_ref.get(u.name, 0.0)) if self.plan else 0.0
        for u in sc.dgus:
            record[f"mode_{u.name}"] = int(self.modes.get(u.name, 1))
        for u in sc.dgus:
            if u.kind == DguKind.BATTERY:
                record[f"SOC_{u.name}"] = self.soc[u.name]
        for u in sc.dgus:
            if u.kind == DguKind.PV:
                record[f"curtail_{u.name}"] = max(0.0, pv[u.name] - realized.get(u.name, 0.0))
        for spec in sc.loads:
            record[f"load_{spec.node}"] = float(load_power.get(spec.node, 0.0))
        record["spf_cost"] = self.secondary.cost if self.secondary else float("nan")
        record["exact"] = bool(self.secondary.exact) if self.secondary else False
        record["balance_rel"] = balance.relative
        self.log.records.append(record)

        dt_h = sc.clocks.load_period_s / 3600.0
        for u in sc.dgus:
            if u.kind != DguKind.BATTERY:
                continue
            new, clamped = soc_integrate(self.soc[u.name], realized.get(u.name, 0.0), u.battery, dt_h)
            if clamped:
                self.log.add_event("soc_clamp", t, unit=u.name, soc=new)
                logger.warning("SOC of %s clamped at t=%.0f s", u.name, t)
            self.soc[u.name] = new
        return True

    def run(self) -> SimLog:
        sc = self.scenario
        duration = sc.duration_s if self.opts.hours is None else self.opts.hours * 3600.0
        clocks = sc.clocks
        for t in range(0, int(round(duration)), clocks.load_period_s):
            if t % clocks.ems_period_s == 0:
                self.ems_step(t)
            if t % clocks.secondary_period_s == 0:
                self.secondary_step(t)
            if not self.load_step(t):
                self.log.aborted = True
                break
            if t % 3600 == 0:
                logger.info("t = %5.1f h, SOC %s", t / 3600.0, {k: round(v, 4) for k, v in self.soc.items()})
        return self.log


def run(scenario: Scenario, opts: Optional[RunOptions] = None) -> SimLog:
    """Simulate a scenario; see Simulator"""
    return Simulator(scenario, opts).run()
