"""
EMS Model - Receding-horizon mixed-integer QP of the energy management system

Powers are normalized to kW inside the problem so that the cost weights act on
kW quantities; inputs and outputs of this module stay in SI units (W, Wh).

Variable layout, step i = 0..N-1 (per-step block of 3*nb + 2*nd + 2*npv):
    P_DH[b], P_CH[b], delta_B[b], P_D[d], delta_D[d], dP_PV[p], delta_PV[p]
followed by SOC states S_B[b](k) for k = 1..N (N*nb) and terminal slacks dS_B[b] (nb).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence

import numpy as np

from ..errors import ConstructionError
from ..network.topology import DguKind, DguSpec, ZipLoad
from ..qp.branch_and_bound import MiqpProblem
from ..qp.qp_solver import QpProblem

logger = logging.getLogger(__name__)

KW = 1000.0


def estimate_load_power(load: ZipLoad, v_nominal: float) -> float:
    """Load power at nominal voltage: Ī V° + Y_L V°² + P̄ (W)"""
    if v_nominal <= 0:
        raise ValueError("v_nominal must be > 0")
    return load.i_const * v_nominal + load.y_const * v_nominal ** 2 + load.p_const


@dataclass(frozen=True)
class UnitWeights:
    power: float = 0.0
    switch: float = 0.0
    soc_slack: float = 0.0

    def __post_init__(self):
        if min(self.power, self.switch, self.soc_slack) < 0:
            raise ConstructionError("EMS weights must be >= 0")


@dataclass
class EmsWeights:
    """Per-unit cost weights: power (w_D, w_B, w_PV), mode switch (w_delta) and SOC slack (w_S)"""

    units: Dict[str, UnitWeights] = field(default_factory=dict)

    def for_unit(self, name: str) -> UnitWeights:
        return self.units.get(name, UnitWeights())

    @classmethod
    def from_dict(cls, data: Mapping[str, Mapping[str, float]]) -> "EmsWeights":
        return cls({
            name: UnitWeights(
                power=float(w.get("power", 0.0)),
                switch=float(w.get("switch", 0.0)),
                soc_slack=float(w.get("soc_slack", 0.0)),
            )
            for name, w in data.items()
        })

    def to_dict(self) -> Dict[str, Dict[str, float]]:
        return {
            name: {"power": w.power, "switch": w.switch, "soc_slack": w.soc_slack}
            for name, w in self.units.items()
        }


@dataclass
class EmsInputs:
    """
    Measurements and forecasts available at one EMS instant

    Args:
        soc: Current state of charge per battery name
        pv_nominal: Current nominal PV power per PV name (W)
        pv_forecast: Forecast PV power per PV name, one value per step (W); step 0 uses pv_nominal
        load_now: Current ZIP loads
        load_i_forecast: Constant-current forecasts, shape (N, m) (A); row 0 uses load_now
        load_p_forecast: Constant-power forecasts, shape (N, m) (W); row 0 uses load_now
        v_nominal: Nominal voltage (V)
        tau: EMS period (h)
        horizon: Prediction horizon N (steps)
        prev_modes: Modes applied in the previous period, per unit name
    """

    soc: Dict[str, float]
    pv_nominal: Dict[str, float]
    pv_forecast: Dict[str, np.ndarray]
    load_now: List[ZipLoad]
    load_i_forecast: np.ndarray
    load_p_forecast: np.ndarray
    v_nominal: float = 100.0
    tau: float = 0.25
    horizon: int = 20
    prev_modes: Dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.horizon < 1:
            raise ConstructionError("horizon must be >= 1")
        if self.tau <= 0:
            raise ConstructionError("tau must be > 0")
        for name, value in self.soc.items():
            if not 0.0 <= value <= 1.0:
                raise ConstructionError(f"SOC of {name} outside [0, 1]: {value}")
        m = len(self.load_now)
        self.load_i_forecast = np.asarray(self.load_i_forecast, dtype=float).reshape(self.horizon, m)
        self.load_p_forecast = np.asarray(self.load_p_forecast, dtype=float).reshape(self.horizon, m)
        self.pv_forecast = {k: np.asarray(v, dtype=float).reshape(self.horizon) for k, v in self.pv_forecast.items()}

    def load_estimates(self) -> np.ndarray:
        """Total load power at nominal voltage for every step (W)"""
        totals = np.zeros(self.horizon)
        for i in range(self.horizon):
            for j, now in enumerate(self.load_now):
                load = now if i == 0 else ZipLoad(
                    i_const=self.load_i_forecast[i, j],
                    y_const=now.y_const,
                    p_const=self.load_p_forecast[i, j],
                )
                totals[i] += estimate_load_power(load, self.v_nominal)
        return totals

    def pv_available(self, name: str) -> np.ndarray:
        """Nominal PV power at step 0 followed by forecasts (W)"""
        series = self.pv_forecast.get(name, np.zeros(self.horizon)).copy()
        series[0] = self.pv_nominal.get(name, series[0])
        return np.maximum(series, 0.0)


class EmsLayout:
    """Index map of the EMS decision vector"""

    def __init__(self, dgus: Sequence[DguSpec], horizon: int):
        self.horizon = horizon
        self.batteries = [d for d in dgus if d.kind == DguKind.BATTERY]
        self.dispatchables = [d for d in dgus if d.kind == DguKind.DISPATCHABLE]
        self.pvs = [d for d in dgus if d.kind == DguKind.PV]
        self.nb, self.nd, self.npv = len(self.batteries), len(self.dispatchables), len(self.pvs)
        self.per_step = 3 * self.nb + 2 * self.nd + 2 * self.npv
        self.soc_base = horizon * self.per_step
        self.slack_base = self.soc_base + horizon * self.nb
        self.size = self.slack_base + self.nb

    def p_dh(self, i: int, b: int) -> int:
        return i * self.per_step + b

    def p_ch(self, i: int, b: int) -> int:
        return i * self.per_step + self.nb + b

    def delta_b(self, i: int, b: int) -> int:
        return i * self.per_step + 2 * self.nb + b

    def p_d(self, i: int, d: int) -> int:
        return i * self.per_step + 3 * self.nb + d

    def delta_d(self, i: int, d: int) -> int:
        return i * self.per_step + 3 * self.nb + self.nd + d

    def dp_pv(self, i: int, p: int) -> int:
        return i * self.per_step + 3 * self.nb + 2 * self.nd + p

    def delta_pv(self, i: int, p: int) -> int:
        return i * self.per_step + 3 * self.nb + 2 * self.nd + self.npv + p

    def soc(self, k: int, b: int) -> int:
        """SOC state after step k-1, k = 1..N"""
        return self.soc_base + (k - 1) * self.nb + b

    def slack(self, b: int) -> int:
        return self.slack_base + b

    def mode_index(self, i: int, name: str) -> int:
        for b, unit in enumerate(self.batteries):
            if unit.name == name:
                return self.delta_b(i, b)
        for d, unit in enumerate(self.dispatchables):
            if unit.name == name:
                return self.delta_d(i, d)
        for p, unit in enumerate(self.pvs):
            if unit.name == name:
                return self.delta_pv(i, p)
        raise ConstructionError(f"unknown unit in EMS constraint: {name}")

    def binary_indices(self) -> List[int]:
        idx = []
        for i in range(self.horizon):
            idx += [self.delta_b(i, b) for b in range(self.nb)]
            idx += [self.delta_d(i, d) for d in range(self.nd)]
            idx += [self.delta_pv(i, p) for p in range(self.npv)]
        return sorted(idx)

    def units(self) -> List[DguSpec]:
        return self.batteries + self.dispatchables + self.pvs


class _Rows:
    """Row-by-row accumulator for constraint matrices"""

    def __init__(self, n: int):
        self.n = n
        self.rows: List[np.ndarray] = []
        self.rhs: List[float] = []

    def add(self, coeffs: Mapping[int, float], rhs: float):
        row = np.zeros(self.n)
        for j, c in coeffs.items():
            row[j] += c
        self.rows.append(row)
        self.rhs.append(rhs)

    def matrix(self):
        if not self.rows:
            return np.zeros((0, self.n)), np.zeros(0)
        return np.vstack(self.rows), np.array(self.rhs)


def build_problem(
    inputs: EmsInputs,
    dgus: Sequence[DguSpec],
    weights: EmsWeights,
    extra_constraints: Sequence[Mapping[str, Any]] = (),
    epsilon: float = 1.0,
    freeze_from: Optional[int] = None,
) -> MiqpProblem:
    """
    Transcribe one EMS instant into a mixed-integer QP

    Args:
        inputs: Measurements and forecasts
        dgus: Units in the network
        weights: Cost weights per unit
        extra_constraints: Linear rows over modes applied at every step, e.g.
            {"terms": {"D1": 1, "D2": 1}, "sense": ">=", "rhs": 1}
        epsilon: Minimum curtailment when a PV leaves MPPT (W)
        freeze_from: Fix every mode to its previous value from this step on

    Returns:
        MiqpProblem over the layout described in the module docstring
    """
    N = inputs.horizon
    layout = EmsLayout(dgus, N)
    n = layout.size
    tau = inputs.tau
    eps = epsilon / KW

    if len(inputs.load_now) != inputs.load_i_forecast.shape[1]:
        raise ConstructionError("load forecasts do not match the number of loads")
    for unit in layout.batteries:
        if unit.name not in inputs.soc:
            raise ConstructionError(f"missing SOC measurement for {unit.name}")

    lb = np.full(n, -np.inf)
    ub = np.full(n, np.inf)
    h = np.zeros((n, n))
    f = np.zeros(n)
    constant = 0.0
    eq = _Rows(n)
    ineq = _Rows(n)

    def switch_cost(i: int, idx: int, prev_idx: Optional[int], prev_value: float, w: float):
        nonlocal constant
        if w == 0:
            return
        h[idx, idx] += 2 * w
        if prev_idx is None:
            f[idx] -= 2 * w * prev_value
            constant += w * prev_value ** 2
        else:
            h[prev_idx, prev_idx] += 2 * w
            h[idx, prev_idx] -= 2 * w
            h[prev_idx, idx] -= 2 * w

    # batteries: SOC recursion, mode-exclusive charge/discharge, terminal SOC
    for b, unit in enumerate(layout.batteries):
        bat = unit.battery
        cap = bat.capacity_wh / KW
        p_max, p_min = unit.p_max / KW, unit.p_min / KW
        w = weights.for_unit(unit.name)
        prev = float(inputs.prev_modes.get(unit.name, 1))
        for i in range(N):
            dh, ch, mode = layout.p_dh(i, b), layout.p_ch(i, b), layout.delta_b(i, b)
            lb[dh], ub[dh] = 0.0, p_max
            lb[ch], ub[ch] = p_min, 0.0
            lb[mode], ub[mode] = 0.0, 1.0
            ineq.add({dh: 1.0, mode: -p_max}, 0.0)
            ineq.add({ch: -1.0, mode: -p_min}, -p_min)

            row = {layout.soc(i + 1, b): 1.0, dh: tau / (cap * bat.eta_dh), ch: tau * bat.eta_ch / cap}
            rhs = 0.0
            if i == 0:
                rhs = inputs.soc[unit.name]
            else:
                row[layout.soc(i, b)] = -1.0
            eq.add(row, rhs)
            lb[layout.soc(i + 1, b)], ub[layout.soc(i + 1, b)] = bat.soc_min, bat.soc_max

            h[dh, dh] += 2 * w.power
            h[ch, ch] += 2 * w.power
            switch_cost(i, mode, layout.delta_b(i - 1, b) if i else None, prev, w.switch)

        eq.add({layout.soc(N, b): 1.0, layout.slack(b): -1.0}, bat.soc_nominal)
        h[layout.slack(b), layout.slack(b)] += 2 * w.soc_slack

    # dispatchable units: P_min delta <= P_D <= P_max delta
    for d, unit in enumerate(layout.dispatchables):
        p_max, p_min = unit.p_max / KW, unit.p_min / KW
        w = weights.for_unit(unit.name)
        prev = float(inputs.prev_modes.get(unit.name, 1))
        for i in range(N):
            pd, mode = layout.p_d(i, d), layout.delta_d(i, d)
            lb[pd], ub[pd] = min(0.0, p_min), p_max
            lb[mode], ub[mode] = 0.0, 1.0
            ineq.add({pd: 1.0, mode: -p_max}, 0.0)
            ineq.add({pd: -1.0, mode: p_min}, 0.0)
            h[pd, pd] += 2 * w.power
            switch_cost(i, mode, layout.delta_d(i - 1, d) if i else None, prev, w.switch)

    # PV units: P_PV = P_nominal - dP, curtailment logic with epsilon
    pv_available = {unit.name: inputs.pv_available(unit.name) / KW for unit in layout.pvs}
    for p, unit in enumerate(layout.pvs):
        w = weights.for_unit(unit.name)
        prev = float(inputs.prev_modes.get(unit.name, 1))
        for i in range(N):
            dp, mode = layout.dp_pv(i, p), layout.delta_pv(i, p)
            avail = pv_available[unit.name][i]
            lb[dp], ub[dp] = 0.0, avail
            lb[mode], ub[mode] = 0.0, 1.0
            ineq.add({dp: -1.0, mode: -eps}, -eps)
            ineq.add({dp: 1.0, mode: avail}, avail)
            h[dp, dp] += 2 * w.power
            switch_cost(i, mode, layout.delta_pv(i - 1, p) if i else None, prev, w.switch)

    # power balance against the nominal-voltage load estimate
    load_kw = inputs.load_estimates() / KW
    for i in range(N):
        row: Dict[int, float] = {}
        for b in range(layout.nb):
            row[layout.p_dh(i, b)] = 1.0
            row[layout.p_ch(i, b)] = 1.0
        for d in range(layout.nd):
            row[layout.p_d(i, d)] = 1.0
        for p in range(layout.npv):
            row[layout.dp_pv(i, p)] = -1.0
        pv_total = sum(pv_available[u.name][i] for u in layout.pvs)
        eq.add(row, load_kw[i] - pv_total)

    for spec in extra_constraints:
        sense = spec.get("sense", "<=")
        terms = spec.get("terms", {})
        rhs = float(spec.get("rhs", 0.0))
        if sense not in ("<=", ">=", "=="):
            raise ConstructionError(f"unknown constraint sense {sense!r}")
        for i in range(N):
            coeffs = {layout.mode_index(i, name): float(c) for name, c in terms.items()}
            if sense == "==":
                eq.add(coeffs, rhs)
            elif sense == "<=":
                ineq.add(coeffs, rhs)
            else:
                ineq.add({j: -c for j, c in coeffs.items()}, -rhs)

    if freeze_from is not None:
        for i in range(max(0, freeze_from), N):
            for unit in layout.units():
                idx = layout.mode_index(i, unit.name)
                value = float(inputs.prev_modes.get(unit.name, 1))
                if unit.kind == DguKind.PV and pv_available[unit.name][i] < eps:
                    continue
                lb[idx] = ub[idx] = value

    a_eq, b_eq = eq.matrix()
    a_in, b_in = ineq.matrix()
    qp = QpProblem(H=h, f=f, A_eq=a_eq, b_eq=b_eq, A_in=a_in, b_in=b_in, lb=lb, ub=ub, constant=constant)
    logger.debug(
        "EMS problem: %d variables, %d binaries, %d equalities, %d inequalities",
        n, len(layout.binary_indices()), a_eq.shape[0], a_in.shape[0],
    )
    return MiqpProblem(qp=qp, binary_indices=layout.binary_indices())
