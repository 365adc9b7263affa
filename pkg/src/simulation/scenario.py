"""
Scenario - JSON scenario files, time profiles and per-instant measurements

A scenario describes the network, its units and loads, the time profiles that
drive them, the EMS weights and the controller clocks. Power-like fields are
given in the unit named by the "units" block and stored in W internally.
"""
from __future__ import annotations

import copy
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..ems.ems_model import EmsInputs, EmsWeights
from ..errors import ConstructionError, SchemaError
from ..network.topology import BatteryParams, DguKind, DguSpec, NetworkTopology, ZipLoad

logger = logging.getLogger(__name__)

POWER_UNITS = {"W": 1.0, "kW": 1000.0}
INTERP_MODES = ("step", "linear")


@dataclass
class Profile:
    """
    Dimensionless time series

    Either breakpoints (times, values) or a derived series: the values of
    another profile perturbed by seeded relative noise (forecasts).
    """

    name: str
    times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    interp: str = "step"
    period_s: Optional[float] = None
    noise: float = 0.0
    derive_from: Optional[str] = None
    csv: Optional[str] = None

    def base_value(self, t: float) -> float:
        """Breakpoint interpolation without noise"""
        if self.period_s:
            t = t % self.period_s
        if self.interp == "linear":
            return float(np.interp(t, self.times, self.values))
        idx = int(np.searchsorted(self.times, t, side="right")) - 1
        return float(self.values[max(idx, 0)])

    def last_time(self) -> float:
        return float(self.times[-1]) if self.times.size else 0.0


@dataclass(frozen=True)
class Clocks:
    ems_period_s: int = 900
    secondary_period_s: int = 180
    load_period_s: int = 60


@dataclass(frozen=True)
class LoadSpec:
    """Base ZIP load at a node; the profile scales its Ī and P̄ terms"""

    node: str
    base: ZipLoad
    profile: Optional[str] = None
    forecast_profile: Optional[str] = None


@dataclass
class Scenario:
    name: str
    topology: NetworkTopology
    dgus: List[DguSpec]
    loads: List[LoadSpec]
    profiles: Dict[str, Profile]
    weights: EmsWeights
    clocks: Clocks = field(default_factory=Clocks)
    horizon: int = 20
    v_nominal: float = 100.0
    v_min: float = 90.0
    v_max: float = 110.0
    duration_s: float = 86400.0
    seed: int = 0
    extra_constraints: List[Dict[str, Any]] = field(default_factory=list)
    initial_soc: Dict[str, float] = field(default_factory=dict)
    initial_modes: Dict[str, int] = field(default_factory=dict)
    epsilon: float = 1.0
    node_limit: int = 200
    freeze_from: Optional[int] = None
    power_unit: str = "W"
    source_dir: Optional[Path] = None

    @property
    def tau_h(self) -> float:
        return self.clocks.ems_period_s / 3600.0

    def dgu(self, name: str) -> DguSpec:
        for unit in self.dgus:
            if unit.name == name:
                return unit
        raise KeyError(name)

    def sample(self, name: Optional[str], t: float) -> float:
        """Profile value at time t (1.0 when no profile is set)"""
        if name is None:
            return 1.0
        profile = self.profiles[name]
        base = self.sample(profile.derive_from, t) if profile.derive_from else profile.base_value(t)
        if profile.noise:
            index = sorted(self.profiles).index(name)
            rng = np.random.default_rng([self.seed, int(round(t)), index])
            base *= 1.0 + profile.noise * float(rng.standard_normal())
        return base

    def load_at(self, t: float, forecast: bool = False) -> Dict[str, ZipLoad]:
        """ZIP load per node at time t; forecasts use the forecast profile when set"""
        result = {}
        for spec in self.loads:
            name = spec.forecast_profile if forecast and spec.forecast_profile else spec.profile
            scale = self.sample(name, t)
            result[spec.node] = ZipLoad(
                i_const=spec.base.i_const * scale,
                y_const=spec.base.y_const,
                p_const=spec.base.p_const * scale,
            )
        return result

    def pv_at(self, unit: DguSpec, t: float, forecast: bool = False) -> float:
        """Available PV power of a unit at time t (W)"""
        name = unit.pv_forecast_profile if forecast and unit.pv_forecast_profile else unit.pv_profile
        return max(0.0, unit.rated_power * self.sample(name, t))


@dataclass
class InstantState:
    """Loads, PV availability and controller state at one instant"""

    time_s: float
    loads: Dict[str, ZipLoad]
    pv_power: Dict[str, float]
    soc: Dict[str, float]
    modes: Dict[str, int]


# ========================================
# EMS INPUTS
# ========================================

def ems_inputs(scenario: Scenario, t: float, soc: Mapping[str, float], prev_modes: Mapping[str, int]) -> EmsInputs:
    """Measurements at t plus forecasts over the horizon, sampled at EMS steps"""
    N = scenario.horizon
    step_s = scenario.clocks.ems_period_s
    now = scenario.load_at(t)
    load_now = [now[spec.node] for spec in scenario.loads]
    i_fc = np.zeros((N, len(load_now)))
    p_fc = np.zeros((N, len(load_now)))
    for i in range(N):
        fc = scenario.load_at(t + i * step_s, forecast=True)
        for j, spec in enumerate(scenario.loads):
            i_fc[i, j] = fc[spec.node].i_const
            p_fc[i, j] = fc[spec.node].p_const
    pvs = [u for u in scenario.dgus if u.kind == DguKind.PV]
    return EmsInputs(
        soc={u.name: float(soc[u.name]) for u in scenario.dgus if u.kind == DguKind.BATTERY},
        pv_nominal={u.name: scenario.pv_at(u, t) for u in pvs},
        pv_forecast={u.name: np.array([scenario.pv_at(u, t + i * step_s, forecast=True) for i in range(N)]) for u in pvs},
        load_now=load_now,
        load_i_forecast=i_fc,
        load_p_forecast=p_fc,
        v_nominal=scenario.v_nominal,
        tau=scenario.tau_h,
        horizon=N,
        prev_modes=dict(prev_modes),
    )


def instant_state(scenario: Scenario, t: float) -> InstantState:
    """State at time t for one-shot commands; SOC and modes at their initial values"""
    return InstantState(
        time_s=t,
        loads=scenario.load_at(t),
        pv_power={u.name: scenario.pv_at(u, t) for u in scenario.dgus if u.kind == DguKind.PV},
        soc=initial_soc(scenario),
        modes=initial_modes(scenario),
    )


def initial_soc(scenario: Scenario) -> Dict[str, float]:
    return {
        u.name: float(scenario.initial_soc.get(u.name, u.battery.soc_nominal))
        for u in scenario.dgus if u.kind == DguKind.BATTERY
    }


def initial_modes(scenario: Scenario) -> Dict[str, int]:
    return {u.name: int(scenario.initial_modes.get(u.name, 1)) for u in scenario.dgus}


# ========================================
# VALIDATION
# ========================================

def _num(data: Mapping, key: str, path: str, errors: List[SchemaError], positive: bool = False,
         required: bool = True) -> None:
    if key not in data:
        if required:
            errors.append(SchemaError("missing field", field=f"{path}{key}"))
        return
    value = data[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        errors.append(SchemaError(f"expected a number, got {value!r}", field=f"{path}{key}"))
    elif positive and not value > 0:
        errors.append(SchemaError(f"must be > 0, got {value}", field=f"{path}{key}"))


def _validate_profile(name: str, spec: Any, names: Sequence[str], base_dir: Optional[Path],
                      errors: List[SchemaError]) -> Optional[float]:
    path = f"profiles.{name}"
    if not isinstance(spec, dict):
        errors.append(SchemaError("profile must be an object", field=path))
        return None
    if spec.get("interp", "step") not in INTERP_MODES:
        errors.append(SchemaError(f"interp must be one of {INTERP_MODES}", field=f"{path}.interp"))
    _num(spec, "noise", f"{path}.", errors, required=False)
    _num(spec, "period_s", f"{path}.", errors, positive=True, required=False)
    if "derive_from" in spec:
        if spec["derive_from"] not in names or spec["derive_from"] == name:
            errors.append(SchemaError(f"unknown profile {spec['derive_from']!r}", field=f"{path}.derive_from"))
        return None
    try:
        times, _ = _profile_points(spec, base_dir, path)
    except SchemaError as e:
        errors.append(e)
        return None
    return np.inf if spec.get("period_s") else float(times[-1])


def _profile_points(spec: Mapping, base_dir: Optional[Path], path: str) -> Tuple[np.ndarray, np.ndarray]:
    if "csv" in spec:
        csv_path = Path(spec["csv"])
        if base_dir is not None and not csv_path.is_absolute():
            csv_path = base_dir / csv_path
        try:
            frame = pd.read_csv(csv_path)
        except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
            raise SchemaError(f"cannot read profile CSV: {e}", field=f"{path}.csv") from e
        missing = {"time_s", "value"} - set(frame.columns)
        if missing:
            raise SchemaError(f"CSV lacks columns {sorted(missing)}", field=f"{path}.csv")
        times = frame["time_s"].to_numpy(dtype=float)
        values = frame["value"].to_numpy(dtype=float)
        point_path = f"{path}.csv"
    else:
        points = spec.get("points")
        if not isinstance(points, list) or not points:
            raise SchemaError("profile needs a non-empty 'points' list or a 'csv' file", field=f"{path}.points")
        try:
            arr = np.asarray(points, dtype=float).reshape(len(points), 2)
        except (TypeError, ValueError) as e:
            raise SchemaError("points must be [time_s, value] pairs", field=f"{path}.points") from e
        times, values = arr[:, 0], arr[:, 1]
        point_path = f"{path}.points"
    if times.size == 0:
        raise SchemaError("profile is empty", field=point_path)
    if np.any(np.diff(times) <= 0):
        raise SchemaError("profile times must be strictly increasing", field=point_path)
    if not np.all(np.isfinite(values)):
        raise SchemaError("profile values must be finite", field=point_path)
    return times, values


def validate_scenario(data: Any, base_dir: Optional[Path] = None) -> List[SchemaError]:
    """
    Check a scenario document

    Args:
        data: Parsed JSON document
        base_dir: Directory used to resolve relative CSV paths

    Returns:
        Every violation found, each with the dot-path of the offending field
    """
    errors: List[SchemaError] = []
    if not isinstance(data, dict):
        return [SchemaError("scenario must be a JSON object")]

    unit = data.get("units", {}).get("power", "W")
    if unit not in POWER_UNITS:
        errors.append(SchemaError(f"power unit must be one of {sorted(POWER_UNITS)}", field="units.power"))
    for key in ("v_nominal", "duration_s"):
        _num(data, key, "", errors, positive=key == "v_nominal")
    if isinstance(data.get("duration_s"), (int, float)) and data["duration_s"] < 0:
        errors.append(SchemaError("must be >= 0", field="duration_s"))
    if not isinstance(data.get("horizon", 20), int) or data.get("horizon", 20) < 1:
        errors.append(SchemaError("horizon must be an integer >= 1", field="horizon"))

    clocks = data.get("clocks", {})
    ems = clocks.get("ems_period_s", 900)
    sec = clocks.get("secondary_period_s", 180)
    lp = clocks.get("load_period_s", 60)
    if not all(isinstance(v, int) and v > 0 for v in (ems, sec, lp)):
        errors.append(SchemaError("clock periods must be positive integers (s)", field="clocks"))
    elif ems % sec or sec % lp:
        errors.append(SchemaError(
            "ems_period_s must be a multiple of secondary_period_s, itself a multiple of load_period_s",
            field="clocks",
        ))

    nodes = data.get("nodes", {})
    dgu_nodes = [str(n) for n in nodes.get("dgu", [])]
    load_nodes = [str(n) for n in nodes.get("load", [])]
    if not dgu_nodes:
        errors.append(SchemaError("at least one DGU node is required", field="nodes.dgu"))
    edges = data.get("edges")
    if not isinstance(edges, list) or not edges:
        errors.append(SchemaError("edge list is empty", field="edges"))
    else:
        for k, edge in enumerate(edges):
            if not isinstance(edge, list) or len(edge) != 3:
                errors.append(SchemaError("edge must be [from, to, conductance_S]", field=f"edges[{k}]"))
        if not any(e.field.startswith("edges[") for e in errors):
            try:
                NetworkTopology.build(dgu_nodes, load_nodes, edges)
            except ConstructionError as e:
                errors.append(SchemaError(str(e), field="edges"))

    profiles = data.get("profiles", {})
    if not isinstance(profiles, dict):
        errors.append(SchemaError("profiles must be an object", field="profiles"))
        profiles = {}
    coverage = {name: _validate_profile(name, spec, list(profiles), base_dir, errors) for name, spec in profiles.items()}

    def check_ref(name: Any, path: str):
        if name is not None and name not in profiles:
            errors.append(SchemaError(f"unknown profile {name!r}", field=path))

    names = set()
    for k, unit_data in enumerate(data.get("dgus", [])):
        path = f"dgus[{k}]"
        name = unit_data.get("name")
        if not name or name in names:
            errors.append(SchemaError("DGU names must be unique and non-empty", field=f"{path}.name"))
        names.add(name)
        if str(unit_data.get("node")) not in dgu_nodes:
            errors.append(SchemaError("DGU must sit on a node listed in nodes.dgu", field=f"{path}.node"))
        if unit_data.get("kind") not in [k.value for k in DguKind]:
            errors.append(SchemaError("kind must be dispatchable, battery or pv", field=f"{path}.kind"))
        for key in ("p_min", "p_max", "r_filter"):
            _num(unit_data, key, f"{path}.", errors, positive=key == "r_filter")
        if unit_data.get("kind") == "battery":
            battery = unit_data.get("battery")
            if not isinstance(battery, dict):
                errors.append(SchemaError("battery block required", field=f"{path}.battery"))
            else:
                _num(battery, "capacity", f"{path}.battery.", errors, positive=True)
        if unit_data.get("kind") == "pv":
            check_ref(unit_data.get("profile"), f"{path}.profile")
            check_ref(unit_data.get("forecast_profile"), f"{path}.forecast_profile")
    if sorted(str(u.get("node")) for u in data.get("dgus", [])) != sorted(dgu_nodes):
        errors.append(SchemaError("every DGU node needs exactly one unit", field="dgus"))

    for k, load in enumerate(data.get("loads", [])):
        path = f"loads[{k}]"
        if str(load.get("node")) not in load_nodes:
            errors.append(SchemaError("load must sit on a node listed in nodes.load", field=f"{path}.node"))
        for key in ("i", "y", "p"):
            _num(load, key, f"{path}.", errors, required=False)
        if isinstance(load.get("y"), (int, float)) and load["y"] < 0:
            errors.append(SchemaError("load conductance must be >= 0", field=f"{path}.y"))
        check_ref(load.get("profile"), f"{path}.profile")
        check_ref(load.get("forecast_profile"), f"{path}.forecast_profile")

    for name in data.get("weights", {}):
        if name not in names:
            errors.append(SchemaError(f"weights for unknown unit {name!r}", field=f"weights.{name}"))
    for k, row in enumerate(data.get("extra_constraints", [])):
        for name in row.get("terms", {}):
            if name not in names:
                errors.append(SchemaError(f"unknown unit {name!r}", field=f"extra_constraints[{k}].terms"))
        if row.get("sense", "<=") not in ("<=", ">=", "=="):
            errors.append(SchemaError("sense must be <=, >= or ==", field=f"extra_constraints[{k}].sense"))

    if isinstance(ems, int) and isinstance(data.get("duration_s"), (int, float)):
        needed = float(data["duration_s"]) + int(data.get("horizon", 20)) * ems
        for name, last in coverage.items():
            if last is not None and last < needed - ems:
                errors.append(SchemaError(
                    f"profile ends at {last:.0f} s but the run needs {needed:.0f} s (duration + horizon)",
                    field=f"profiles.{name}",
                ))
    return errors


# ========================================
# LOAD / SAVE
# ========================================

def parse_scenario(data: Mapping[str, Any], base_dir: Optional[Path] = None) -> Scenario:
    """Build a Scenario from a validated document, converting power fields to W"""
    errors = validate_scenario(data, base_dir)
    if errors:
        raise errors[0]
    unit = data.get("units", {}).get("power", "W")
    scale = POWER_UNITS[unit]
    nodes = data["nodes"]
    topology = NetworkTopology.build(nodes["dgu"], nodes.get("load", []), data["edges"])

    dgus = []
    initial_soc = {}
    for u in data["dgus"]:
        battery = None
        if u["kind"] == "battery":
            b = u["battery"]
            battery = BatteryParams(
                capacity_wh=float(b["capacity"]) * scale,
                eta_ch=float(b.get("eta_ch", 0.9)),
                eta_dh=float(b.get("eta_dh", 0.9)),
                soc_min=float(b.get("soc_min", 0.1)),
                soc_max=float(b.get("soc_max", 0.9)),
                soc_nominal=float(b.get("soc_nominal", 0.5)),
            )
            initial_soc[u["name"]] = float(b.get("soc_initial", battery.soc_nominal))
        try:
            dgus.append(DguSpec(
                name=u["name"],
                node=str(u["node"]),
                kind=DguKind(u["kind"]),
                p_min=float(u["p_min"]) * scale,
                p_max=float(u["p_max"]) * scale,
                r_filter=float(u["r_filter"]),
                battery=battery,
                pv_profile=u.get("profile"),
                pv_forecast_profile=u.get("forecast_profile"),
                rated_power=float(u.get("rated_power", 1.0)) * scale,
            ))
        except ConstructionError as e:
            raise SchemaError(str(e), field=f"dgus.{u['name']}") from e

    loads = [
        LoadSpec(
            node=str(ld["node"]),
            base=ZipLoad(
                i_const=float(ld.get("i", 0.0)),
                y_const=float(ld.get("y", 0.0)),
                p_const=float(ld.get("p", 0.0)) * scale,
            ),
            profile=ld.get("profile"),
            forecast_profile=ld.get("forecast_profile"),
        )
        for ld in data.get("loads", [])
    ]

    profiles = {}
    for name, spec in data.get("profiles", {}).items():
        profile = Profile(
            name=name,
            interp=spec.get("interp", "step"),
            period_s=spec.get("period_s"),
            noise=float(spec.get("noise", 0.0)),
            derive_from=spec.get("derive_from"),
            csv=spec.get("csv"),
        )
        if profile.derive_from is None:
            profile.times, profile.values = _profile_points(spec, base_dir, f"profiles.{name}")
        profiles[name] = profile

    clocks = data.get("clocks", {})
    ems = data.get("ems", {})
    return Scenario(
        name=data.get("name", "scenario"),
        topology=topology,
        dgus=dgus,
        loads=loads,
        profiles=profiles,
        weights=EmsWeights.from_dict(data.get("weights", {})),
        clocks=Clocks(
            ems_period_s=int(clocks.get("ems_period_s", 900)),
            secondary_period_s=int(clocks.get("secondary_period_s", 180)),
            load_period_s=int(clocks.get("load_period_s", 60)),
        ),
        horizon=int(data.get("horizon", 20)),
        v_nominal=float(data["v_nominal"]),
        v_min=float(data.get("v_min", 0.9 * data["v_nominal"])),
        v_max=float(data.get("v_max", 1.1 * data["v_nominal"])),
        duration_s=float(data["duration_s"]),
        seed=int(data.get("seed", 0)),
        extra_constraints=copy.deepcopy(data.get("extra_constraints", [])),
        initial_soc=initial_soc,
        initial_modes={k: int(v) for k, v in data.get("initial_modes", {}).items()},
        epsilon=float(ems.get("epsilon_w", 1.0)),
        node_limit=int(ems.get("node_limit", 200)),
        freeze_from=ems.get("freeze_from"),
        power_unit=unit,
        source_dir=base_dir,
    )


def read_document(path) -> Dict[str, Any]:
    """Parse a scenario JSON file; syntax errors carry the line number"""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise SchemaError(f"cannot read scenario: {e}") from e
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError(f"invalid JSON: {e.msg}", line=e.lineno) from e


def load_scenario(path, overrides: Sequence[str] = ()) -> Scenario:
    """Read, override, validate and build a scenario file"""
    path = Path(path)
    data = apply_overrides(read_document(path), overrides)
    scenario = parse_scenario(data, base_dir=path.parent)
    logger.info("loaded scenario %s: %d DGUs, %d loads, %d edges",
                scenario.name, len(scenario.dgus), len(scenario.loads), len(scenario.topology.edges))
    return scenario


def scenario_to_dict(scenario: Scenario) -> Dict[str, Any]:
    """Inverse of parse_scenario, powers converted back to the scenario's unit"""
    scale = POWER_UNITS[scenario.power_unit]
    topo = scenario.topology
    dgus = []
    for u in scenario.dgus:
        entry: Dict[str, Any] = {
            "name": u.name, "node": u.node, "kind": u.kind.value,
            "p_min": u.p_min / scale, "p_max": u.p_max / scale, "r_filter": u.r_filter,
        }
        if u.battery is not None:
            b = u.battery
            entry["battery"] = {
                "capacity": b.capacity_wh / scale, "eta_ch": b.eta_ch, "eta_dh": b.eta_dh,
                "soc_min": b.soc_min, "soc_max": b.soc_max, "soc_nominal": b.soc_nominal,
                "soc_initial": scenario.initial_soc.get(u.name, b.soc_nominal),
            }
        if u.kind == DguKind.PV:
            entry["rated_power"] = u.rated_power / scale
            entry["profile"] = u.pv_profile
            if u.pv_forecast_profile:
                entry["forecast_profile"] = u.pv_forecast_profile
        dgus.append(entry)

    loads = []
    for spec in scenario.loads:
        entry = {"node": spec.node, "i": spec.base.i_const, "y": spec.base.y_const, "p": spec.base.p_const / scale}
        if spec.profile:
            entry["profile"] = spec.profile
        if spec.forecast_profile:
            entry["forecast_profile"] = spec.forecast_profile
        loads.append(entry)

    profiles = {}
    for name, p in scenario.profiles.items():
        entry = {"interp": p.interp}
        if p.derive_from:
            entry["derive_from"] = p.derive_from
        elif p.csv:
            entry["csv"] = p.csv
        else:
            entry["points"] = [[float(t), float(v)] for t, v in zip(p.times, p.values)]
        if p.period_s:
            entry["period_s"] = p.period_s
        if p.noise:
            entry["noise"] = p.noise
        profiles[name] = entry

    return {
        "name": scenario.name,
        "units": {"power": scenario.power_unit},
        "v_nominal": scenario.v_nominal,
        "v_min": scenario.v_min,
        "v_max": scenario.v_max,
        "duration_s": scenario.duration_s,
        "horizon": scenario.horizon,
        "seed": scenario.seed,
        "clocks": {
            "ems_period_s": scenario.clocks.ems_period_s,
            "secondary_period_s": scenario.clocks.secondary_period_s,
            "load_period_s": scenario.clocks.load_period_s,
        },
        "nodes": {"dgu": list(topo.dgu_nodes), "load": list(topo.load_nodes)},
        "edges": [[a, b, g] for a, b, g in topo.edges],
        "dgus": dgus,
        "loads": loads,
        "profiles": profiles,
        "weights": scenario.weights.to_dict(),
        "extra_constraints": copy.deepcopy(scenario.extra_constraints),
        "initial_modes": dict(scenario.initial_modes),
        "ems": {"epsilon_w": scenario.epsilon, "node_limit": scenario.node_limit, "freeze_from": scenario.freeze_from},
    }


def save_scenario(scenario: Scenario, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(scenario_to_dict(scenario), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


# ========================================
# OVERRIDES
# ========================================

def apply_overrides(data: Dict[str, Any], overrides: Sequence[str]) -> Dict[str, Any]:
    """
    Apply dot-path assignments such as "horizon=8" or "dgus.0.p_max=70"

    Values are parsed as JSON when possible, otherwise kept as strings.
    """
    data = copy.deepcopy(data)
    for item in overrides:
        if "=" not in item:
            raise SchemaError(f"override must look like key=value, got {item!r}", field=item)
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        parts = key.strip().split(".")
        target: Any = data
        for depth, part in enumerate(parts):
            last = depth == len(parts) - 1
            if isinstance(target, list):
                try:
                    index = int(part)
                    if last:
                        target[index] = value
                    else:
                        target = target[index]
                except (ValueError, IndexError) as e:
                    raise SchemaError(f"bad list index {part!r}", field=key) from e
            elif isinstance(target, dict):
                if last:
                    target[part] = value
                else:
                    target = target.setdefault(part, {})
            else:
                raise SchemaError("cannot descend into a scalar", field=key)
    return data
