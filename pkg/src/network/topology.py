"""
Network Topology - Graph, node partition, ZIP loads and DGU specs of a DC microgrid
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from enum import Enum
from functools import cached_property
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from ..errors import ConstructionError, TopologyError

logger = logging.getLogger(__name__)

Edge = Tuple[str, str, float]


class DguKind(str, Enum):
    DISPATCHABLE = "dispatchable"
    BATTERY = "battery"
    PV = "pv"


@dataclass(frozen=True)
class ZipLoad:
    """Constant-current (A), constant-conductance (S) and constant-power (W) load triple"""

    i_const: float = 0.0
    y_const: float = 0.0
    p_const: float = 0.0

    def __post_init__(self):
        if self.y_const < 0:
            raise ConstructionError(f"load conductance must be >= 0, got {self.y_const}")

    def power(self, voltage: float) -> float:
        """Power absorbed at the given voltage"""
        return self.i_const * voltage + self.y_const * voltage ** 2 + self.p_const


@dataclass(frozen=True)
class BatteryParams:
    capacity_wh: float
    eta_ch: float = 0.9
    eta_dh: float = 0.9
    soc_min: float = 0.1
    soc_max: float = 0.9
    soc_nominal: float = 0.5

    def __post_init__(self):
        if self.capacity_wh <= 0:
            raise ConstructionError("battery capacity must be > 0")
        for name in ("eta_ch", "eta_dh"):
            eta = getattr(self, name)
            if not 0 < eta <= 1:
                raise ConstructionError(f"{name} must be in (0, 1], got {eta}")
        if not 0 <= self.soc_min <= self.soc_max <= 1:
            raise ConstructionError("battery SOC bounds must satisfy 0 <= soc_min <= soc_max <= 1")


@dataclass(frozen=True)
class DguSpec:
    """
    Typed distributed generation unit

    Args:
        name: Unit id used by the EMS and the logs (e.g. "D1", "B3", "PV6")
        node: Network node the unit is connected to
        kind: Dispatchable, battery or PV
        p_min: Minimum power (W); negative for batteries (charging)
        p_max: Maximum power (W)
        r_filter: Filter resistance (ohm)
        battery: Battery parameters, present iff kind is battery
        pv_profile: Name of the nominal PV profile, PV units only
        pv_forecast_profile: Optional separate forecast profile
        rated_power: Multiplier applied to the PV profile (W)
    """

    name: str
    node: str
    kind: DguKind
    p_min: float
    p_max: float
    r_filter: float
    battery: Optional[BatteryParams] = None
    pv_profile: Optional[str] = None
    pv_forecast_profile: Optional[str] = None
    rated_power: float = 1.0

    def __post_init__(self):
        if self.p_min > self.p_max:
            raise ConstructionError(f"{self.name}: p_min > p_max")
        if self.r_filter <= 0:
            raise ConstructionError(f"{self.name}: filter resistance must be > 0")
        is_battery = self.kind == DguKind.BATTERY
        if is_battery != (self.battery is not None):
            raise ConstructionError(f"{self.name}: battery parameters present iff kind is battery")
        if is_battery and not self.p_min < 0 < self.p_max:
            raise ConstructionError(f"{self.name}: battery limits must satisfy p_min < 0 < p_max")


@dataclass(frozen=True)
class NetworkTopology:
    """
    Connected DC network with nodes ordered DGUs-first

    Use NetworkTopology.build() to construct; edits return new instances.
    MPPT PV nodes live in load_nodes and carry their injection in pv_injections.
    """

    dgu_nodes: Tuple[str, ...]
    load_nodes: Tuple[str, ...]
    edges: Tuple[Edge, ...]
    pv_injections: Tuple[Tuple[str, ZipLoad], ...] = ()
    removed_nodes: Tuple[str, ...] = ()

    @classmethod
    def build(
        cls,
        dgu_nodes: Sequence,
        load_nodes: Sequence,
        edges: Iterable[Sequence],
    ) -> "NetworkTopology":
        topology = cls(
            dgu_nodes=tuple(str(n) for n in dgu_nodes),
            load_nodes=tuple(str(n) for n in load_nodes),
            edges=tuple((str(a), str(b), float(g)) for a, b, g in edges),
        )
        topology.validate()
        return topology

    @property
    def nodes(self) -> Tuple[str, ...]:
        return self.dgu_nodes + self.load_nodes

    @property
    def n(self) -> int:
        return len(self.dgu_nodes)

    @property
    def m(self) -> int:
        return len(self.load_nodes)

    @cached_property
    def index(self) -> Dict[str, int]:
        return {node: i for i, node in enumerate(self.nodes)}

    @cached_property
    def incidence(self) -> np.ndarray:
        """Incidence matrix B with +1 at the first and -1 at the second endpoint of each edge"""
        b = np.zeros((len(self.nodes), len(self.edges)))
        for k, (a, c, _) in enumerate(self.edges):
            b[self.index[a], k] = 1.0
            b[self.index[c], k] = -1.0
        return b

    @property
    def conductances(self) -> np.ndarray:
        return np.array([g for _, _, g in self.edges], dtype=float)

    def graph(self) -> nx.MultiGraph:
        g = nx.MultiGraph()
        g.add_nodes_from(self.nodes)
        g.add_edges_from((a, b, {"conductance": c}) for a, b, c in self.edges)
        return g

    def is_connected(self) -> bool:
        return bool(self.nodes) and nx.is_connected(self.graph())

    def injection_at(self, node: str) -> Optional[ZipLoad]:
        return dict(self.pv_injections).get(node)

    def validate(self):
        """Check node partition, edge list and connectivity; raises ConstructionError"""
        if not self.nodes:
            raise ConstructionError("network has no nodes")
        if len(set(self.nodes)) != len(self.nodes):
            overlap = sorted(set(self.dgu_nodes) & set(self.load_nodes))
            raise ConstructionError(f"duplicate or overlapping node ids: {overlap or 'duplicates'}")
        known = set(self.nodes)
        for a, b, g in self.edges:
            if a not in known or b not in known:
                raise ConstructionError(f"edge ({a}, {b}) references an unknown node")
            if a == b:
                raise ConstructionError(f"self-loop at node {a}")
            if not g > 0:
                raise ConstructionError(f"edge ({a}, {b}) conductance must be > 0, got {g}")
        if not self.is_connected():
            components = [sorted(c) for c in nx.connected_components(self.graph())]
            raise ConstructionError(f"network graph is not connected: {components}")


def apply_decisions(
    topology: NetworkTopology,
    modes: Mapping[str, int],
    dgus: Sequence[DguSpec],
    pv_power: Optional[Mapping[str, float]] = None,
) -> NetworkTopology:
    """
    Apply EMS operation modes to a topology

    Args:
        topology: Topology with every DGU voltage-controlled
        modes: Mode per DGU name (1 = ON / MPPT, 0 = OFF / curtailing)
        dgus: DGU specs, used for kind and node lookup
        pv_power: Nominal PV power per PV name (W), injected by MPPT units

    Returns:
        New topology. OFF dispatchables are removed with their incident edges,
        MPPT PV nodes become load nodes with a negative constant-power load.
    """
    pv_power = pv_power or {}
    removed: List[str] = []
    mppt: Dict[str, ZipLoad] = {}
    for dgu in dgus:
        if dgu.node not in topology.dgu_nodes:
            continue
        mode = int(modes.get(dgu.name, 1))
        if dgu.kind == DguKind.DISPATCHABLE and mode == 0:
            removed.append(dgu.node)
        elif dgu.kind == DguKind.PV and mode == 1:
            mppt[dgu.node] = ZipLoad(p_const=-float(pv_power.get(dgu.name, 0.0)))

    gone = set(removed)
    edited = replace(
        topology,
        dgu_nodes=tuple(n for n in topology.dgu_nodes if n not in gone and n not in mppt),
        load_nodes=topology.load_nodes + tuple(n for n in topology.dgu_nodes if n in mppt),
        edges=tuple(e for e in topology.edges if e[0] not in gone and e[1] not in gone),
        pv_injections=topology.pv_injections + tuple(mppt.items()),
        removed_nodes=topology.removed_nodes + tuple(removed),
    )
    if not edited.is_connected():
        components = [sorted(c) for c in nx.connected_components(edited.graph())]
        raise TopologyError(f"removing {removed} splits the network into {components}")
    if removed or mppt:
        logger.debug("applied decisions: removed=%s mppt=%s", removed, sorted(mppt))
    return edited


def load_vector(topology: NetworkTopology, loads: Mapping[str, ZipLoad]) -> List[ZipLoad]:
    """Loads in load-node order; MPPT nodes fall back to their recorded injection, absent nodes get a zero load"""
    injections = dict(topology.pv_injections)
    return [loads.get(node) or injections.get(node) or ZipLoad() for node in topology.load_nodes]
