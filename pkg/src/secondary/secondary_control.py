"""
Secondary Control - Translate EMS power references into DGU voltage references

SPF minimizes ||P_G - P̄_G||_2 subject to the DGU power balance f_G = 0 and the
load current balance f_L = 0; SCPF adds voltage and power boxes. Both are solved
by SQP in per-unit scaling (V / V°, P / V°², so admittances stay in siemens),
from a ladder of starting points, and finished by a Newton load flow at the
returned V_G so that (V_L, P_G) are the physical response to the references.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from ..ems.ems_planner import EmsPlan
from ..errors import ConstructionError, ConvergenceError, DcmgError, InfeasibleError, SingularMatrixError
from ..network.admittance import AdmittancePartition, build_admittance
from ..network.topology import DguKind, DguSpec, NetworkTopology, ZipLoad, load_vector
from ..powerflow.certificates import UniquenessReport, feasibility_alpha, uniqueness_check
from ..powerflow.load_flow import LoadFlowOptions, solve_load_flow_newton
from ..powerflow.residuals import LoadSnapshot, dgu_currents, dgu_powers, residual_f_g, residual_f_l
from .sqp_solver import NlpProblem, SqpOptions, solve_sqp

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class SecondaryRequest:
    """
    One secondary-control problem on a fixed topology

    Args:
        p_ref: Power references P̄_G per voltage-controlled DGU (W)
        loads: Load snapshot, MPPT PV nodes included as negative constant-power loads
        partition: Admittance partition of the current topology
        r_filter: Filter resistances per DGU (ohm)
        v_bounds: [V_min, V_max] per node, DGUs first, shape (n + m, 2) (V)
        p_bounds: [P_min, P_max] per DGU, shape (n, 2) (W)
        v_nominal: Nominal voltage V° (V)
        warm_start: DGU voltages of a previous solution, tried after the flat start
    """

    p_ref: np.ndarray
    loads: LoadSnapshot
    partition: AdmittancePartition
    r_filter: np.ndarray
    v_bounds: Optional[np.ndarray] = None
    p_bounds: Optional[np.ndarray] = None
    v_nominal: float = 100.0
    warm_start: Optional[np.ndarray] = None

    def __post_init__(self):
        n, m = self.partition.n, self.partition.m
        if n == 0:
            raise ConstructionError("secondary control needs at least one voltage-controlled DGU")
        self.p_ref = np.asarray(self.p_ref, dtype=float).reshape(-1)
        self.r_filter = np.broadcast_to(np.asarray(self.r_filter, dtype=float), (n,)).copy()
        if self.p_ref.size != n:
            raise ConstructionError(f"p_ref has {self.p_ref.size} entries, expected {n}")
        if self.loads.m != m:
            raise ConstructionError(f"load snapshot has {self.loads.m} entries, expected {m}")
        if self.v_bounds is not None:
            self.v_bounds = np.asarray(self.v_bounds, dtype=float).reshape(n + m, 2)
            if np.any(self.v_bounds[:, 0] > self.v_bounds[:, 1]) or np.any(self.v_bounds[:, 0] <= 0):
                raise ConstructionError("voltage bounds must satisfy 0 < V_min <= V_max")
        if self.p_bounds is not None:
            self.p_bounds = np.asarray(self.p_bounds, dtype=float).reshape(n, 2)
            if np.any(self.p_bounds[:, 0] > self.p_bounds[:, 1]):
                raise ConstructionError("power bounds must satisfy P_min <= P_max")
        if self.v_nominal <= 0:
            raise ConstructionError("v_nominal must be > 0")


@dataclass
class NecessaryCondition:
    holds: bool
    margin: float

    def to_dict(self) -> Dict[str, Any]:
        return {"holds": self.holds, "margin_w": self.margin}


@dataclass(eq=False)
class SecondaryResult:
    """Voltage references and the operating point they produce"""

    v_g_star: np.ndarray
    v_l_star: np.ndarray
    p_g_star: np.ndarray
    cost: float
    exact: bool
    iterations: int = 0
    start: str = "flat"
    kkt_residual: float = 0.0
    bound_violation: float = 0.0
    references: Dict[str, float] = field(default_factory=dict)
    uniqueness: Optional[UniquenessReport] = None
    necessary: Optional[NecessaryCondition] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "v_g_star": [float(v) for v in self.v_g_star],
            "v_l_star": [float(v) for v in self.v_l_star],
            "p_g_star": [float(p) for p in self.p_g_star],
            "cost_w": float(self.cost),
            "exact": self.exact,
            "iterations": self.iterations,
            "start": self.start,
            "kkt_residual": float(self.kkt_residual),
            "bound_violation": float(self.bound_violation),
            "references_v": dict(self.references),
            "uniqueness": self.uniqueness.to_dict() if self.uniqueness else None,
            "necessary": self.necessary.to_dict() if self.necessary else None,
        }


@dataclass
class SecondaryOptions:
    """
    Args:
        sqp: SQP settings
        load_flow: Settings of the final Newton load flow
        exact_tol: Cost below which tracking is declared exact (W)
        spf_v_box: Voltage box of SPF as multiples of V°, keeps iterates away from zero
        bound_tol: Accepted bound violation after the final load flow (V, W)
    """

    sqp: SqpOptions = field(default_factory=SqpOptions)
    load_flow: LoadFlowOptions = field(default_factory=LoadFlowOptions)
    exact_tol: float = 1e-3
    spf_v_box: Tuple[float, float] = (0.05, 10.0)
    bound_tol: float = 1e-6


class PowerFlowNlp(NlpProblem):
    """SPF / SCPF in per-unit variables z = [V_G, V_L, P_G] / [V°, V°, V°²]"""

    def __init__(self, request: SecondaryRequest, v_lower: np.ndarray, v_upper: np.ndarray,
                 p_lower: np.ndarray, p_upper: np.ndarray):
        self.request = request
        part = request.partition
        self.n, self.m = part.n, part.m
        self.v0 = request.v_nominal
        self.s_base = self.v0 ** 2
        self.i_base = self.s_base / self.v0
        self.k = np.hstack([part.y_gg, part.y_gl])
        self.p_bar = request.p_ref / self.s_base
        self.lb = np.concatenate([v_lower / self.v0, p_lower / self.s_base])
        self.ub = np.concatenate([v_upper / self.v0, p_upper / self.s_base])
        self.z_scale = np.concatenate([np.full(self.n + self.m, self.v0), np.full(self.n, self.s_base)])
        self.c_scale = np.concatenate([np.full(self.n, 1.0 / self.s_base), np.full(self.m, 1.0 / self.i_base)])

    def split(self, z: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """SI voltages of DGUs and loads, and SI DGU powers"""
        n, m = self.n, self.m
        si = z * self.z_scale
        return si[:n], si[n:n + m], si[n + m:]

    def pack(self, v_g, v_l, p_g) -> np.ndarray:
        return np.concatenate([v_g, v_l, p_g]) / self.z_scale

    def objective(self, z):
        d = z[self.n + self.m:] - self.p_bar
        return 0.5 * float(d @ d)

    def gradient(self, z):
        g = np.zeros_like(z)
        g[self.n + self.m:] = z[self.n + self.m:] - self.p_bar
        return g

    def constraints(self, z):
        v_g, v_l, p_g = self.split(z)
        part, req = self.request.partition, self.request
        c = np.concatenate([
            residual_f_g(v_g, v_l, p_g, part, req.r_filter),
            residual_f_l(v_g, v_l, req.loads, part),
        ])
        return c * self.c_scale

    def jacobian(self, z):
        n, m = self.n, self.m
        v_g, v_l, _ = self.split(z)
        part, req = self.request.partition, self.request
        i_g = dgu_currents(v_g, v_l, part)
        jac = np.zeros((n + m, 2 * n + m))
        jac[:n, :n] += np.diag(i_g)
        jac[:n, :n + m] += (v_g + 2.0 * req.r_filter * i_g)[:, None] * self.k
        jac[:n, n + m:] = -np.eye(n)
        jac[n:, :n] = part.y_lg
        jac[n:, n:n + m] = part.y_ll + np.diag(req.loads.y_l - req.loads.p_bar / v_l ** 2)
        return self.c_scale[:, None] * jac * self.z_scale[None, :]

    def lagrangian_hessian(self, z, lam):
        n, m = self.n, self.m
        _, v_l, _ = self.split(z)
        lam_si = lam * self.c_scale
        lam_g, lam_l = lam_si[:n], lam_si[n:]
        size = n + m
        e = np.hstack([np.eye(n), np.zeros((n, m))])
        hv = e.T @ (lam_g[:, None] * self.k)
        hv = hv + hv.T + 2.0 * self.k.T @ ((lam_g * self.request.r_filter)[:, None] * self.k)
        hv[n:, n:] += np.diag(lam_l * 2.0 * self.request.loads.p_bar / v_l ** 3)
        hess = np.zeros((2 * n + m, 2 * n + m))
        hess[:size, :size] = self.v0 ** 2 * hv
        hess[size:, size:] = np.eye(n)
        return hess


def _start_points(request: SecondaryRequest) -> List[Tuple[str, np.ndarray]]:
    n = request.partition.n
    starts = [("flat", np.full(n, request.v_nominal))]
    if request.warm_start is not None and len(request.warm_start) == n:
        starts.append(("warm", np.asarray(request.warm_start, dtype=float)))
    try:
        _, witness = feasibility_alpha(request.loads, request.partition, alpha_seed=request.v_nominal)
        starts.append(("alpha", witness))
    except DcmgError as e:
        logger.debug("no feasibility witness for the start ladder: %s", e)
    return starts


def _initial_point(nlp: PowerFlowNlp, v_g: np.ndarray, lf: LoadFlowOptions) -> np.ndarray:
    req = nlp.request
    lo, hi = nlp.lb * nlp.z_scale, nlp.ub * nlp.z_scale
    n, m = nlp.n, nlp.m
    v_g = np.clip(v_g, lo[:n], hi[:n])
    try:
        v_l = solve_load_flow_newton(v_g, req.loads, req.partition, lf, v_init=np.full(m, float(np.mean(v_g))))
    except DcmgError:
        v_l = np.full(m, float(np.mean(v_g)))
    v_l = np.clip(v_l, lo[n:n + m], hi[n:n + m])
    p_g = dgu_powers(v_g, v_l, req.partition, req.r_filter)
    return np.clip(nlp.pack(v_g, v_l, p_g), nlp.lb, nlp.ub)


def _solve(request: SecondaryRequest, constrained: bool, opts: SecondaryOptions) -> SecondaryResult:
    n, m = request.partition.n, request.partition.m
    v0 = request.v_nominal
    if constrained and request.v_bounds is not None:
        v_lower, v_upper = request.v_bounds[:, 0], request.v_bounds[:, 1]
    else:
        v_lower = np.full(n + m, opts.spf_v_box[0] * v0)
        v_upper = np.full(n + m, opts.spf_v_box[1] * v0)
    if constrained and request.p_bounds is not None:
        p_lower, p_upper = request.p_bounds[:, 0], request.p_bounds[:, 1]
    else:
        p_lower, p_upper = np.full(n, -np.inf), np.full(n, np.inf)
    nlp = PowerFlowNlp(request, v_lower, v_upper, p_lower, p_upper)

    failures = []
    for start, v_g0 in _start_points(request):
        z0 = _initial_point(nlp, v_g0, opts.load_flow)
        try:
            sqp = solve_sqp(nlp, z0, opts.sqp)
        except DcmgError as e:
            failures.append(f"{start}: {e}")
            continue
        if not sqp.converged:
            failures.append(f"{start}: {sqp.message}")
            continue

        v_g, v_l_guess, _ = nlp.split(sqp.z)
        try:
            v_l = solve_load_flow_newton(v_g, request.loads, request.partition, opts.load_flow, v_init=v_l_guess)
        except DcmgError as e:
            failures.append(f"{start}: final load flow failed: {e}")
            continue
        p_g = dgu_powers(v_g, v_l, request.partition, request.r_filter)

        violation = max(
            float(np.max(np.concatenate([v_lower - np.concatenate([v_g, v_l]), [0.0]]))),
            float(np.max(np.concatenate([np.concatenate([v_g, v_l]) - v_upper, [0.0]]))),
            float(np.max(np.concatenate([p_lower - p_g, [0.0]]))),
            float(np.max(np.concatenate([p_g - p_upper, [0.0]]))),
        )
        if constrained and violation > opts.bound_tol:
            failures.append(f"{start}: bounds violated by {violation:.3e}")
            continue

        cost = float(np.linalg.norm(p_g - request.p_ref))
        logger.debug("%s solved from %s start in %d iterations, cost %.3e W",
                     "SCPF" if constrained else "SPF", start, sqp.iterations, cost)
        return SecondaryResult(
            v_g_star=v_g,
            v_l_star=v_l,
            p_g_star=p_g,
            cost=cost,
            exact=cost <= opts.exact_tol,
            iterations=sqp.iterations,
            start=start,
            kkt_residual=sqp.kkt_residual,
            bound_violation=violation,
        )

    detail = "; ".join(failures)
    if constrained:
        raise InfeasibleError(f"SCPF found no feasible point from any start ({detail})")
    raise ConvergenceError(f"SPF did not converge from any start ({detail})")


def solve_spf(request: SecondaryRequest, opts: Optional[SecondaryOptions] = None) -> SecondaryResult:
    """
    Secondary power flow: min ||P_G - P̄_G||_2 s.t. f_G = 0, f_L = 0

    Bounds in the request are ignored; only a loose voltage box keeps iterates positive.
    Raises ConvergenceError when every start fails.
    """
    return _solve(request, constrained=False, opts=opts or SecondaryOptions())


def solve_scpf(request: SecondaryRequest, opts: Optional[SecondaryOptions] = None) -> SecondaryResult:
    """
    Secondary constrained power flow: SPF plus voltage and power boxes

    Raises InfeasibleError when no start reaches a feasible stationary point.
    """
    return _solve(request, constrained=True, opts=opts or SecondaryOptions())


def necessary_condition(p_ref, loads: LoadSnapshot, partition: AdmittancePartition) -> NecessaryCondition:
    """
    Necessary condition for zero-cost tracking

    margin = Σ P̄_G - Σ P̄_L + ¼ Ī' S^+ Ī with S = (Y_LL + Y_L) - Y_LG Y_GG^-1 Y_GL,
    the minimum over all voltages of the power drawn by the network and the Ī loads.
    S is singular when no load has a shunt conductance; the Ī term then lives on the
    range of S. An Ī component in its null space leaves the drawn power unbounded
    below, so the bound is vacuous and the margin is +inf.
    """
    p_ref = np.asarray(p_ref, dtype=float)
    base = float(np.sum(p_ref) - np.sum(loads.p_bar))
    if partition.m == 0 or not np.any(loads.i_bar):
        return NecessaryCondition(holds=base >= 0, margin=base)

    loaded = partition.loaded_ll(loads.y_l)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
            schur = loaded - partition.y_lg @ scipy.linalg.solve(partition.y_gg, partition.y_gl, assume_a="sym")
    except (scipy.linalg.LinAlgError, scipy.linalg.LinAlgWarning, ValueError) as e:
        raise SingularMatrixError(f"DGU admittance block is singular: {e}") from e

    w, u = scipy.linalg.eigh(0.5 * (schur + schur.T))
    tol = 1e-10 * max(1.0, float(np.max(np.abs(w), initial=0.0)))
    coeff = u.T @ loads.i_bar
    null = np.abs(w) <= tol
    if np.any(null) and np.max(np.abs(coeff[null])) > 1e-10 * max(1.0, float(np.max(np.abs(loads.i_bar)))):
        logger.debug("constant-current loads have a component in the null space of the reduced admittance")
        return NecessaryCondition(holds=True, margin=float("inf"))
    term = float(np.sum(coeff[~null] ** 2 / w[~null]))
    margin = base + 0.25 * term
    return NecessaryCondition(holds=margin >= 0, margin=margin)


class Translator:
    """
    Turns EMS plans into voltage references on the current topology

    The result of the latest secondary instant is cached; a previous solution on
    the same topology warm-starts the next one.
    """

    def __init__(
        self,
        dgus: Sequence[DguSpec],
        v_nominal: float = 100.0,
        v_min: float = 90.0,
        v_max: float = 110.0,
        opts: Optional[SecondaryOptions] = None,
    ):
        self.dgus = {d.node: d for d in dgus}
        self.v_nominal = v_nominal
        self.v_min = v_min
        self.v_max = v_max
        self.opts = opts or SecondaryOptions()
        self._cache: Dict[Any, SecondaryResult] = {}
        self._last: Optional[Tuple[Tuple[str, ...], SecondaryResult]] = None

    def request_for(
        self,
        plan: EmsPlan,
        topology: NetworkTopology,
        loads_now: Mapping[str, ZipLoad],
        bounds: Optional[Tuple[float, float]] = None,
        pv_available: Optional[Mapping[str, float]] = None,
    ) -> SecondaryRequest:
        pv_available = pv_available or {}
        v_min, v_max = bounds or (self.v_min, self.v_max)
        partition = build_admittance(topology)
        units = [self.dgus[node] for node in topology.dgu_nodes]
        p_bounds = []
        for unit in units:
            if unit.kind == DguKind.PV:
                p_bounds.append((0.0, max(0.0, float(pv_available.get(unit.name, unit.p_max)))))
            else:
                p_bounds.append((unit.p_min, unit.p_max))
        warm = None
        if self._last is not None and self._last[0] == topology.nodes:
            warm = self._last[1].v_g_star
        return SecondaryRequest(
            p_ref=np.array([plan.p_ref.get(unit.name, 0.0) for unit in units]),
            loads=LoadSnapshot.from_loads(load_vector(topology, loads_now)),
            partition=partition,
            r_filter=np.array([unit.r_filter for unit in units]),
            v_bounds=np.tile([v_min, v_max], (topology.n + topology.m, 1)),
            p_bounds=np.array(p_bounds).reshape(len(units), 2),
            v_nominal=self.v_nominal,
            warm_start=warm,
        )

    def translate(
        self,
        plan: EmsPlan,
        topology: NetworkTopology,
        loads_now: Mapping[str, ZipLoad],
        bounds: Optional[Tuple[float, float]] = None,
        pv_available: Optional[Mapping[str, float]] = None,
        instant: Any = None,
    ) -> SecondaryResult:
        """
        Solve SCPF for the plan on a topology that already reflects the plan's modes

        Args:
            plan: EMS plan providing P̄_G per DGU name
            topology: Topology after apply_decisions
            loads_now: Current ZIP load per node id
            bounds: (V_min, V_max) for every node; defaults to the translator's bounds
            pv_available: Available PV power per curtailing PV name (W), its upper power bound
            instant: Cache key, typically the secondary instant in seconds

        Returns:
            SecondaryResult with references keyed by DGU name
        """
        if instant is not None and instant in self._cache:
            return self._cache[instant]

        request = self.request_for(plan, topology, loads_now, bounds, pv_available)
        result = solve_scpf(request, self.opts)
        result.references = {
            self.dgus[node].name: float(v) for node, v in zip(topology.dgu_nodes, result.v_g_star)
        }
        v_min = (bounds or (self.v_min, self.v_max))[0]
        result.uniqueness = uniqueness_check(request.loads, v_min)
        try:
            result.necessary = necessary_condition(request.p_ref, request.loads, request.partition)
        except SingularMatrixError as e:
            logger.warning("necessary condition not evaluated: %s", e)

        if not result.exact:
            logger.info("secondary tracking not exact: cost %.3f W", result.cost)
        self._last = (topology.nodes, result)
        if instant is not None:
            # a cached result is only reused until the next secondary instant
            self._cache = {instant: result}
        return result
