"""
Test suite for secondary control
"""
import numpy as np
import pytest

from src.ems import EmsInputs, fallback_plan
from src.errors import ConstructionError, InfeasibleError
from src.network import DguKind, DguSpec, NetworkTopology, ZipLoad, build_admittance
from src.powerflow import LoadSnapshot, dgu_powers, operating_point, solve_load_flow_newton
from src.secondary import (
    NlpProblem,
    SecondaryRequest,
    Translator,
    necessary_condition,
    project_pd,
    solve_scpf,
    solve_spf,
    solve_sqp,
)

TWO_NODE = NetworkTopology.build(["g"], ["l"], [["g", "l", 0.5]])


def request(p_ref: float, load: ZipLoad = ZipLoad(p_const=100.0), **kwargs) -> SecondaryRequest:
    return SecondaryRequest(
        p_ref=[p_ref],
        loads=LoadSnapshot.from_loads([load]),
        partition=build_admittance(TWO_NODE),
        r_filter=[0.1],
        **kwargs,
    )


class CircleProblem(NlpProblem):
    """min 0.5 |z|^2 s.t. z0 + z1 = 1, z1 <= 0.2"""

    lb = np.array([-np.inf, -np.inf])
    ub = np.array([np.inf, 0.2])

    def objective(self, z):
        return 0.5 * float(z @ z)

    def gradient(self, z):
        return z.copy()

    def constraints(self, z):
        return np.array([z[0] + z[1] - 1.0])

    def jacobian(self, z):
        return np.array([[1.0, 1.0]])

    def lagrangian_hessian(self, z, lam):
        return np.eye(2)


def test_sqp():
    """Test the SQP driver on a small problem"""
    print("\n Testing SQP...")
    hess = project_pd(np.diag([1.0, -1.0]), 1e-6)
    eig = np.linalg.eigvalsh(hess)
    assert eig.min() >= 1e-6 - 1e-12
    assert eig.max() == pytest.approx(1.0)
    print("[OK] Hessian projection clips negative curvature")

    result = solve_sqp(CircleProblem(), np.array([0.0, 0.0]))
    assert result.converged
    assert np.allclose(result.z, [0.8, 0.2], atol=1e-7)
    print("[OK] Bound-active solution (0.8, 0.2)")


def test_necessary_condition():
    """Test the necessary condition for exact tracking"""
    print("\n Testing necessary condition...")
    partition = build_admittance(TWO_NODE)

    report = necessary_condition([102.19], LoadSnapshot.from_loads([ZipLoad(p_const=100.0)]), partition)
    assert report.holds
    assert report.margin == pytest.approx(2.19)
    print("[OK] Margin 2.19 W")

    report = necessary_condition([50.0], LoadSnapshot.from_loads([ZipLoad(p_const=100.0)]), partition)
    assert not report.holds
    print("[OK] Under-supplied load fails")

    # reduced admittance 0.02 S, so the current term adds 1 / (4 * 0.02) W
    report = necessary_condition([0.0], LoadSnapshot.from_loads([ZipLoad(i_const=1.0, y_const=0.02)]), partition)
    assert report.margin == pytest.approx(12.5)
    print("[OK] Constant-current term")

    # no shunt conductance: the reduced admittance is zero and equal voltages draw Ī V
    report = necessary_condition([0.0], LoadSnapshot.from_loads([ZipLoad(i_const=1.0)]), partition)
    assert report.holds and report.margin == float("inf")
    assert report.to_dict()["holds"]
    print("[OK] Singular reduced admittance leaves the bound vacuous")


def test_spf():
    """Test the secondary power flow"""
    print("\n Testing SPF...")

    result = solve_spf(request(0.0, ZipLoad()))
    assert result.cost <= 1e-6
    assert result.v_l_star[0] == pytest.approx(result.v_g_star[0], abs=1e-6)
    print("[OK] No load, no power")

    result = solve_spf(request(102.19))
    assert result.exact
    assert result.p_g_star[0] == pytest.approx(102.19, abs=1e-3)
    assert result.iterations <= 30
    print(f"[OK] Exact tracking at V_G = {result.v_g_star[0]:.3f} V")

    result = solve_spf(request(50.0))
    assert not result.exact
    assert result.cost > 49.0
    assert result.p_g_star[0] >= 100.0 - 1e-6
    print(f"[OK] Best effort: P_G = {result.p_g_star[0]:.2f} W")

    with pytest.raises(ConstructionError):
        request(0.0, v_nominal=0.0)
    with pytest.raises(ConstructionError):
        SecondaryRequest(p_ref=[1.0, 2.0], loads=LoadSnapshot.empty(1),
                         partition=build_admittance(TWO_NODE), r_filter=[0.1])
    print("[OK] Invalid requests rejected")


def test_scpf():
    """Test the constrained secondary power flow"""
    print("\n Testing SCPF...")
    bounds = dict(v_bounds=[[90.0, 110.0], [90.0, 110.0]], p_bounds=[[0.0, 200.0]])

    result = solve_scpf(request(102.19, **bounds))
    assert result.exact
    assert np.all(result.v_g_star >= 90.0 - 1e-6) and np.all(result.v_g_star <= 110.0 + 1e-6)
    assert np.all(result.v_l_star >= 90.0 - 1e-6) and np.all(result.v_l_star <= 110.0 + 1e-6)
    print("[OK] Exact tracking inside the voltage box")

    constrained = solve_scpf(request(150.0, **bounds))
    free = solve_spf(request(150.0, **bounds))
    assert constrained.cost >= free.cost - 1e-6
    assert not constrained.exact
    assert constrained.v_g_star[0] <= 110.0 + 1e-6
    print(f"[OK] SCPF cost {constrained.cost:.2f} W >= SPF cost {free.cost:.2f} W")

    with pytest.raises(InfeasibleError):
        solve_scpf(request(20.0, v_bounds=[[90.0, 110.0], [90.0, 110.0]], p_bounds=[[0.0, 50.0]]))
    print("[OK] Infeasible power box detected")


def test_translator():
    """Test plan-to-reference translation"""
    print("\n Testing translator...")
    unit = DguSpec("G", "g", DguKind.DISPATCHABLE, p_min=0.0, p_max=500.0, r_filter=0.1)
    inputs = EmsInputs(
        soc={}, pv_nominal={}, pv_forecast={},
        load_now=[ZipLoad(p_const=100.0)],
        load_i_forecast=np.zeros((1, 1)),
        load_p_forecast=np.full((1, 1), 100.0),
        horizon=1,
    )
    plan = fallback_plan(inputs, [unit])
    assert plan.p_ref["G"] == pytest.approx(250.0)
    plan.p_ref["G"] = 102.19

    translator = Translator([unit], v_nominal=100.0, v_min=90.0, v_max=110.0)
    result = translator.translate(plan, TWO_NODE, {"l": ZipLoad(p_const=100.0)}, instant=0)
    assert set(result.references) == {"G"}
    assert result.exact
    assert result.references["G"] == pytest.approx(result.v_g_star[0])
    assert result.necessary.margin == pytest.approx(2.19)
    assert not result.uniqueness.holds
    print(f"[OK] V_G* = {result.references['G']:.3f} V")

    assert translator.translate(plan, TWO_NODE, {"l": ZipLoad(p_const=100.0)}, instant=0) is result
    print("[OK] Results cached per instant")

    follow = translator.request_for(plan, TWO_NODE, {"l": ZipLoad(p_const=100.0)})
    assert np.allclose(follow.warm_start, result.v_g_star)
    assert result.to_dict()["references_v"] == result.references
    print("[OK] Warm start from the previous solution")

    later = translator.translate(plan, TWO_NODE, {"l": ZipLoad(p_const=100.0)}, instant=180)
    assert later is not result and later.exact
    assert list(translator._cache) == [180]
    print("[OK] Cache holds only the latest instant")


def random_request(rng):
    """Connected network whose references come from a physical operating point"""
    size = int(rng.integers(2, 6))
    nodes = [f"n{i}" for i in range(size)]
    n_dgu = int(rng.integers(1, size))
    edges = [[nodes[int(rng.integers(0, i))], nodes[i], float(rng.uniform(5.0, 20.0))] for i in range(1, size)]
    topology = NetworkTopology.build(nodes[:n_dgu], nodes[n_dgu:], edges)
    partition = build_admittance(topology)
    snapshot = LoadSnapshot.from_loads([
        ZipLoad(i_const=float(rng.uniform(0.0, 0.5)), y_const=float(rng.uniform(0.02, 0.04)),
                p_const=float(rng.uniform(0.0, 100.0)))
        for _ in range(topology.m)
    ])
    r_filter = np.full(topology.n, 0.1)
    point = operating_point(rng.uniform(98.0, 102.0, topology.n), snapshot, partition, r_filter)
    return SecondaryRequest(
        p_ref=point.p_g,
        loads=snapshot,
        partition=partition,
        r_filter=r_filter,
        v_bounds=np.tile([60.0, 140.0], (topology.n + topology.m, 1)),
        p_bounds=np.tile([-1e5, 1e5], (topology.n, 1)),
    )


def test_exact_tracking_properties():
    """Exact SCPF solutions satisfy the necessary condition and reproduce under the load flow"""
    print("\n Testing exact-tracking properties...")
    rng = np.random.default_rng(11)
    exact = 0
    for _ in range(8):
        req = random_request(rng)
        result = solve_scpf(req)
        if not result.exact:
            continue
        exact += 1
        assert necessary_condition(req.p_ref, req.loads, req.partition).holds

        v_l = solve_load_flow_newton(result.v_g_star, req.loads, req.partition)
        assert np.max(np.abs(v_l - result.v_l_star)) <= 1e-6
        p_g = dgu_powers(result.v_g_star, v_l, req.partition, req.r_filter)
        assert np.max(np.abs(p_g - req.p_ref)) <= 1e-3
    assert exact > 0
    print(f"[OK] {exact}/8 exact solutions hold the condition and round-trip through the load flow")


def main():
    """Run all tests"""
    print("=" * 60)
    print("DCMG Secondary Control Test Suite")
    print("=" * 60)

    try:
        test_sqp()
        test_necessary_condition()
        test_spf()
        test_scpf()
        test_translator()
        test_exact_tracking_properties()

        print("\n" + "=" * 60)
        print("[OK] ALL TESTS PASSED!")
        print("=" * 60)

    except AssertionError as e:
        print(f"\n[FAIL] Test failed: {e}")
        import traceback
        traceback.print_exc()

    except Exception as e:
        print(f"\n[FAIL] Unexpected error: {e}")
        import traceback
        traceback.print_exc()


if __name__ == "__main__":
    main()
