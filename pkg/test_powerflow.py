"""
Test suite for load flow and solvability certificates
"""
import numpy as np
import pytest

from src.errors import ConvergenceError, DomainError, NotCertifiedError
from src.network import NetworkTopology, ZipLoad, build_admittance
from src.powerflow import load_flow
from src.powerflow import (
    LoadFlowOptions,
    LoadSnapshot,
    dgu_currents,
    existence_certificate,
    feasibility_alpha,
    jacobian_f_l,
    operating_point,
    power_balance,
    residual_f_g,
    residual_f_l,
    solve_load_flow_banach,
    solve_load_flow_newton,
    uniqueness_check,
)

V_L_2NODE = 50.0 + np.sqrt(2500.0 - 200.0)  # 0.5 V (100 - V) = 100


def two_node(p_bar: float = 100.0, i_bar: float = 0.0, y_l: float = 0.0):
    partition = build_admittance(NetworkTopology.build(["g"], ["l"], [["g", "l", 0.5]]))
    return partition, LoadSnapshot.from_loads([ZipLoad(i_const=i_bar, y_const=y_l, p_const=p_bar)])


def random_instance(rng, size: int, g_range=(1.0, 10.0)):
    nodes = [str(i) for i in range(size)]
    n_dgu = int(rng.integers(1, size))
    edges = [[nodes[int(rng.integers(0, i))], nodes[i], float(rng.uniform(*g_range))] for i in range(1, size)]
    topology = NetworkTopology.build(nodes[:n_dgu], nodes[n_dgu:], edges)
    loads = [
        ZipLoad(i_const=float(rng.uniform(0, 2)), y_const=float(rng.uniform(0, 0.05)), p_const=float(rng.uniform(0, 200)))
        for _ in range(topology.m)
    ]
    return build_admittance(topology), LoadSnapshot.from_loads(loads)


def test_residuals():
    """Test the load and DGU residuals"""
    print("\n Testing residuals...")

    partition, _ = two_node()
    empty = LoadSnapshot.empty(1)
    assert np.allclose(residual_f_l([100.0], [100.0], empty, partition), 0.0)
    assert np.allclose(residual_f_g([100.0], [100.0], [0.0], partition, [0.1]), 0.0)
    print("[OK] Flat voltage without loads")

    partition, loads = two_node()
    assert abs(residual_f_l([100.0], [V_L_2NODE], loads, partition)[0]) < 1e-3
    assert residual_f_l([100.0], [90.0], loads, partition)[0] == pytest.approx(-3.889, abs=1e-3)
    print("[OK] 2-node load residual")

    i_g = dgu_currents([100.0], [V_L_2NODE], partition)[0]
    assert i_g == pytest.approx(1.0208, abs=1e-4)
    p_g = 100.0 * i_g + 0.1 * i_g ** 2
    assert p_g == pytest.approx(102.19, abs=1e-2)
    assert abs(residual_f_g([100.0], [V_L_2NODE], [p_g], partition, [0.1])[0]) < 1e-9
    assert residual_f_g([100.0], [V_L_2NODE], [0.0], partition, [0.1])[0] == pytest.approx(102.19, abs=1e-2)
    print("[OK] 2-node DGU residual")

    with pytest.raises(DomainError):
        residual_f_l([100.0], [0.0], loads, partition)
    print("[OK] Zero load voltage rejected")


def test_jacobian():
    """Test the analytic Jacobian against central differences"""
    print("\n Testing Jacobian...")
    rng = np.random.default_rng(11)
    for _ in range(10):
        partition, loads = random_instance(rng, int(rng.integers(3, 8)))
        v_g = rng.uniform(95, 105, partition.n)
        v_l = rng.uniform(90, 100, partition.m)
        jac = jacobian_f_l(v_l, loads, partition)
        fd = np.zeros_like(jac)
        for k in range(partition.m):
            h = 1e-5 * v_l[k]
            up, down = v_l.copy(), v_l.copy()
            up[k] += h
            down[k] -= h
            fd[:, k] = (residual_f_l(v_g, up, loads, partition) - residual_f_l(v_g, down, loads, partition)) / (2 * h)
        assert np.max(np.abs(jac - fd)) <= 1e-6 * max(1.0, np.max(np.abs(jac)))
    print("[OK] Jacobian matches finite differences")


def test_newton():
    """Test the Newton load flow"""
    print("\n Testing Newton load flow...")

    partition, _ = two_node()
    v_l = solve_load_flow_newton([100.0], LoadSnapshot.empty(1), partition)
    assert np.allclose(v_l, 100.0)
    print("[OK] No loads solve at flat voltage")

    partition, loads = two_node()
    v_l = solve_load_flow_newton([100.0], loads, partition)
    assert v_l[0] == pytest.approx(97.9583, abs=1e-4)
    assert abs(v_l[0] - V_L_2NODE) < 1e-6
    print(f"[OK] 2-node V_L = {v_l[0]:.4f} V")

    point = operating_point([100.0], loads, partition, [0.1])
    assert point.p_g[0] == pytest.approx(102.19, abs=1e-2)
    balance = power_balance(point, loads, partition, [0.1])
    assert balance.relative <= 1e-6
    print(f"[OK] 2-node P_G = {point.p_g[0]:.2f} W, power balanced")

    partition, loads = two_node(p_bar=100.0, i_bar=1.0, y_l=0.02)
    newton = solve_load_flow_newton([100.0], loads, partition)
    banach = solve_load_flow_banach([100.0], loads, partition)
    assert np.max(np.abs(newton - banach)) <= 1e-8
    print("[OK] ZIP load matches the contraction iteration")

    empty = build_admittance(NetworkTopology.build(["a", "b"], [], [["a", "b", 1.0]]))
    assert solve_load_flow_newton([100.0, 100.0], LoadSnapshot.empty(0), empty).size == 0
    print("[OK] No load nodes")

    # a near-zero Jacobian sends every damped step below the voltage floor
    partition, loads = two_node()

    def flat_jacobian(v_l, snapshot, part):
        return np.diag(residual_f_l([100.0], v_l, snapshot, part) * 1e-20)

    with pytest.MonkeyPatch.context() as patch:
        patch.setattr(load_flow, "jacobian_f_l", flat_jacobian)
        with pytest.raises(ConvergenceError):
            solve_load_flow_newton([100.0], loads, partition)
    print("[OK] Step stuck at the voltage floor raises")


def test_banach():
    """Test the contraction iteration and its certificate"""
    print("\n Testing contraction iteration...")

    partition, loads = two_node()
    v_l = solve_load_flow_banach([100.0], loads, partition)
    assert v_l[0] == pytest.approx(97.9583, abs=1e-4)
    print("[OK] 2-node case")

    partition, loads = two_node(p_bar=0.0, i_bar=2.0, y_l=0.1)
    certificate = existence_certificate([100.0], loads, partition)
    v_l = solve_load_flow_banach([100.0], loads, partition, LoadFlowOptions(banach_max_iter=1))
    assert np.allclose(v_l, certificate.v_tilde)
    print("[OK] No P loads converge in one step")

    partition, loads = two_node(p_bar=2000.0)
    with pytest.raises(NotCertifiedError):
        solve_load_flow_banach([100.0], loads, partition)
    print("[OK] Uncertified instance rejected")

    rng = np.random.default_rng(5)
    checked = 0
    while checked < 30:
        partition, loads = random_instance(rng, int(rng.integers(3, 8)))
        v_g = np.full(partition.n, 100.0)
        if existence_certificate(v_g, loads, partition).delta >= 0.5:
            continue
        newton = solve_load_flow_newton(v_g, loads, partition)
        banach = solve_load_flow_banach(v_g, loads, partition)
        assert np.max(np.abs(newton - banach)) <= 1e-8
        checked += 1
    print("[OK] Newton and contraction agree on random networks")


def test_certificates():
    """Test existence, feasibility witness and uniqueness"""
    print("\n Testing certificates...")

    partition, loads = two_node()
    certificate = existence_certificate([100.0], loads, partition)
    assert certificate.delta == pytest.approx(0.08)
    assert certificate.solvable
    print("[OK] Delta = 0.08")

    partition, loads = two_node(p_bar=2000.0)
    certificate = existence_certificate([100.0], loads, partition)
    assert certificate.delta == pytest.approx(1.6)
    assert not certificate.solvable
    print("[OK] Delta = 1.6 is not certified")

    partition, loads = two_node(p_bar=0.0)
    assert existence_certificate([100.0], loads, partition).delta == 0.0
    print("[OK] Delta = 0 without P loads")

    partition, loads = two_node(p_bar=2000.0)
    alpha, v_g = feasibility_alpha(loads, partition, alpha_seed=100.0)
    assert alpha == 200.0
    assert existence_certificate(v_g, loads, partition).delta == pytest.approx(0.4)
    assert solve_load_flow_banach(v_g, loads, partition)[0] > 0
    print("[OK] Feasibility witness alpha = 200 V")

    partition, loads = two_node(p_bar=0.0)
    assert feasibility_alpha(loads, partition, alpha_seed=100.0)[0] == 100.0
    print("[OK] Zero loads certify at the seed")

    report = uniqueness_check(LoadSnapshot.from_loads([ZipLoad(y_const=0.02, p_const=150.0)]), 90.0)
    assert report.holds
    report = uniqueness_check(LoadSnapshot.from_loads([ZipLoad(y_const=0.02, p_const=162.01)]), 90.0)
    assert not report.holds and report.violations == [0]
    report = uniqueness_check(LoadSnapshot.from_loads([ZipLoad(p_const=1.0)]), 90.0)
    assert not report.holds
    print("[OK] Uniqueness condition")


def test_multistart_uniqueness():
    """Newton converges to the same point from random starts when uniqueness holds"""
    print("\n Testing multistart uniqueness...")
    rng = np.random.default_rng(21)
    for _ in range(10):
        partition, _ = random_instance(rng, int(rng.integers(3, 7)), g_range=(20.0, 50.0))
        y_l = rng.uniform(0.02, 0.05, partition.m)
        p_bar = rng.uniform(0.0, 0.9, partition.m) * 90.0 ** 2 * y_l
        loads = LoadSnapshot(i_bar=np.zeros(partition.m), p_bar=p_bar, y_l=y_l)
        assert uniqueness_check(loads, 90.0).holds
        v_g = np.full(partition.n, 100.0)
        reference = solve_load_flow_newton(v_g, loads, partition)
        if np.any(reference <= 90.0):
            continue
        for _ in range(20):
            start = rng.uniform(90.0, 110.0, partition.m)
            v_l = solve_load_flow_newton(v_g, loads, partition, v_init=start)
            assert np.max(np.abs(v_l - reference)) <= 1e-6
    print("[OK] All starts agree")

    # without Y_L the 2-node P load has a second, low-voltage solution
    partition, loads = two_node()
    low = solve_load_flow_newton([100.0], loads, partition, LoadFlowOptions(v_min=1.0), v_init=[3.0])
    assert low[0] == pytest.approx(50.0 - np.sqrt(2500.0 - 200.0), abs=1e-6)
    print(f"[OK] Second solution found at {low[0]:.4f} V")


def main():
    """Run all tests"""
    print("=" * 60)
    print("DCMG Power Flow Test Suite")
    print("=" * 60)

    try:
        test_residuals()
        test_jacobian()
        test_newton()
        test_banach()
        test_certificates()
        test_multistart_uniqueness()

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
