"""
Test suite for the network model
"""
from pathlib import Path

import numpy as np
import pytest

from src.errors import ConstructionError, TopologyError
from src.network import (
    DguKind,
    DguSpec,
    NetworkTopology,
    ZipLoad,
    apply_decisions,
    build_admittance,
    check_lemma_structure,
    line_losses,
    load_vector,
)
from src.simulation import load_scenario

SCENARIO = Path(__file__).parent / "scenarios" / "dc16.json"


def random_connected(rng, size: int, n_dgu: int):
    """Random spanning tree plus a few chords, first n_dgu nodes are DGUs"""
    nodes = [str(i) for i in range(size)]
    edges = []
    for i in range(1, size):
        edges.append([nodes[int(rng.integers(0, i))], nodes[i], float(rng.uniform(0.5, 5.0))])
    for _ in range(size // 2):
        a, b = rng.choice(size, 2, replace=False)
        edges.append([nodes[a], nodes[b], float(rng.uniform(0.5, 5.0))])
    return NetworkTopology.build(nodes[:n_dgu], nodes[n_dgu:], edges)


def test_admittance():
    """Test admittance construction on small graphs"""
    print("\n Testing admittance...")

    path = NetworkTopology.build(["a"], ["b"], [["a", "b", 2.0]])
    partition = build_admittance(path)
    assert np.allclose(partition.full, [[2.0, -2.0], [-2.0, 2.0]])
    assert partition.n == 1 and partition.m == 1
    print("[OK] 2-node path")

    triangle = NetworkTopology.build(["1"], ["2", "3"], [["1", "2", 1.0], ["2", "3", 1.0], ["3", "1", 1.0]])
    full = build_admittance(triangle).full
    assert np.allclose(np.diag(full), 2.0)
    assert np.allclose(full[~np.eye(3, dtype=bool)], -1.0)
    print("[OK] Triangle")

    scenario = load_scenario(SCENARIO)
    full = build_admittance(scenario.topology).full
    assert full.shape == (16, 16)
    assert np.max(np.abs(full.sum(axis=1))) <= 1e-12 * np.max(np.abs(full))
    print("[OK] 16-bus admittance has zero row sums")

    v = np.full(16, 100.0)
    assert abs(line_losses(build_admittance(scenario.topology), v)) < 1e-6
    print("[OK] No line losses at flat voltage")


def test_topology_validation():
    """Test construction errors"""
    print("\n Testing topology validation...")

    with pytest.raises(ConstructionError):
        NetworkTopology.build(["1"], ["2", "3"], [["1", "2", 1.0]])
    print("[OK] Disconnected graph rejected")

    with pytest.raises(ConstructionError):
        NetworkTopology.build(["1"], ["2"], [["1", "2", -1.0]])
    print("[OK] Negative conductance rejected")

    with pytest.raises(ConstructionError):
        NetworkTopology.build(["1"], ["1"], [["1", "1", 1.0]])
    print("[OK] Overlapping node sets rejected")

    with pytest.raises(ConstructionError):
        DguSpec("B", "1", DguKind.BATTERY, p_min=0.0, p_max=10.0, r_filter=0.1)
    print("[OK] Battery without parameters rejected")

    with pytest.raises(ConstructionError):
        ZipLoad(y_const=-0.1)
    print("[OK] Negative load conductance rejected")


def test_apply_decisions():
    """Test EMS-driven topology edits on the 16-bus feeder"""
    print("\n Testing apply_decisions...")
    scenario = load_scenario(SCENARIO)
    topology, dgus = scenario.topology, scenario.dgus
    pv = {"PV6": 50000.0}

    edited = apply_decisions(topology, {"D1": 0, "D2": 1, "PV6": 0}, dgus, pv)
    assert "1" not in edited.nodes
    assert ("15", "1", 120.0) not in edited.edges and ("1", "14", 160.0) not in edited.edges
    assert len(edited.edges) == len(topology.edges) - 2
    assert edited.is_connected()
    assert edited.removed_nodes == ("1",)
    print("[OK] D1 OFF removes node 1 and its edges")

    with pytest.raises(TopologyError):
        apply_decisions(topology, {"D1": 0, "D2": 0}, dgus, pv)
    print("[OK] D1 and D2 OFF split the network")

    all_on = apply_decisions(topology, {u.name: 1 for u in dgus}, dgus, pv)
    assert "6" in all_on.load_nodes and "6" not in all_on.dgu_nodes
    assert all_on.injection_at("6") == ZipLoad(p_const=-50000.0)
    assert len(all_on.edges) == len(topology.edges)
    print("[OK] MPPT moves the PV node to the load set")

    loads = load_vector(all_on, scenario.load_at(12 * 3600))
    assert loads[-1].p_const == -50000.0
    print("[OK] MPPT injection appears in the load vector")

    again = apply_decisions(topology, {"D1": 0, "D2": 1, "PV6": 0}, dgus, pv)
    assert again == edited
    print("[OK] Decisions are idempotent")


def test_lemma_structure():
    """Test the structural checks on the load block"""
    print("\n Testing structural checks...")

    two = build_admittance(NetworkTopology.build(["g"], ["l"], [["g", "l", 0.5]]))
    report = check_lemma_structure(two, [ZipLoad()])
    assert report.passed
    print("[OK] 2-node sensitivity is [1]")

    scenario = load_scenario(SCENARIO)
    partition = build_admittance(scenario.topology)
    report = check_lemma_structure(partition, load_vector(scenario.topology, scenario.load_at(0)))
    assert report.decomposition_ok and report.nonnegative_ok
    assert report.to_dict()["passed"]
    print("[OK] 16-bus feeder passes both checks")

    rng = np.random.default_rng(3)
    for _ in range(20):
        size = int(rng.integers(3, 10))
        topology = random_connected(rng, size, int(rng.integers(1, size)))
        partition = build_admittance(topology)
        loads = [ZipLoad(y_const=float(rng.uniform(0.0, 0.1))) for _ in range(topology.m)]
        report = check_lemma_structure(partition, loads)
        assert report.passed, report.to_dict()
        y_hat = partition.y_ll - np.diag(-partition.y_lg.sum(axis=1))
        assert np.allclose(y_hat + np.diag(-partition.y_lg.sum(axis=1)), partition.y_ll, atol=1e-12)
        eig = np.linalg.eigvalsh(partition.loaded_ll([ld.y_const for ld in loads]))
        assert np.all(eig > 0)
    print("[OK] Random connected graphs pass")


def main():
    """Run all tests"""
    print("=" * 60)
    print("DCMG Network Model Test Suite")
    print("=" * 60)

    try:
        test_admittance()
        test_topology_validation()
        test_apply_decisions()
        test_lemma_structure()

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
