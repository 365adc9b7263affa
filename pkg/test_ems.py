"""
Test suite for the EMS
"""
import numpy as np
import pytest

from src.ems import (
    EmsInputs,
    EmsLayout,
    EmsOptions,
    EmsWeights,
    UnitWeights,
    build_problem,
    curtailing_units,
    estimate_load_power,
    plan,
)
from src.errors import ConstructionError
from src.network import BatteryParams, DguKind, DguSpec, ZipLoad
from src.qp import MiqpOptions, enumerate_miqp, solve_miqp

BATTERY = DguSpec("B", "1", DguKind.BATTERY, p_min=-10000.0, p_max=10000.0, r_filter=0.002,
                  battery=BatteryParams(capacity_wh=50000.0, soc_nominal=0.5))
DIESEL = DguSpec("D", "2", DguKind.DISPATCHABLE, p_min=2000.0, p_max=20000.0, r_filter=0.002)
PV = DguSpec("PV", "3", DguKind.PV, p_min=0.0, p_max=30000.0, r_filter=0.002, pv_profile="pv", rated_power=30000.0)

WEIGHTS = EmsWeights.from_dict({
    "D": {"power": 254.8, "switch": 1e6},
    "B": {"power": 0.1, "switch": 5e7, "soc_slack": 2.5e9},
    "PV": {"power": 5e4, "switch": 1e8},
})
OPTS = EmsOptions(miqp=MiqpOptions(node_limit=5000))


def make_inputs(load_w: float, pv_w: float = 0.0, horizon: int = 4, soc: float = 0.5, prev_modes=None):
    return EmsInputs(
        soc={"B": soc},
        pv_nominal={"PV": pv_w},
        pv_forecast={"PV": np.full(horizon, pv_w)},
        load_now=[ZipLoad(p_const=load_w)],
        load_i_forecast=np.zeros((horizon, 1)),
        load_p_forecast=np.full((horizon, 1), load_w),
        v_nominal=100.0,
        tau=0.25,
        horizon=horizon,
        prev_modes=prev_modes or {"B": 1, "D": 1, "PV": 1},
    )


def test_load_estimate():
    """Test the nominal-voltage load estimate"""
    print("\n Testing load estimate...")
    assert estimate_load_power(ZipLoad(i_const=1.0, y_const=0.02, p_const=500.0), 100.0) == pytest.approx(800.0)
    assert estimate_load_power(ZipLoad(), 100.0) == 0.0
    assert estimate_load_power(ZipLoad(y_const=0.05), 100.0) == pytest.approx(500.0)
    print("[OK] 800 W, 0 W and 500 W")

    inputs = make_inputs(1000.0, horizon=3)
    inputs.load_p_forecast[1:, 0] = 2000.0
    assert np.allclose(inputs.load_estimates(), [1000.0, 2000.0, 2000.0])
    print("[OK] Step 0 uses measurements, later steps forecasts")


def test_layout():
    """Test variable and binary counts"""
    print("\n Testing problem layout...")
    inputs = make_inputs(5000.0, horizon=2)

    problem = build_problem(inputs, [BATTERY, DIESEL], WEIGHTS)
    assert problem.qp.n == 2 * (3 + 2) + 2 + 1
    assert len(problem.binary_indices) == 4
    print("[OK] Battery + dispatchable: 13 variables, 4 binaries")

    problem = build_problem(inputs, [BATTERY, DIESEL, PV], WEIGHTS)
    assert problem.qp.n == 17
    assert len(problem.binary_indices) == 6
    print("[OK] Battery + dispatchable + PV: 17 variables, 6 binaries")

    layout = EmsLayout([BATTERY, DIESEL, PV], 2)
    assert len({layout.p_dh(i, 0) for i in range(2)} | {layout.soc(k, 0) for k in (1, 2)} | {layout.slack(0)}) == 5
    with pytest.raises(ConstructionError):
        layout.mode_index(0, "nope")
    print("[OK] Index map")

    with pytest.raises(ConstructionError):
        make_inputs(0.0, horizon=0)
    with pytest.raises(ConstructionError):
        make_inputs(0.0, soc=1.5)
    with pytest.raises(ConstructionError):
        UnitWeights(power=-1.0)
    print("[OK] Invalid inputs rejected")


def test_zero_plan():
    """Zero load and zero PV give an idle plan at zero cost"""
    print("\n Testing idle plan...")
    inputs = make_inputs(0.0, 0.0, prev_modes={"B": 1, "D": 0, "PV": 1})
    result = plan(inputs, [BATTERY, DIESEL, PV], WEIGHTS)
    assert not result.flagged
    assert result.objective == pytest.approx(0.0, abs=1e-6)
    assert all(abs(p) < 1e-6 for p in result.p_ref.values())
    assert result.modes["D"] == 0
    assert result.slack["B"] == pytest.approx(0.0, abs=1e-9)
    print("[OK] Everything idle, objective 0")


def test_plan_invariants():
    """Balance, exclusivity, dispatchable semantics and SOC recursion"""
    print("\n Testing plan invariants...")
    inputs = make_inputs(8000.0, 0.0, horizon=4)
    dgus = [BATTERY, DIESEL, PV]
    problem = build_problem(inputs, dgus, WEIGHTS)
    report = solve_miqp(problem)
    assert report.optimal
    layout = EmsLayout(dgus, inputs.horizon)
    x = report.x
    for i in range(inputs.horizon):
        assert x[layout.p_dh(i, 0)] * x[layout.p_ch(i, 0)] == pytest.approx(0.0, abs=1e-9)
    print("[OK] Charge and discharge never overlap")

    result = plan(inputs, dgus, WEIGHTS, opts=OPTS)
    assert max(abs(r) for r in result.balance_residual) <= 1e-5
    print("[OK] Power balance at every step")

    for p, mode in zip(result.power["D"], result.mode_trajectory["D"]):
        if mode == 0:
            assert abs(p) <= 1e-6
        else:
            assert DIESEL.p_min - 1e-6 <= p <= DIESEL.p_max + 1e-6
    print("[OK] Dispatchable semantics")

    bat = BATTERY.battery
    soc = result.soc["B"][0]
    for i, p in enumerate(result.power["B"]):
        if p >= 0:
            soc -= inputs.tau / bat.capacity_wh * p / bat.eta_dh
        else:
            soc -= inputs.tau / bat.capacity_wh * bat.eta_ch * p
        assert soc == pytest.approx(result.soc["B"][i + 1], abs=1e-8)
    print("[OK] SOC trajectory matches re-simulation")

    assert result.modes["PV"] == 1 and not curtailing_units(result)
    print("[OK] No PV at night, no curtailment")


def test_curtailment():
    """Surplus PV with a full battery and D pinned ON forces curtailment"""
    print("\n Testing curtailment...")
    inputs = make_inputs(5000.0, 30000.0, horizon=3, soc=0.9)
    result = plan(inputs, [BATTERY, DIESEL, PV], WEIGHTS, [{"terms": {"D": 1}, "sense": ">=", "rhs": 1}], OPTS)
    assert not result.flagged
    assert result.modes["D"] == 1
    assert result.modes["PV"] == 0
    assert result.curtail["PV"][0] >= 1.0
    assert curtailing_units(result) == ["PV"]
    assert max(abs(r) for r in result.balance_residual) <= 1e-5
    print(f"[OK] PV curtails {result.curtail['PV'][0] / 1000:.2f} kW")


def test_enumeration_oracle():
    """Tiny instance equals exhaustive enumeration"""
    print("\n Testing enumeration oracle...")
    inputs = make_inputs(6000.0, horizon=1)
    problem = build_problem(inputs, [BATTERY, DIESEL], WEIGHTS)
    assert len(problem.binary_indices) == 2
    oracle = enumerate_miqp(problem)
    result = plan(inputs, [BATTERY, DIESEL], WEIGHTS)
    assert result.objective == pytest.approx(oracle.objective, abs=1e-6 * (1 + abs(oracle.objective)))
    print("[OK] Plan objective equals the oracle")


def test_fallback_and_freeze():
    """Infeasible instances fall back; frozen modes stay at their previous values"""
    print("\n Testing fallback and mode freeze...")
    inputs = make_inputs(100000.0, horizon=2)
    result = plan(inputs, [BATTERY, DIESEL], WEIGHTS)
    assert result.infeasible and result.flagged
    assert result.p_ref["B"] == 0.0
    assert result.p_ref["D"] == pytest.approx(0.5 * (DIESEL.p_min + DIESEL.p_max))
    assert all(mode == 1 for mode in result.modes.values())
    print("[OK] Fallback plan")

    inputs = make_inputs(5000.0, horizon=3, prev_modes={"B": 0, "D": 1, "PV": 1})
    result = plan(inputs, [BATTERY, DIESEL, PV], WEIGHTS, opts=EmsOptions(freeze_from=1))
    assert result.mode_trajectory["B"][1:] == [0, 0]
    assert result.mode_trajectory["D"][1:] == [1, 1]
    print("[OK] Modes frozen from step 1")

    payload = result.to_dict()
    assert set(payload["p_ref_w"]) == {"B", "D", "PV"}
    print("[OK] Plan serializes")


def main():
    """Run all tests"""
    print("=" * 60)
    print("DCMG EMS Test Suite")
    print("=" * 60)

    try:
        test_load_estimate()
        test_layout()
        test_zero_plan()
        test_plan_invariants()
        test_curtailment()
        test_enumeration_oracle()
        test_fallback_and_freeze()

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
