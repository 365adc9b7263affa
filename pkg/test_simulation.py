"""
Test suite for scenarios and the closed-loop simulation
"""
import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from src.ems import ems_planner
from src.errors import SchemaError
from src.network import BatteryParams
from src.qp import SolveStatus
from src.simulation import (
    RunOptions,
    apply_overrides,
    load_scenario,
    parse_scenario,
    read_document,
    run,
    save_scenario,
    scenario_to_dict,
    soc_integrate,
    summarize,
    validate_scenario,
    write_log,
)

SCENARIO = Path(__file__).parent / "scenarios" / "dc16.json"
OUT = Path(__file__).parent / "test_output"


def idle_scenario(duration_s: float = 3600.0) -> dict:
    """One battery feeding one empty load node"""
    return {
        "name": "idle",
        "v_nominal": 100.0,
        "duration_s": duration_s,
        "horizon": 4,
        "nodes": {"dgu": ["1"], "load": ["2"]},
        "edges": [["1", "2", 0.5]],
        "dgus": [{
            "name": "B", "node": "1", "kind": "battery", "p_min": -10000, "p_max": 10000, "r_filter": 0.1,
            "battery": {"capacity": 50000, "soc_nominal": 0.5},
        }],
        "loads": [{"node": "2", "i": 0.0, "y": 0.0, "p": 0.0}],
        "weights": {"B": {"power": 0.1, "switch": 5e7, "soc_slack": 2.5e9}},
    }


def test_soc_integrate():
    """Test the SOC update"""
    print("\n Testing SOC integration...")
    battery = BatteryParams(capacity_wh=50000.0, eta_ch=0.9, eta_dh=0.9)

    soc, clamped = soc_integrate(0.5, 10000.0, battery, 0.25)
    assert soc == pytest.approx(0.5 - 0.25 / 50 * 10 / 0.9)
    assert round(soc, 4) == 0.4444 and not clamped
    print("[OK] Discharge: 0.4444")

    soc, _ = soc_integrate(0.5, -9000.0, battery, 0.25)
    assert round(soc, 4) == 0.5405
    print("[OK] Charge: 0.5405")

    assert soc_integrate(0.37, 0.0, battery, 0.25) == (0.37, False)
    print("[OK] Zero power leaves SOC unchanged")

    soc, clamped = soc_integrate(0.01, 10000.0, battery, 1.0)
    assert soc == 0.0 and clamped
    print("[OK] Saturation is clamped and flagged")


def test_scenario_file():
    """Test loading, saving and overriding scenarios"""
    print("\n Testing scenario files...")
    scenario = load_scenario(SCENARIO)
    assert scenario.topology.n == 6 and scenario.topology.m == 10
    assert scenario.dgu("D1").p_max == pytest.approx(80000.0)
    assert scenario.dgu("B4").battery.capacity_wh == pytest.approx(200000.0)
    assert scenario.extra_constraints == [{"terms": {"D1": 1, "D2": 1}, "sense": ">=", "rhs": 1}]
    print("[OK] 16-bus scenario in W")

    OUT.mkdir(exist_ok=True)
    try:
        saved = save_scenario(scenario, OUT / "copy.json")
        again = load_scenario(saved)
        assert scenario_to_dict(again) == scenario_to_dict(scenario)
        assert read_document(saved)["units"]["power"] == "kW"
        print("[OK] Saved scenario reloads unchanged")
    finally:
        shutil.rmtree(OUT, ignore_errors=True)

    data = read_document(SCENARIO)
    changed = apply_overrides(data, ["horizon=8", "dgus.2.battery.soc_initial=0.3", "name=short"])
    assert changed["horizon"] == 8 and changed["name"] == "short"
    assert changed["dgus"][2]["battery"]["soc_initial"] == 0.3
    assert data["horizon"] == 20
    assert parse_scenario(changed).initial_soc["B3"] == 0.3
    print("[OK] Overrides")


def test_scenario_errors():
    """Test schema validation"""
    print("\n Testing schema errors...")
    data = idle_scenario()
    data["profiles"] = {"empty": {"points": []}}
    errors = validate_scenario(data)
    assert [e.field for e in errors] == ["profiles.empty.points"]
    with pytest.raises(SchemaError):
        parse_scenario(data)
    print("[OK] Empty profile rejected")

    data = idle_scenario()
    data["edges"] = [["1", "2", -1.0]]
    data["clocks"] = {"ems_period_s": 900, "secondary_period_s": 200, "load_period_s": 60}
    fields = {e.field for e in validate_scenario(data)}
    assert {"edges", "clocks"} <= fields
    print("[OK] Every violation reported")

    with pytest.raises(SchemaError):
        apply_overrides(idle_scenario(), ["horizon"])
    print("[OK] Malformed override rejected")


def test_idle_run():
    """No load and no PV keep the grid flat and the SOC constant"""
    print("\n Testing idle run...")
    log = run(parse_scenario(idle_scenario()))
    assert not log.aborted and not log.flags
    assert len(log.records) == 60
    frame = log.frame()
    assert np.allclose(frame[["V_1", "V_2"]].to_numpy(), 100.0, atol=1e-6)
    assert np.allclose(frame["P_B"].to_numpy(), 0.0, atol=1e-6)
    assert np.allclose(frame["SOC_B"].to_numpy(), 0.5, atol=1e-9)
    print("[OK] Flat 100 V, no power, constant SOC")

    empty = run(parse_scenario(idle_scenario(0.0)))
    assert empty.records == [] and summarize(empty)["records"] == 0
    print("[OK] Zero duration gives an empty log")


def test_short_run():
    """A quarter hour of the 16-bus scenario"""
    print("\n Testing 16-bus run...")
    scenario = load_scenario(SCENARIO, ["horizon=4"])
    log = run(scenario, RunOptions(hours=0.25))
    assert not log.aborted
    assert len(log.records) == 15
    assert sum(e["kind"] == "ems_plan" for e in log.events) == 1
    assert sum(e["kind"] == "secondary" for e in log.events) == 5
    print("[OK] One EMS plan, five secondary instants, fifteen load steps")

    frame = log.frame()
    assert frame["balance_rel"].max() <= 1e-6
    print("[OK] Power balanced at every minute")

    battery = scenario.dgu("B3").battery
    soc = frame["SOC_B3"].to_numpy()
    power = frame["P_B3"].to_numpy()
    for k in range(len(soc) - 1):
        expected, _ = soc_integrate(soc[k], power[k], battery, 1.0 / 60.0)
        assert expected == pytest.approx(soc[k + 1], abs=1e-9)
    print("[OK] Logged SOC matches re-integration")

    summary = summarize(log)
    assert summary["records"] == 15
    assert summary["duration_h"] == pytest.approx(0.25)

    OUT.mkdir(exist_ok=True)
    try:
        csv_path, events_path = write_log(log, OUT)
        assert csv_path.exists() and events_path.exists()
        first = json.loads(events_path.read_text(encoding="utf-8").splitlines()[0])
        assert first["kind"] == "ems_plan"
        print("[OK] Log files written")
    finally:
        shutil.rmtree(OUT, ignore_errors=True)

def test_ems_node_limit_flag():
    """A plan cut short by the node limit is used and flagged"""
    print("\n Testing EMS node-limit flag...")
    solve = ems_planner.solve_miqp

    def capped(problem, opts=None):
        report = solve(problem, opts)
        report.status = SolveStatus.ITER_LIMIT
        return report

    with pytest.MonkeyPatch.context() as patch:
        patch.setattr(ems_planner, "solve_miqp", capped)
        log = run(parse_scenario(idle_scenario(900.0)))

    kinds = [e["kind"] for e in log.events]
    assert kinds.count("ems_plan") == 1 and kinds.count("ems_iter_limit") == 1
    assert "ems_fallback" not in kinds
    assert [e["kind"] for e in log.flags] == ["ems_iter_limit"]
    assert len(log.records) == 15 and summarize(log)["records"] == 15
    print("[OK] Incumbent plan applied, ems_iter_limit flagged")


def test_multi_hour_run():
    """Two hours of the 16-bus scenario: conservation and reference tracking"""
    print("\n Testing two-hour 16-bus run...")
    log = run(load_scenario(SCENARIO, ["horizon=4"]), RunOptions(hours=2.0))
    assert not log.aborted and len(log.records) == 120
    frame = log.frame()
    assert frame["balance_rel"].max() <= 1e-6
    print("[OK] Power balanced at all 120 minutes")

    exact = [e for e in log.events if e["kind"] == "secondary" and e["exact"]]
    assert exact
    rows = frame.set_index("time_s")
    for event in exact:
        row = rows.loc[int(event["time_s"])]
        for name in event["references_v"]:
            assert abs(row[f"P_{name}"] - row[f"Pref_{name}"]) <= 1e-2
    print(f"[OK] Realized powers track the references at {len(exact)} exact secondary instants")



def main():
    """Run all tests"""
    print("=" * 60)
    print("DCMG Simulation Test Suite")
    print("=" * 60)

    try:
        test_soc_integrate()
        test_scenario_file()
        test_scenario_errors()
        test_idle_run()
        test_short_run()
        test_ems_node_limit_flag()
        test_multi_hour_run()

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
