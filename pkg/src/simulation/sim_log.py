"""
Simulation Log - Per-minute records, controller events and run summaries
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Tuple

import numpy as np
import pandas as pd

EVENT_KINDS = (
    "ems_plan",
    "ems_fallback",
    "ems_iter_limit",
    "topology_change",
    "secondary",
    "secondary_failure",
    "soc_clamp",
    "uniqueness_violation",
    "load_flow_failure",
)

# events that make a run unsuccessful
FLAG_KINDS = (
    "ems_fallback",
    "ems_iter_limit",
    "secondary_failure",
    "soc_clamp",
    "uniqueness_violation",
    "load_flow_failure",
)


@dataclass
class SimLog:
    records: List[Dict[str, Any]] = field(default_factory=list)
    events: List[Dict[str, Any]] = field(default_factory=list)
    aborted: bool = False

    def add_event(self, kind: str, time_s: float, **data):
        if kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {kind!r}")
        self.events.append({"kind": kind, "time_s": float(time_s), **data})

    @property
    def flags(self) -> List[Dict[str, Any]]:
        return [e for e in self.events if e["kind"] in FLAG_KINDS]

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame.from_records(self.records)

    def column(self, prefix: str) -> List[str]:
        if not self.records:
            return []
        return [k for k in self.records[0] if k.startswith(prefix)]


def _clean(value: Any) -> Any:
    """JSON-safe copy: NaN/inf become None, numpy scalars become Python numbers"""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def dumps(payload: Any) -> str:
    """Deterministic JSON text"""
    return json.dumps(_clean(payload), sort_keys=True, indent=2)


def write_log(log: SimLog, out_dir, prefix: str = "sim") -> Tuple[Path, Path]:
    """
    Write the per-minute table as CSV and the events as JSON lines

    Returns:
        (csv path, jsonl path)
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{prefix}_log.csv"
    events_path = out / f"{prefix}_events.jsonl"
    log.frame().to_csv(csv_path, index=False, float_format="%.9g")
    with open(events_path, "w", encoding="utf-8") as f:
        for event in log.events:
            f.write(json.dumps(_clean(event), sort_keys=True) + "\n")
    return csv_path, events_path


def summarize(log: SimLog) -> Dict[str, Any]:
    """Voltage and SOC ranges, curtailed energy, EMS objective trace, flag counts, conservation"""
    summary: Dict[str, Any] = {
        "records": len(log.records),
        "aborted": log.aborted,
        "flags": {},
        "ems_objective": [e.get("objective") for e in log.events if e["kind"] == "ems_plan"],
    }
    for event in log.flags:
        summary["flags"][event["kind"]] = summary["flags"].get(event["kind"], 0) + 1
    if not log.records:
        summary.update({"voltage_range_v": None, "soc_range": None, "curtailed_energy_kwh": 0.0,
                        "max_balance_mismatch": 0.0, "duration_h": 0.0})
        return summary

    frame = log.frame()
    volts = frame[log.column("V_")].to_numpy(dtype=float)
    socs = frame[log.column("SOC_")].to_numpy(dtype=float)
    curtail = frame[log.column("curtail_")].to_numpy(dtype=float)
    times = frame["time_s"].to_numpy(dtype=float)
    dt_h = float(times[1] - times[0]) / 3600.0 if len(times) > 1 else 0.0

    summary["duration_h"] = float(times[-1] - times[0]) / 3600.0 + dt_h
    summary["voltage_range_v"] = [float(np.nanmin(volts)), float(np.nanmax(volts))] if volts.size else None
    summary["soc_range"] = [float(np.nanmin(socs)), float(np.nanmax(socs))] if socs.size else None
    summary["curtailed_energy_kwh"] = float(np.nansum(curtail) * dt_h / 1000.0)
    summary["max_balance_mismatch"] = float(frame["balance_rel"].max())
    summary["exact_fraction"] = float(frame["exact"].mean())
    return summary
