#!/usr/bin/env python3
"""
DC Microgrid Control CLI
Command-line interface for closed-loop simulation, one-shot EMS / secondary solves and solvability analysis
"""
import sys
import argparse
import logging
from pathlib import Path

from config import Config
from src.ems import EmsOptions, curtailing_units, plan
from src.errors import DcmgError, SchemaError, SingularMatrixError
from src.network import apply_decisions, build_admittance, check_lemma_structure, load_vector
from src.powerflow import (
    LoadFlowOptions,
    LoadSnapshot,
    existence_certificate,
    feasibility_alpha,
    uniqueness_check,
)
from src.qp import MiqpOptions, QpOptions
from src.secondary import SecondaryOptions, SqpOptions, Translator, necessary_condition
from src.simulation import (
    RunOptions,
    apply_overrides,
    dumps,
    ems_inputs,
    instant_state,
    load_scenario,
    read_document,
    run,
    summarize,
    validate_scenario,
    write_log,
)

EXIT_OK = 0
EXIT_FLAGGED = 1
EXIT_SCHEMA = 2
EXIT_SINGULAR = 3


def parse_instant(text: str) -> int:
    """HH:MM -> seconds since midnight"""
    try:
        hours, minutes = text.split(":")
        seconds = int(hours) * 3600 + int(minutes) * 60
    except ValueError:
        raise argparse.ArgumentTypeError(f"instant must look like HH:MM, got {text!r}")
    if seconds < 0 or int(minutes) >= 60:
        raise argparse.ArgumentTypeError(f"invalid instant {text!r}")
    return seconds


def build_parser(settings) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="DC microgrid hierarchical control - EMS planning, secondary voltage control and simulation",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Full-day closed-loop simulation of the bundled 16-bus scenario
  python dcmg_cli.py simulate --scenario scenarios/dc16.json --out output

  # Two simulated hours with a shorter EMS horizon
  python dcmg_cli.py simulate --hours 2 --set horizon=8

  # One-shot EMS plan and voltage references at noon
  python dcmg_cli.py ems-plan --instant 12:00
  python dcmg_cli.py secondary --instant 12:00

  # Existence / uniqueness / necessary-condition report
  python dcmg_cli.py analyze --instant 12:00

  # Check a scenario file
  python dcmg_cli.py validate --scenario my_scenario.json
        """
    )
    parser.add_argument(
        "command",
        choices=["simulate", "ems-plan", "secondary", "analyze", "validate"],
        help="What to run"
    )
    parser.add_argument(
        "--scenario",
        default=settings.DEFAULT_SCENARIO,
        help=f"Scenario JSON file (default: {settings.DEFAULT_SCENARIO})"
    )
    parser.add_argument(
        "--out",
        default=settings.OUTPUT_DIR,
        help=f"Output directory (default: {settings.OUTPUT_DIR})"
    )
    parser.add_argument(
        "--hours",
        type=float,
        default=None,
        help="Simulated duration in hours (default: scenario duration)"
    )
    parser.add_argument(
        "--seed",
        type=int,
        default=None,
        help="Seed of the profile noise (default: scenario seed)"
    )
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Override a scenario field by dot-path, e.g. --set dgus.0.p_max=70 (repeatable)"
    )
    parser.add_argument(
        "--instant",
        type=parse_instant,
        default=12 * 3600,
        help="Instant HH:MM for ems-plan, secondary and analyze (default: 12:00)"
    )
    parser.add_argument(
        "-v", "--verbose",
        action="count",
        default=0,
        help="-v for progress, -vv for solver details"
    )
    return parser


def configure_logging(verbosity: int, settings):
    level = {0: getattr(logging, str(settings.LOG_LEVEL).upper(), logging.WARNING), 1: logging.INFO}.get(verbosity, logging.DEBUG)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def solver_options(settings):
    lf = dict(tol=settings.LF_TOL, step_tol=settings.LF_STEP_TOL, max_iter=settings.LF_MAX_ITER,
              banach_tol=settings.BANACH_TOL, banach_max_iter=settings.BANACH_MAX_ITER)
    secondary = SecondaryOptions(
        sqp=SqpOptions(max_iter=settings.SQP_MAX_ITER, feas_tol=settings.SQP_FEAS_TOL),
        exact_tol=settings.SECONDARY_EXACT_TOL,
    )
    return lf, secondary


def ems_options(scenario, settings) -> EmsOptions:
    return EmsOptions(
        epsilon=scenario.epsilon,
        freeze_from=scenario.freeze_from,
        miqp=MiqpOptions(
            node_limit=scenario.node_limit,
            integrality_tol=settings.BB_INTEGRALITY_TOL,
            qp=QpOptions(feas_tol=settings.QP_FEAS_TOL, opt_tol=settings.QP_OPT_TOL),
        ),
    )


def open_scenario(args):
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    return load_scenario(args.scenario, overrides)


def write_json(out_dir: str, name: str, payload) -> Path:
    path = Path(out_dir)
    path.mkdir(parents=True, exist_ok=True)
    target = path / name
    target.write_text(dumps(payload) + "\n", encoding="utf-8")
    return target


def hhmm(seconds: int) -> str:
    return f"{seconds // 3600:02d}{(seconds % 3600) // 60:02d}"


# ========================================
# COMMANDS
# ========================================

def cmd_simulate(args, settings) -> int:
    scenario = open_scenario(args)
    lf, secondary = solver_options(settings)
    opts = RunOptions(
        hours=args.hours,
        ems=ems_options(scenario, settings),
        secondary=secondary,
        load_flow=LoadFlowOptions(v_nominal=scenario.v_nominal, v_min=scenario.v_min, **lf),
    )
    print("=" * 60)
    print(f"SIMULATING {scenario.name}")
    print("=" * 60)
    log = run(scenario, opts)
    csv_path, events_path = write_log(log, args.out)
    summary = summarize(log)
    write_json(args.out, "summary.json", summary)

    print(f"[OK] {summary['records']} records written to {csv_path}")
    print(f"[OK] {len(log.events)} events written to {events_path}")
    if summary["voltage_range_v"]:
        lo, hi = summary["voltage_range_v"]
        print(f"  Voltage range: {lo:.3f} - {hi:.3f} V")
    if summary["soc_range"]:
        lo, hi = summary["soc_range"]
        print(f"  SOC range: {lo:.4f} - {hi:.4f}")
    print(f"  Curtailed energy: {summary['curtailed_energy_kwh']:.3f} kWh")
    print(f"  EMS solves: {len(summary['ems_objective'])}")
    if log.flags or log.aborted:
        for kind, count in sorted(summary["flags"].items()):
            print(f"[WARN] {kind}: {count}")
        if log.aborted:
            print("[FAIL] run aborted by a load-flow failure")
        return EXIT_FLAGGED
    return EXIT_OK


def _plan_at(args, scenario, settings):
    state = instant_state(scenario, args.instant)
    inputs = ems_inputs(scenario, args.instant, state.soc, state.modes)
    result = plan(inputs, scenario.dgus, scenario.weights, scenario.extra_constraints, ems_options(scenario, settings))
    return state, result


def cmd_ems_plan(args, settings) -> int:
    scenario = open_scenario(args)
    _, result = _plan_at(args, scenario, settings)
    path = write_json(args.out, f"ems_plan_{hhmm(args.instant)}.json", result.to_dict())
    print(f"[OK] EMS plan ({result.status}, objective {result.objective:.6g}) written to {path}")
    for name, p in sorted(result.p_ref.items()):
        print(f"  {name}: P_ref = {p / 1000:8.3f} kW, mode = {result.modes[name]}")
    for name in curtailing_units(result):
        print(f"  {name} curtails {result.curtail[name][0] / 1000:.3f} kW")
    if result.flagged:
        print("[WARN] plan is flagged (fallback or node limit)")
        return EXIT_FLAGGED
    return EXIT_OK


def cmd_secondary(args, settings) -> int:
    scenario = open_scenario(args)
    _, secondary = solver_options(settings)
    state, result = _plan_at(args, scenario, settings)
    topology = apply_decisions(scenario.topology, result.modes, scenario.dgus, state.pv_power)
    translator = Translator(scenario.dgus, scenario.v_nominal, scenario.v_min, scenario.v_max, secondary)
    loads = dict(state.loads)
    loads.update({node: inj for node, inj in topology.pv_injections})
    references = translator.translate(result, topology, loads, pv_available=state.pv_power, instant=args.instant)
    payload = {"plan": result.to_dict(), "secondary": references.to_dict()}
    path = write_json(args.out, f"secondary_{hhmm(args.instant)}.json", payload)
    print(f"[OK] Voltage references (cost {references.cost:.3e} W, exact={references.exact}) written to {path}")
    for name, v in sorted(references.references.items()):
        print(f"  {name}: V* = {v:.4f} V")
    return EXIT_OK


def cmd_analyze(args, settings) -> int:
    scenario = open_scenario(args)
    state, result = _plan_at(args, scenario, settings)
    topology = apply_decisions(scenario.topology, result.modes, scenario.dgus, state.pv_power)
    partition = build_admittance(topology)
    zip_loads = load_vector(topology, state.loads)
    loads = LoadSnapshot.from_loads(zip_loads)
    p_ref = [result.p_ref.get(u.name, 0.0) for u in scenario.dgus if u.node in topology.dgu_nodes]

    v_flat = [scenario.v_nominal] * partition.n
    report = {
        "instant_s": args.instant,
        "existence": existence_certificate(v_flat, loads, partition).to_dict(),
        "uniqueness": uniqueness_check(loads, scenario.v_min).to_dict(),
        "necessary": necessary_condition(p_ref, loads, partition).to_dict(),
        "structure": check_lemma_structure(partition, zip_loads).to_dict(),
    }
    alpha, _ = feasibility_alpha(loads, partition, alpha_seed=scenario.v_nominal, guard=settings.ALPHA_GUARD)
    report["feasibility_alpha_v"] = alpha
    path = write_json(args.out, f"analysis_{hhmm(args.instant)}.json", report)

    print(f"[OK] Analysis written to {path}")
    print(f"  Existence at V°: delta = {report['existence']['delta']:.4f}, solvable = {report['existence']['solvable']}")
    print(f"  Uniqueness: {'holds' if report['uniqueness']['holds'] else 'VIOLATED'}")
    print(f"  Necessary condition margin: {report['necessary']['margin_w']:.3f} W")
    print(f"  Feasibility witness alpha: {alpha:.6g} V")
    return EXIT_OK


def cmd_validate(args, settings) -> int:
    path = Path(args.scenario)
    data = apply_overrides(read_document(path), args.overrides)
    errors = validate_scenario(data, base_dir=path.parent)
    if errors:
        for error in errors:
            print(f"[FAIL] {error}")
        return EXIT_SCHEMA
    print(f"[OK] {path} is a valid scenario")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "ems-plan": cmd_ems_plan,
    "secondary": cmd_secondary,
    "analyze": cmd_analyze,
    "validate": cmd_validate,
}


def main(argv=None) -> int:
    settings = Config.from_env()
    args = build_parser(settings).parse_args(argv)
    configure_logging(args.verbose, settings)
    try:
        return COMMANDS[args.command](args, settings)
    except SchemaError as e:
        print(f"[FAIL] Scenario error: {e}")
        return EXIT_SCHEMA
    except SingularMatrixError as e:
        print(f"[FAIL] Singular matrix: {e}")
        return EXIT_SINGULAR if args.command == "analyze" else EXIT_FLAGGED
    except DcmgError as e:
        print(f"\n✗ Error: {e}")
        return EXIT_FLAGGED


if __name__ == "__main__":
    sys.exit(main())
