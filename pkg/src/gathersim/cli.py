"""Command-line front end: run one scenario, or sweep a parameter grid.

Exit codes: 0 when the outcome matches the scenario's expectation (or no
expectation was declared), 1 on an unexpected outcome or invariant failure,
2 on usage, parse or validation errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys

from .engine import COLLECT, FAIL_FAST, Gathered, InvariantViolation, Timeout, TraceSink, run
from .graph import GraphError, build_k2, build_ring, random_connected
from .scenarios import (
    GATHER,
    NEVER,
    Scenario,
    ScenarioError,
    SymmetryMonitor,
    instantiate,
    make_scenario,
    parse_scenario,
    scenario_hash,
    schedule,
)

USAGE_ERROR = 2
UNEXPECTED = 1


def _outcome_matches(expect: str | None, outcome) -> bool:
    if expect is None:
        return True
    if expect == GATHER:
        return isinstance(outcome, Gathered)
    return isinstance(outcome, Timeout)  # "never" means no gathering by the horizon


def run_command(args) -> int:
    try:
        with open(args.scenario, encoding="utf-8") as fh:
            scenario = parse_scenario(fh.read())
    except OSError as e:
        print(f"error: cannot read scenario: {e}", file=sys.stderr)
        return USAGE_ERROR
    except ScenarioError as e:
        print(f"error: {e}", file=sys.stderr)
        return USAGE_ERROR
    if args.profile:
        scenario = Scenario(
            scenario.graph,
            scenario.placement,
            scenario.program,
            scenario.advice,
            args.profile,
            scenario.seed,
            scenario.expect,
            scenario.ring_classes,
        )
    trace = TraceSink(args.trace_verbosity) if args.trace else None
    monitors = []
    monitor = None
    if scenario.ring_classes is not None:
        monitor = SymmetryMonitor(scenario.ring_classes)
        monitors.append(monitor)
    mode = FAIL_FAST if args.assertions == "fail-fast" else COLLECT
    try:
        world = instantiate(scenario, trace=trace, assertion_mode=mode, monitors=monitors)
        outcome = run(world, args.max_rounds)
    except InvariantViolation as e:
        print(f"invariant failure: {e}", file=sys.stderr)
        return UNEXPECTED
    except ScenarioError as e:
        print(f"error: {e}", file=sys.stderr)
        return USAGE_ERROR

    since = "-" if world.r0 is None else str(outcome.round_no - world.r0)
    print(f"outcome: {outcome.kind}")
    print(f"round: {outcome.round_no}")
    if isinstance(outcome, Gathered):
        print(f"node: {outcome.node}")
    print(f"rounds_since_first_wake: {since}")
    print(f"assertions: {len(world.violations)} recorded")
    for r, name, detail in world.violations:
        print(f"  round {r}: {name}: {detail}")
    if monitor is not None:
        print(f"symmetry_monitor: {'OK' if monitor.ok else f'VIOLATION{monitor.violation}'}")
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as fh:
            fh.write(trace.render())
        print(f"trace: {args.trace}")
    ok = (
        _outcome_matches(scenario.expect, outcome)
        and not world.violations
        and (monitor is None or monitor.ok)
    )
    return 0 if ok else UNEXPECTED


def _grid_graphs(spec) -> list[tuple[str, object]]:
    out = []
    for entry in spec:
        if "ring" in entry:
            out.append((f"ring{entry['ring']}", build_ring(entry["ring"])))
        elif "k2" in entry:
            out.append(("k2", build_k2()))
        elif "random" in entry:
            n, m, seed = entry["random"]
            out.append((f"rand{n}m{m}s{seed}", random_connected(n, m, seed)))
        else:
            raise ScenarioError(f"unknown graph spec {entry!r}")
    return out


def _grid_schedule(name: str, k: int):
    if name == "all_at_1":
        return schedule("all_at_1", k)
    if name.startswith("staggered:"):
        return schedule("staggered", k, delta=int(name.split(":", 1)[1]))
    if name.startswith("subset:"):
        awake = [int(x) for x in name.split(":", 1)[1].split(",")]
        return schedule("subset_never", k, awake=awake)
    if name.startswith("random:"):
        seed = int(name.split(":", 1)[1])
        return schedule("random", k, seed=seed)
    raise ScenarioError(f"unknown schedule {name!r}")


def sweep_cells(grid: dict) -> list[dict]:
    graphs = _grid_graphs(grid.get("graphs", []))
    teams = [tuple(t) for t in grid.get("teams", [])]
    schedules = grid.get("schedules", ["all_at_1"])
    profiles = grid.get("profiles", ["desk"])
    programs = grid.get("programs", ["hg"])
    max_rounds = int(grid.get("max_rounds", 100000))
    expect = grid.get("expect")
    cells = []
    for team in teams:
        for gname, graph in graphs:
            if len(team) > graph.n:
                continue
            for sched in schedules:
                for profile in profiles:
                    for program in programs:
                        cells.append((team, gname, graph, sched, profile, program))
    rows = []
    for team, gname, graph, sched, profile, program in cells:
        wakes = _grid_schedule(sched, len(team))
        scenario = make_scenario(graph, team, wakes, program, profile, expect=expect)
        world = instantiate(scenario, assertion_mode=COLLECT)
        outcome = run(world, max_rounds)
        since = -1 if world.r0 is None else outcome.round_no - world.r0
        rows.append(
            {
                "scenario_hash": scenario_hash(scenario),
                "team": "+".join(str(x) for x in team),
                "n": graph.n,
                "schedule": sched,
                "profile": profile,
                "program": program,
                "outcome": outcome.kind,
                "rounds_since_r0": since,
                "violations": len(world.violations),
                "expected": "" if expect is None else _outcome_matches(expect, outcome),
            }
        )
    rows.sort(key=lambda r: (r["team"], r["n"], r["schedule"], r["profile"], r["program"]))
    return rows


def render_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    fields = [
        "scenario_hash", "team", "n", "schedule", "profile", "program",
        "outcome", "rounds_since_r0", "violations", "expected",
    ]
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


def sweep_command(args) -> int:
    try:
        with open(args.grid, encoding="utf-8") as fh:
            grid = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        print(f"error: cannot read grid: {e}", file=sys.stderr)
        return USAGE_ERROR
    try:
        rows = sweep_cells(grid)
    except (ScenarioError, GraphError) as e:
        print(f"error: {e}", file=sys.stderr)
        return USAGE_ERROR
    text = render_csv(rows)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    failures = sum(1 for r in rows if r["expected"] is False)
    print(f"# {len(rows)} cells, {failures} unexpected", file=sys.stderr)
    return 0 if failures == 0 else UNEXPECTED


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="gathersim",
        description="Deterministic gathering simulator for homonymous mobile agents",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario file")
    p_run.add_argument("scenario")
    p_run.add_argument("--max-rounds", type=int, default=100000, dest="max_rounds")
    p_run.add_argument("--profile", default=None)
    p_run.add_argument("--trace", default=None, help="write the round trace to this path")
    p_run.add_argument(
        "--trace-verbosity", type=int, default=1, choices=(0, 1, 2), dest="trace_verbosity"
    )
    p_run.add_argument(
        "--assert", choices=("fail-fast", "collect"), default="fail-fast", dest="assertions"
    )
    p_run.set_defaults(func=run_command)

    p_sweep = sub.add_parser("sweep", help="run a JSON parameter grid, emit CSV")
    p_sweep.add_argument("grid")
    p_sweep.add_argument("--out", default=None)
    p_sweep.set_defaults(func=sweep_command)

    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return USAGE_ERROR if e.code not in (0, None) else 0
    if args.max_rounds < 1 if hasattr(args, "max_rounds") else False:
        print("error: --max-rounds must be >= 1", file=sys.stderr)
        return USAGE_ERROR
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
