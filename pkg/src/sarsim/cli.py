"""Command-line front end: plan, simulate, bench, and rooms validation.

Exit codes: 0 success, 1 input error, 2 infeasible plan, 3 simulation abort.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from sarsim.mapgrid import MapError
from sarsim.planner import InfeasiblePlanError, plan_to_text
from sarsim.rooms import RoomError, UnreachableError
from sarsim.scenario import (ScenarioError, build_world, load_map_files,
                             load_rooms_file, load_scenario, prepare_mission)
from sarsim.sim import SimulationAbort, bench, run
from sarsim.subgraph import dump_subgraph
from sarsim.tactics import Tactic

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_INFEASIBLE = 2
EXIT_ABORT = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sarsim",
        description="Tactic-informed squad motion prediction for indoor SAR")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--scenario", required=True, help="scenario YAML file")
        p.add_argument("--map", help="override the scenario's map metadata file")
        p.add_argument("--rooms", help="override the scenario's rooms file")
        p.add_argument("--tactic", help="override every squad tactic (FREE/WALL_LHR/WALL_RHR)")
        p.add_argument("--seed", type=int, help="override the scenario seed")
        p.add_argument("--dt", type=float, help="override the integration step (s)")
        p.add_argument("--out", default=".", help="output directory")

    p_plan = sub.add_parser("plan", help="plan squad waypoints and write them out")
    common(p_plan)
    p_plan.add_argument("--dump-graph", action="store_true",
                        help="also dump every room's planning graph")

    p_sim = sub.add_parser("simulate", help="plan and simulate trajectories")
    common(p_sim)

    p_bench = sub.add_parser("bench", help="repeat the simulation and report stats")
    common(p_bench)
    p_bench.add_argument("--reps", type=int, default=10, help="repetitions (>= 1)")

    p_rooms = sub.add_parser("rooms", help="validate a rooms annotation file")
    p_rooms.add_argument("--map", required=True)
    p_rooms.add_argument("--rooms", required=True)
    return parser


def _load(args):
    scenario = load_scenario(args.scenario)
    if args.map:
        scenario = replace(scenario, map_path=Path(args.map))
    if args.rooms:
        scenario = replace(scenario, rooms_path=Path(args.rooms))
    if args.seed is not None:
        scenario = replace(scenario, seed=args.seed)
    if args.dt is not None:
        if args.dt <= 0:
            raise ScenarioError(f"dt must be > 0, got {args.dt}")
        scenario = replace(scenario, dt=args.dt)
    try:
        tactic = Tactic.parse(args.tactic) if args.tactic else None
    except ValueError as err:
        raise ScenarioError(str(err)) from err
    return scenario, tactic


def cmd_plan(args) -> int:
    scenario, tactic = _load(args)
    mission = prepare_mission(scenario, tactic_override=tactic)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for squad_id, plan in sorted(mission.plans.items()):
        path = out / f"plan_{squad_id}.txt"
        path.write_text(plan_to_text(plan))
        print(f"squad {squad_id}: {len(plan.waypoints)} waypoints, "
              f"length {plan.length:.3f} m -> {path}")
    if args.dump_graph:
        for rid in sorted(mission.rooms.rooms):
            sg = mission.rooms.rooms[rid].sub_graph
            (out / f"graph_{rid}.txt").write_text(dump_subgraph(sg))
    return EXIT_OK


def cmd_simulate(args) -> int:
    scenario, tactic = _load(args)
    mission = prepare_mission(scenario, tactic_override=tactic)
    t_max = scenario.t_max if scenario.t_max is not None else mission.default_t_max()
    world = build_world(mission)
    traj = run(world, dt=scenario.dt, t_max=t_max)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "trajectory.csv"
    csv_path.write_text(traj.to_csv())
    status = "timeout" if traj.timed_out else "completed"
    print(f"{status}: t={traj.times[-1]:.2f}s, "
          f"mean path length {float(traj.path_lengths.mean()):.3f} m, "
          f"sim wall time {traj.sim_wall_time * 1e3:.1f} ms -> {csv_path}")
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.reps < 1:
        print("error: --reps must be >= 1", file=sys.stderr)
        return EXIT_INPUT
    scenario, tactic = _load(args)
    mission = prepare_mission(scenario, tactic_override=tactic)
    t_max = scenario.t_max if scenario.t_max is not None else mission.default_t_max()
    label = tactic.value if tactic else "+".join(
        sorted({s.tactic.value for s in scenario.squads}))
    report = bench(lambda: build_world(mission), label, args.reps,
                   dt=scenario.dt, t_max=t_max)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "bench.txt"
    path.write_text(report.to_text() + "\n")
    print(report.to_text())
    return EXIT_OK


def cmd_rooms(args) -> int:
    grid = load_map_files(args.map)
    rg = load_rooms_file(args.rooms, grid)
    print(f"ok: {len(rg.rooms)} rooms, {len(rg.doorways)} doorways")
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {"plan": cmd_plan, "simulate": cmd_simulate,
                "bench": cmd_bench, "rooms": cmd_rooms}
    try:
        return handlers[args.command](args)
    except (InfeasiblePlanError, UnreachableError) as err:
        print(f"infeasible: {err}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except SimulationAbort as err:
        print(f"simulation aborted: {err}", file=sys.stderr)
        return EXIT_ABORT
    except (MapError, RoomError, ScenarioError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
