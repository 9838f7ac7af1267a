"""Scenario files: map + rooms + squads, and world construction from plans."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from sarsim.hsfm import (AgentState, ContactParams, WaypointTracker,
                         vision_control_params, vision_social_params)
from sarsim.mapgrid import GridMap, MapError, distance_transform, load_map
from sarsim.planner import MissionEndpoint, SquadPlan, plan_mission
from sarsim.rooms import RoomGraph, load_rooms
from sarsim.sim import SquadRuntime, World
from sarsim.subgraph import GraphConfig, build_all_subgraphs
from sarsim.tactics import Tactic


class ScenarioError(ValueError):
    """Invalid scenario file or referenced resources."""


@dataclass
class SquadScenario:
    id: str
    agents: int
    vision: str
    start: MissionEndpoint
    goal: MissionEndpoint
    tactic: Tactic = Tactic.FREE
    tactics: dict[str, Tactic] = field(default_factory=dict)
    start_poses: list[tuple[float, float, float]] | None = None

    def room_tactics(self) -> dict[str, Tactic] | Tactic:
        if self.tactics:
            return {"*": self.tactic, **self.tactics}
        return self.tactic


@dataclass
class Scenario:
    map_path: Path
    rooms_path: Path
    squads: list[SquadScenario]
    dt: float = 0.06
    t_max: float | None = None
    seed: int = 0
    graph: GraphConfig = field(default_factory=GraphConfig)
    contact: ContactParams = field(default_factory=ContactParams)
    base_dir: Path = Path(".")


def _parse_endpoint(spec: dict) -> MissionEndpoint:
    room = str(spec["room"])
    if spec.get("search"):
        return MissionEndpoint(room=room, point=None)
    point = spec["point"]
    return MissionEndpoint(room=room, point=(float(point[0]), float(point[1])))


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    if not path.exists():
        raise ScenarioError(f"scenario file not found: {path}")
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ScenarioError(f"scenario file {path} is not a mapping")
    base = path.parent
    try:
        squads = []
        for spec in data["squads"]:
            tactic = Tactic.parse(spec.get("tactic", "FREE"))
            overrides = {str(k): Tactic.parse(v)
                         for k, v in (spec.get("tactics") or {}).items()}
            poses = spec.get("start_poses")
            if poses is not None:
                poses = [(float(p[0]), float(p[1]), float(p[2])) for p in poses]
            squads.append(SquadScenario(
                id=str(spec["id"]),
                agents=int(spec.get("agents", 3)),
                vision=str(spec.get("vision", "free")),
                start=_parse_endpoint(spec["start"]),
                goal=_parse_endpoint(spec["goal"]),
                tactic=tactic,
                tactics=overrides,
                start_poses=poses))
        graph = GraphConfig(**(data.get("graph") or {}))
        contact = ContactParams(**(data.get("contact") or {}))
        return Scenario(
            map_path=base / data["map"],
            rooms_path=base / data["rooms"],
            squads=squads,
            dt=float(data.get("dt", 0.06)),
            t_max=float(data["t_max"]) if "t_max" in data else None,
            seed=int(data.get("seed", 0)),
            graph=graph,
            contact=contact,
            base_dir=base)
    except (KeyError, TypeError, ValueError) as err:
        if isinstance(err, ScenarioError):
            raise
        raise ScenarioError(f"invalid scenario {path}: {err}") from err


def load_map_files(meta_path: str | Path) -> GridMap:
    """Load a map from its metadata file (which names the graymap image)."""
    meta_path = Path(meta_path)
    if not meta_path.exists():
        raise MapError(f"map metadata file not found: {meta_path}")
    with open(meta_path) as fh:
        meta = yaml.safe_load(fh)
    if not isinstance(meta, dict) or "image" not in meta:
        raise MapError(f"map metadata {meta_path} must name an 'image' file")
    image_path = meta_path.parent / meta["image"]
    if not image_path.exists():
        raise MapError(f"map image not found: {image_path}")
    return load_map(image_path.read_bytes(), meta)


def load_rooms_file(rooms_path: str | Path, grid: GridMap) -> RoomGraph:
    rooms_path = Path(rooms_path)
    if not rooms_path.exists():
        raise ScenarioError(f"rooms file not found: {rooms_path}")
    with open(rooms_path) as fh:
        meta = yaml.safe_load(fh)
    return load_rooms(meta, grid)


@dataclass
class Mission:
    """Everything derived from a scenario up to (and including) planning."""

    scenario: Scenario
    grid: GridMap
    rooms: RoomGraph
    plans: dict[str, SquadPlan]

    def default_t_max(self) -> float:
        # termination bound: 10x the slowest-squad traversal estimate
        worst = 0.0
        for squad in self.scenario.squads:
            v_des = vision_control_params(squad.vision).v_des
            worst = max(worst, 10.0 * max(self.plans[squad.id].length, 1.0) / v_des)
        return worst


def prepare_mission(scenario: Scenario, tactic_override: Tactic | None = None
                    ) -> Mission:
    """Load resources, build all room sub-graphs, and plan every squad."""
    grid = load_map_files(scenario.map_path)
    rooms = load_rooms_file(scenario.rooms_path, grid)
    df = distance_transform(grid)
    cfg = replace(scenario.graph, seed_offset=scenario.graph.seed_offset + scenario.seed)
    build_all_subgraphs(rooms, grid, df, cfg)
    plans = {}
    for squad in scenario.squads:
        tactics = tactic_override if tactic_override is not None else squad.room_tactics()
        plans[squad.id] = plan_mission(rooms, grid, squad.id, squad.start,
                                       squad.goal, tactics)
    return Mission(scenario=scenario, grid=grid, rooms=rooms, plans=plans)


def _spawn_poses(grid: GridMap, plan: SquadPlan, count: int
                 ) -> list[tuple[float, float, float]]:
    """Deterministic squad spawn: leader on the start point, mates staggered
    behind it, skipping candidate offsets that fall into occupied space."""
    start = plan.waypoints[0].position
    if len(plan.waypoints) > 1:
        nxt = plan.waypoints[1].position
        heading = math.atan2(nxt[1] - start[1], nxt[0] - start[0])
    else:
        heading = 0.0
    back = (math.cos(heading + math.pi), math.sin(heading + math.pi))
    side = (math.cos(heading + math.pi / 2.0), math.sin(heading + math.pi / 2.0))
    poses = [(start[0], start[1], heading)]
    k = 1
    attempts = 0
    while len(poses) < count and attempts < 200:
        attempts += 1
        row, col = divmod(k, 2)
        lateral = 0.3 * (1 if col == 0 else -1)
        x = start[0] + 0.35 * row * back[0] + lateral * side[0]
        y = start[1] + 0.35 * row * back[1] + lateral * side[1]
        k += 1
        if grid.in_bounds_world(x, y) and not grid.is_occupied_world(x, y):
            poses.append((x, y, heading))
    while len(poses) < count:
        poses.append((start[0], start[1], heading))  # last resort: stacked spawn
    return poses


def build_world(mission: Mission, record_forces: bool = False,
                start_jitter: np.ndarray | None = None) -> World:
    """Instantiate agents, trackers, and squad runtimes for one simulation.

    ``start_jitter``, when given, is an (n_agents, 2) array of position
    offsets applied to the spawn poses (used for perturbation studies).
    """
    agents: list[AgentState] = []
    trackers: list[WaypointTracker] = []
    squads: list[SquadRuntime] = []
    jit = iter(start_jitter) if start_jitter is not None else None
    for squad in mission.scenario.squads:
        plan = mission.plans[squad.id]
        poses = squad.start_poses or _spawn_poses(mission.grid, plan, squad.agents)
        if len(poses) < squad.agents:
            raise ScenarioError(f"squad {squad.id}: {len(poses)} start poses for "
                                f"{squad.agents} agents")
        members = []
        for ai in range(squad.agents):
            x, y, theta = poses[ai]
            if jit is not None:
                dx, dy = next(jit)
                x, y = x + float(dx), y + float(dy)
            members.append(len(agents))
            agents.append(AgentState(x=x, y=y, theta=theta))
            trackers.append(WaypointTracker.from_plan_waypoints(
                plan.waypoints, vision=squad.vision))
        squads.append(SquadRuntime(
            squad_id=squad.id, members=members,
            control=vision_control_params(squad.vision),
            social=vision_social_params(squad.vision),
            vision=squad.vision))
    return World(grid=mission.grid, agents=agents, squads=squads,
                 trackers=trackers, contact=mission.scenario.contact,
                 record_forces=record_forces)
