"""Tactic-constrained optimal waypoint planning on room sub-graphs."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

from sarsim.mapgrid import GridMap, line_of_sight
from sarsim.rooms import RoomGraph, room_route
from sarsim.subgraph import RoomSubGraph
from sarsim.tactics import Tactic


class InfeasiblePlanError(RuntimeError):
    """No permitted path exists for the requested tactic."""


@dataclass(frozen=True)
class Waypoint:
    position: tuple[float, float]
    essential: bool
    room_id: str


@dataclass
class SquadPlan:
    squad_id: str
    waypoints: list[Waypoint]
    tactics: dict[str, Tactic]
    notes: list[str] = field(default_factory=list)

    @property
    def length(self) -> float:
        total = 0.0
        for a, b in zip(self.waypoints, self.waypoints[1:]):
            total += math.hypot(b.position[0] - a.position[0],
                                b.position[1] - a.position[1])
        return total


def _heuristic(sg: RoomSubGraph, node: int, goal: int) -> float:
    ax, ay = sg.nodes[node].position
    bx, by = sg.nodes[goal].position
    return math.hypot(bx - ax, by - ay)


def a_star(sg: RoomSubGraph, start: int, goal: int, tactic: Tactic) -> list[int]:
    """Minimal-length node path using only edges permitting the tactic.

    The heuristic is the straight-line distance to the goal (admissible:
    edge lengths are Euclidean). Ties break on the smaller node id so plans
    are deterministic across platforms.
    """
    if start == goal:
        return [start]
    g_cost = {start: 0.0}
    parent: dict[int, int] = {}
    heap = [(_heuristic(sg, start, goal), start, 0.0)]
    closed: set[int] = set()
    while heap:
        _, node, g = heapq.heappop(heap)
        if node in closed:
            continue
        if node == goal:
            path = [node]
            while node != start:
                node = parent[node]
                path.append(node)
            return path[::-1]
        closed.add(node)
        for edge in sg.out_edges(node, tactic):
            if edge.dst in closed:
                continue
            ng = g + edge.length
            old = g_cost.get(edge.dst)
            if old is None or ng < old - 1e-12 or (abs(ng - old) <= 1e-12
                                                   and node < parent.get(edge.dst, node)):
                g_cost[edge.dst] = ng
                parent[edge.dst] = node
                heapq.heappush(heap, (ng + _heuristic(sg, edge.dst, goal), edge.dst, ng))
    raise InfeasiblePlanError(
        f"room {sg.room_id}: node {goal} unreachable from {start} under {tactic.value}")


def shortest_paths_from(sg: RoomSubGraph, src: int, tactic: Tactic
                        ) -> tuple[dict[int, float], dict[int, int]]:
    """Dijkstra distances and parents from src over permitted edges."""
    dist = {src: 0.0}
    parent: dict[int, int] = {}
    heap = [(0.0, src)]
    done: set[int] = set()
    while heap:
        d, node = heapq.heappop(heap)
        if node in done:
            continue
        done.add(node)
        for edge in sg.out_edges(node, tactic):
            nd = d + edge.length
            old = dist.get(edge.dst)
            if old is None or nd < old - 1e-12:
                dist[edge.dst] = nd
                parent[edge.dst] = node
                heapq.heappush(heap, (nd, edge.dst))
    return dist, parent


def _extract(parent: dict[int, int], src: int, dst: int) -> list[int]:
    path = [dst]
    while dst != src:
        dst = parent[dst]
        path.append(dst)
    return path[::-1]


def plan_room(sg: RoomSubGraph, entry: int, exit: int, tactic: Tactic) -> list[int]:
    """Optimal in-room path from entry to exit under the tactic.

    A wall tactic with entry == exit is interpreted as a full wall circuit
    (single-entry search), not the trivial zero-length path.
    """
    if entry == exit and tactic.is_wall:
        return plan_room_single_entry_wall(sg, entry, tactic)
    return a_star(sg, entry, exit, tactic)


def plan_room_single_entry_free(sg: RoomSubGraph, entry: int) -> list[int]:
    """Greedy coverage walk visiting every visibility node, then back to entry.

    From the current node, extend along the shortest permitted path to the
    nearest unvisited visibility node (ties on node id); any visibility node
    passed en route counts as visited.
    """
    remaining = set(sg.visibility_nodes)
    remaining.discard(entry)
    walk = [entry]
    current = entry
    while remaining:
        dist, parent = shortest_paths_from(sg, current, Tactic.FREE)
        best = None
        for node in sorted(remaining):
            d = dist.get(node)
            if d is None:
                continue
            if best is None or d < best[0] - 1e-12:
                best = (d, node)
        if best is None:
            missing = min(remaining)
            raise InfeasiblePlanError(
                f"room {sg.room_id}: visibility node {missing} unreachable from {current}")
        segment = _extract(parent, current, best[1])
        walk.extend(segment[1:])
        remaining.difference_update(segment)
        current = best[1]
    if current != entry:
        walk.extend(a_star(sg, current, entry, Tactic.FREE)[1:])
    return walk


def plan_room_single_entry_wall(sg: RoomSubGraph, entry: int, tactic: Tactic) -> list[int]:
    """Wall circuit of a single-entry room: step one margin in the tactic's
    chirality, then plan back to the entry over permitted edges only.

    Backtracking edges carry the opposite chirality, so the returned path is
    forced around the room along the wall.
    """
    if not tactic.is_wall:
        raise ValueError("wall circuit requires a wall tactic")
    first = None
    for edge in sg.out_edges(entry, tactic):
        if first is None or (edge.length, edge.dst) < first[:2]:
            first = (edge.length, edge.dst)
    if first is None:
        raise InfeasiblePlanError(
            f"room {sg.room_id}: no wall-band neighbor of node {entry} "
            f"in {tactic.value} direction")
    circuit = a_star(sg, first[1], entry, tactic)
    return [entry] + circuit


@dataclass(frozen=True)
class MissionEndpoint:
    room: str
    point: tuple[float, float] | None = None  # None: search the room

    @property
    def search(self) -> bool:
        return self.point is None


def _nearest_visible_node(sg: RoomSubGraph, grid: GridMap,
                          point: tuple[float, float],
                          tactic: Tactic | None = None) -> int:
    """Nearest graph node with line of sight from the point.

    For a wall tactic, only nodes with at least one permitted out-edge
    qualify (a squad hugging the wall must first walk to the wall band).
    """
    best = None
    for node in sg.nodes:
        d = math.hypot(node.position[0] - point[0], node.position[1] - point[1])
        if best is not None and d >= best[0] - 1e-12:
            continue
        if tactic is not None and tactic.is_wall:
            if not any(True for _ in sg.out_edges(node.id, tactic)):
                continue
        if line_of_sight(grid, point, node.position):
            best = (d, node.id)
    if best is None:
        raise InfeasiblePlanError(
            f"room {sg.room_id}: no graph node visible from point {point}")
    return best[1]


def _room_tactic(tactics: dict[str, Tactic] | Tactic, room_id: str) -> Tactic:
    """Room tactic lookup; a dict may carry a default under the key "*"."""
    if isinstance(tactics, Tactic):
        return tactics
    return tactics.get(room_id, tactics.get("*", Tactic.FREE))


def plan_mission(rg: RoomGraph, grid: GridMap, squad_id: str,
                 start: MissionEndpoint, goal: MissionEndpoint,
                 tactics: dict[str, Tactic] | Tactic) -> SquadPlan:
    """Concatenate per-room optimal paths into a squad waypoint plan.

    Rooms are traversed along the shortest room sequence. Within each room
    the room's tactic applies; a search goal (no goal point) in a
    single-entry room triggers the coverage walk (FREE) or wall circuit
    (LHR/RHR). Start, goal, and doorway waypoints are flagged essential.
    Infeasible wall searches fall back to FREE for that room, recorded in
    the plan notes.
    """
    if start.point is None:
        raise InfeasiblePlanError("mission start needs an explicit point")
    rooms, doors = room_route(rg, start.room, goal.room)
    notes: list[str] = []
    plan_tactics: dict[str, Tactic] = {r: _room_tactic(tactics, r) for r in rooms}

    waypoints: list[Waypoint] = [Waypoint(start.point, True, start.room)]

    def run_in_room(room_id: str, fn, *args):
        """Run a per-room planner, falling back to FREE when a wall tactic fails."""
        try:
            return fn(*args)
        except InfeasiblePlanError as err:
            tactic = plan_tactics[room_id]
            if not tactic.is_wall:
                raise InfeasiblePlanError(f"room {room_id}: {err}") from err
            notes.append(f"room {room_id}: {tactic.value} infeasible, fell back to FREE "
                         f"({err})")
            plan_tactics[room_id] = Tactic.FREE
            return None

    def append_nodes(sg: RoomSubGraph, node_path: list[int], room_id: str,
                     essential_last: bool):
        for k, nid in enumerate(node_path):
            pos = sg.nodes[nid].position
            essential = essential_last and k == len(node_path) - 1
            if waypoints and waypoints[-1].position == pos:
                if essential and not waypoints[-1].essential:
                    waypoints[-1] = Waypoint(pos, True, waypoints[-1].room_id)
                continue
            waypoints.append(Waypoint(pos, essential, room_id))

    current_node = None
    for idx, room_id in enumerate(rooms):
        sg = rg.rooms[room_id].sub_graph
        if sg is None:
            raise InfeasiblePlanError(f"room {room_id} has no planning sub-graph")
        tactic = plan_tactics[room_id]
        if current_node is None:
            try:
                current_node = _nearest_visible_node(sg, grid, start.point, tactic)
            except InfeasiblePlanError:
                if not tactic.is_wall:
                    raise
                current_node = _nearest_visible_node(sg, grid, start.point)
        last_room = idx == len(rooms) - 1
        if not last_room:
            door = doors[idx]
            exit_node = sg.entry_nodes[door.id]
            path = run_in_room(room_id, plan_room, sg, current_node, exit_node, tactic)
            if path is None:
                path = plan_room(sg, current_node, exit_node, plan_tactics[room_id])
            append_nodes(sg, path, room_id, essential_last=True)
            next_sg = rg.rooms[rooms[idx + 1]].sub_graph
            current_node = next_sg.entry_nodes[door.id]
            continue
        if goal.search:
            if len(rg.rooms[room_id].entry_doorways) != 1:
                raise InfeasiblePlanError(
                    f"room {room_id}: search goals require a single-entry room")
            if tactic.is_wall:
                path = run_in_room(room_id, plan_room_single_entry_wall,
                                   sg, current_node, tactic)
                if path is None:
                    path = plan_room_single_entry_free(sg, current_node)
            else:
                path = plan_room_single_entry_free(sg, current_node)
            append_nodes(sg, path, room_id, essential_last=True)
        else:
            try:
                goal_node = _nearest_visible_node(sg, grid, goal.point, tactic)
            except InfeasiblePlanError:
                if not tactic.is_wall:
                    raise
                goal_node = _nearest_visible_node(sg, grid, goal.point)
            path = run_in_room(room_id, plan_room, sg, current_node, goal_node, tactic)
            if path is None:
                path = plan_room(sg, current_node, goal_node, plan_tactics[room_id])
            append_nodes(sg, path, room_id, essential_last=False)
            if not waypoints or waypoints[-1].position != goal.point:
                waypoints.append(Waypoint(goal.point, True, room_id))
            else:
                waypoints[-1] = Waypoint(goal.point, True, room_id)
    return SquadPlan(squad_id=squad_id, waypoints=waypoints,
                     tactics=plan_tactics, notes=notes)


def plan_to_text(plan: SquadPlan) -> str:
    """Plain-text serialization of a squad plan (CLI output format)."""
    lines = [f"squad {plan.squad_id} waypoints {len(plan.waypoints)} "
             f"length {plan.length:.6f}"]
    for room_id in sorted(plan.tactics):
        lines.append(f"tactic {room_id} {plan.tactics[room_id].value}")
    for note in plan.notes:
        lines.append(f"note {note}")
    for wp in plan.waypoints:
        flag = "essential" if wp.essential else "ordinary"
        lines.append(f"waypoint {wp.position[0]:.6f} {wp.position[1]:.6f} "
                     f"{flag} room {wp.room_id}")
    return "\n".join(lines) + "\n"
