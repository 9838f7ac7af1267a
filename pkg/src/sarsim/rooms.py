"""Rooms-as-nodes / doorways-as-edges building representation."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import shapely

from sarsim.mapgrid import GridMap

EXTERIOR = "exterior"

# polygons may share boundary segments; anything beyond this overlap area
# (m^2) counts as a real overlap
_OVERLAP_TOL = 1e-9
_ADJACENCY_TOL = 1e-6


class RoomError(ValueError):
    """Invalid room annotation."""


class UnreachableError(RuntimeError):
    """No connected room sequence between the requested rooms."""


@dataclass
class Doorway:
    id: str
    room_a: str
    room_b: str
    segment: tuple[tuple[float, float], tuple[float, float]]

    @property
    def midpoint(self) -> tuple[float, float]:
        (x0, y0), (x1, y1) = self.segment
        return 0.5 * (x0 + x1), 0.5 * (y0 + y1)

    def other_room(self, room_id: str) -> str:
        return self.room_b if room_id == self.room_a else self.room_a


@dataclass
class Room:
    id: str
    polygon: shapely.Polygon
    entry_doorways: list[str] = field(default_factory=list)
    sub_graph: Optional[object] = None  # RoomSubGraph, filled once by graph building

    def cell_mask(self, grid: GridMap) -> np.ndarray:
        """Boolean (h, w) mask of free cells whose center lies in the room."""
        w = grid.resolution
        xs = grid.origin[0] + (np.arange(grid.width) + 0.5) * w
        ys = grid.origin[1] + (np.arange(grid.height) + 0.5) * w
        gx, gy = np.meshgrid(xs, ys)
        inside = shapely.contains_xy(self.polygon, gx.ravel(), gy.ravel())
        return inside.reshape(grid.height, grid.width) & ~grid.occupied

    def free_cell_centers(self, grid: GridMap) -> np.ndarray:
        iy, ix = np.nonzero(self.cell_mask(grid))
        w = grid.resolution
        return np.column_stack((grid.origin[0] + (ix + 0.5) * w,
                                grid.origin[1] + (iy + 0.5) * w))


@dataclass
class RoomGraph:
    rooms: dict[str, Room]
    doorways: dict[str, Doorway]

    def doorways_of(self, room_id: str) -> list[Doorway]:
        return [d for d in self.doorways.values()
                if room_id in (d.room_a, d.room_b)]

    def neighbors(self, room_id: str) -> list[tuple[str, Doorway]]:
        out = []
        for d in self.doorways_of(room_id):
            other = d.other_room(room_id)
            if other != EXTERIOR:
                out.append((other, d))
        return out


def _doorway_is_free(grid: GridMap, doorway: Doorway) -> bool:
    (x0, y0), (x1, y1) = doorway.segment
    length = math.hypot(x1 - x0, y1 - y0)
    n = max(2, int(length / (0.5 * grid.resolution)) + 1)
    for t in np.linspace(0.0, 1.0, n):
        x, y = x0 + t * (x1 - x0), y0 + t * (y1 - y0)
        if not grid.in_bounds_world(x, y) or grid.is_occupied_world(x, y):
            return False
    return True


def load_rooms(meta: dict, grid: GridMap) -> RoomGraph:
    """Validate a room-annotation record against the map.

    ``meta`` lists rooms (id, polygon vertices in meters) and doorways
    (id, room_a, room_b or "exterior", segment endpoints). Raises RoomError
    for unknown room references, overlapping room polygons, doorways not
    adjacent to both referenced rooms, or doorway segments in occupied space.
    """
    if not isinstance(meta, dict):
        raise RoomError("room annotation must be a mapping")
    for key in ("rooms", "doorways"):
        section = meta.get(key, [])
        if not isinstance(section, list) or not all(isinstance(s, dict)
                                                    for s in section):
            raise RoomError(f"{key!r} must be a list of records")
    rooms: dict[str, Room] = {}
    for spec in meta.get("rooms", []):
        if not {"id", "polygon"} <= spec.keys():
            raise RoomError(f"room record needs id and polygon: {spec!r}")
        rid = str(spec["id"])
        if rid in rooms or rid == EXTERIOR:
            raise RoomError(f"duplicate or reserved room id {rid!r}")
        poly = shapely.Polygon(spec["polygon"])
        if not poly.is_valid or poly.area <= 0:
            raise RoomError(f"room {rid!r} polygon is not a simple positive-area polygon")
        rooms[rid] = Room(id=rid, polygon=poly)

    ids = sorted(rooms)
    for i, ra in enumerate(ids):
        for rb in ids[i + 1:]:
            inter = rooms[ra].polygon.intersection(rooms[rb].polygon)
            if inter.area > _OVERLAP_TOL:
                raise RoomError(f"room polygons {ra!r} and {rb!r} overlap "
                                f"(area {inter.area:.3g} m^2)")

    doorways: dict[str, Doorway] = {}
    for spec in meta.get("doorways", []):
        if not {"id", "room_a", "room_b", "segment"} <= spec.keys():
            raise RoomError(f"doorway record needs id, rooms, segment: {spec!r}")
        did = str(spec["id"])
        if did in doorways:
            raise RoomError(f"duplicate doorway id {did!r}")
        room_a, room_b = str(spec["room_a"]), str(spec["room_b"])
        for ref in (room_a, room_b):
            if ref != EXTERIOR and ref not in rooms:
                raise RoomError(f"doorway {did!r} references unknown room {ref!r}")
        if room_a == room_b:
            raise RoomError(f"doorway {did!r} must join two distinct rooms")
        p0, p1 = spec["segment"]
        d = Doorway(id=did, room_a=room_a, room_b=room_b,
                    segment=(tuple(map(float, p0)), tuple(map(float, p1))))
        seg = shapely.LineString(d.segment)
        for ref in (room_a, room_b):
            if ref == EXTERIOR:
                continue
            if seg.distance(rooms[ref].polygon) > _ADJACENCY_TOL:
                raise RoomError(f"doorway {did!r} is not adjacent to room {ref!r}")
        if not _doorway_is_free(grid, d):
            raise RoomError(f"doorway {did!r} segment crosses occupied space")
        doorways[did] = d
        for ref in (room_a, room_b):
            if ref != EXTERIOR:
                rooms[ref].entry_doorways.append(did)

    for room in rooms.values():
        room.entry_doorways.sort()
    return RoomGraph(rooms=rooms, doorways=doorways)


def room_route(rg: RoomGraph, start: str, goal: str) -> tuple[list[str], list[Doorway]]:
    """Shortest room sequence plus the doorway chain realizing it.

    Cost of a sequence is the sum of Euclidean distances between the
    midpoints of consecutive doorways (through-room estimates); ties break
    on the lexicographically smaller room-id sequence.
    """
    for rid in (start, goal):
        if rid not in rg.rooms:
            raise RoomError(f"unknown room {rid!r}")
    if start == goal:
        return [start], []

    # states: (room, doorway entered through); lexicographic room path breaks ties
    heap: list[tuple[float, tuple[str, ...], str, tuple[str, ...], Optional[str]]] = [
        (0.0, (start,), start, (), None)]
    best: dict[tuple[str, Optional[str]], float] = {}
    while heap:
        cost, path, room, door_path, via = heapq.heappop(heap)
        if room == goal:
            return list(path), [rg.doorways[d] for d in door_path]
        key = (room, via)
        if key in best and cost > best[key] + 1e-12:
            continue
        for other, door in sorted(rg.neighbors(room), key=lambda nd: (nd[0], nd[1].id)):
            if via is None:
                step = 0.0
            else:
                ax, ay = rg.doorways[via].midpoint
                bx, by = door.midpoint
                step = math.hypot(bx - ax, by - ay)
            nkey = (other, door.id)
            ncost = cost + step
            if nkey in best and ncost >= best[nkey] - 1e-12:
                continue
            best[nkey] = ncost
            heapq.heappush(heap, (ncost, path + (other,), other,
                                  door_path + (door.id,), door.id))
    raise UnreachableError(f"no room sequence from {start!r} to {goal!r}")


def room_sequence(rg: RoomGraph, start: str, goal: str) -> list[str]:
    """Shortest room-id sequence from start to goal (see room_route)."""
    return room_route(rg, start, goal)[0]
