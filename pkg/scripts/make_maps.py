#!/usr/bin/env python3
"""Generate the bundled maps, room annotations, and scenario files.

Re-running this script reproduces maps/ exactly; the outputs are committed
so users do not need to run it.
"""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import yaml

REPO = Path(__file__).resolve().parent.parent
MAPS = REPO / "maps"


def write_pgm(path: Path, occupied: np.ndarray):
    """occupied[iy, ix] with iy up; PGM rows are written top-down."""
    h, w = occupied.shape
    rows = np.where(occupied[::-1], 0, 255).astype(np.uint8)
    path.write_bytes(f"P5\n{w} {h}\n255\n".encode() + rows.tobytes())


class Builder:
    def __init__(self, width_m: float, height_m: float, res: float):
        self.res = res
        self.w = int(round(width_m / res))
        self.h = int(round(height_m / res))
        self.occ = np.zeros((self.h, self.w), dtype=bool)

    def _slice(self, x0, x1, y0, y1):
        r = self.res
        return (slice(int(round(y0 / r)), int(round(y1 / r))),
                slice(int(round(x0 / r)), int(round(x1 / r))))

    def fill(self, x0, x1, y0, y1):
        sy, sx = self._slice(x0, x1, y0, y1)
        self.occ[sy, sx] = True

    def clear(self, x0, x1, y0, y1):
        sy, sx = self._slice(x0, x1, y0, y1)
        self.occ[sy, sx] = False

    def border(self, thickness: float):
        t = int(round(thickness / self.res))
        self.occ[:t, :] = True
        self.occ[-t:, :] = True
        self.occ[:, :t] = True
        self.occ[:, -t:] = True


def rect(x0, y0, x1, y1):
    return [[x0, y0], [x1, y0], [x1, y1], [x0, y1]]


def dump(path: Path, data: dict):
    path.write_text(yaml.safe_dump(data, sort_keys=False))


def scenario(map_dir: Path, name: str, squad: dict, graph: dict | None = None,
             **extra):
    data = {"map": "map.yaml", "rooms": "rooms.yaml", "dt": 0.06,
            "squads": [squad]}
    if graph:
        data["graph"] = graph
    data.update(extra)
    dump(map_dir / f"{name}.yaml", data)


def make_studio():
    """Two-room studio: entry hall plus a single-entry main room. 128x84."""
    out = MAPS / "studio"
    out.mkdir(parents=True, exist_ok=True)
    b = Builder(6.4, 4.2, 0.05)
    b.border(0.1)
    b.fill(2.1, 2.2, 0.0, 4.2)  # divider
    b.clear(2.1, 2.2, 1.6, 2.4)  # doorway opening
    b.fill(4.3, 4.5, 1.4, 2.8)  # pillar in the main room
    write_pgm(out / "map.pgm", b.occ)
    dump(out / "map.yaml", {"image": "map.pgm", "resolution": 0.05,
                            "origin_x": 0.0, "origin_y": 0.0,
                            "occupied_threshold": 0.5})
    dump(out / "rooms.yaml", {
        "rooms": [
            {"id": "hall", "polygon": rect(0.1, 0.1, 2.15, 4.1)},
            {"id": "main", "polygon": rect(2.15, 0.1, 6.3, 4.1)},
        ],
        "doorways": [
            {"id": "d_main", "room_a": "hall", "room_b": "main",
             "segment": [[2.15, 1.65], [2.15, 2.35]]},
        ]})
    graph = {"fill_density": 2.0}
    wall_graph = {"fill_density": 4.0, "wall_band": 0.7, "connection_radius": 0.9}
    base = {"id": "alpha", "agents": 3,
            "start": {"room": "hall", "point": [1.0, 2.0]},
            "goal": {"room": "main", "search": True}}
    scenario(out, "free", {**base, "vision": "free", "tactic": "FREE"}, graph)
    scenario(out, "lhr", {**base, "vision": "restricted", "tactic": "WALL_LHR"}, wall_graph)
    scenario(out, "rhr", {**base, "vision": "restricted", "tactic": "WALL_RHR"}, wall_graph)


def make_flat():
    """Two larger rooms side by side (128x128) for coverage and wall runs."""
    out = MAPS / "flat"
    out.mkdir(parents=True, exist_ok=True)
    b = Builder(6.4, 6.4, 0.05)
    b.border(0.1)
    b.fill(3.1, 3.2, 0.0, 6.4)
    b.clear(3.1, 3.2, 2.7, 3.7)
    write_pgm(out / "map.pgm", b.occ)
    dump(out / "map.yaml", {"image": "map.pgm", "resolution": 0.05,
                            "origin_x": 0.0, "origin_y": 0.0,
                            "occupied_threshold": 0.5})
    dump(out / "rooms.yaml", {
        "rooms": [
            {"id": "west", "polygon": rect(0.1, 0.1, 3.15, 6.3)},
            {"id": "east", "polygon": rect(3.15, 0.1, 6.3, 6.3)},
        ],
        "doorways": [
            {"id": "d_east", "room_a": "west", "room_b": "east",
             "segment": [[3.15, 2.75], [3.15, 3.65]]},
        ]})
    graph = {"fill_density": 2.0}
    wall_graph = {"fill_density": 4.0, "wall_band": 0.7, "connection_radius": 1.2}
    base = {"id": "alpha", "agents": 3,
            "start": {"room": "west", "point": [0.7, 3.2]},
            "goal": {"room": "east", "search": True}}
    scenario(out, "free", {**base, "vision": "free", "tactic": "FREE"}, graph)
    scenario(out, "lhr", {**base, "vision": "restricted", "tactic": "WALL_LHR"}, wall_graph)
    scenario(out, "rhr", {**base, "vision": "restricted", "tactic": "WALL_RHR"}, wall_graph)


def make_office():
    """Office floor (324x164 @ 0.1 m): central corridor, six offices.

    The wall-search scenarios start just east of the north_0 door, so the
    left-hand route must loop the whole corridor before circling the office;
    the traversal lands on the order of the ~100 m runs reported for real
    buildings.
    """
    out = MAPS / "office"
    out.mkdir(parents=True, exist_ok=True)
    b = Builder(32.4, 16.4, 0.1)
    b.border(0.2)
    b.fill(0.2, 32.2, 6.4, 6.6)   # corridor south wall
    b.fill(0.2, 32.2, 9.8, 10.0)  # corridor north wall
    for x in (10.8, 21.6):  # office dividers
        b.fill(x, x + 0.2, 0.2, 6.4)
        b.fill(x, x + 0.2, 10.0, 16.2)
    doors = [1.2, 12.0, 22.8]
    for x in doors:
        b.clear(x, x + 1.0, 6.4, 6.6)   # south office doors
        b.clear(x, x + 1.0, 9.8, 10.0)  # north office doors
    write_pgm(out / "map.pgm", b.occ)
    dump(out / "map.yaml", {"image": "map.pgm", "resolution": 0.1,
                            "origin_x": 0.0, "origin_y": 0.0,
                            "occupied_threshold": 0.5})
    xs = [0.2, 10.9, 21.7, 32.2]
    rooms = [{"id": "corridor", "polygon": rect(0.2, 6.5, 32.2, 9.9)}]
    doorways = []
    for k in range(3):
        rooms.append({"id": f"south_{k}", "polygon": rect(xs[k], 0.2, xs[k + 1], 6.5)})
        rooms.append({"id": f"north_{k}", "polygon": rect(xs[k], 9.9, xs[k + 1], 16.2)})
        doorways.append({"id": f"d_south_{k}", "room_a": "corridor",
                         "room_b": f"south_{k}",
                         "segment": [[doors[k] + 0.1, 6.5], [doors[k] + 0.9, 6.5]]})
        doorways.append({"id": f"d_north_{k}", "room_a": "corridor",
                         "room_b": f"north_{k}",
                         "segment": [[doors[k] + 0.1, 9.9], [doors[k] + 0.9, 9.9]]})
    dump(out / "rooms.yaml", {"rooms": rooms, "doorways": doorways})
    graph = {"fill_density": 2.0, "ensure_coverage": False}
    wall_graph = {"fill_density": 4.0, "wall_band": 0.7, "connection_radius": 0.9,
                  "ensure_coverage": False}
    base = {"id": "alpha", "agents": 3,
            "start": {"room": "corridor", "point": [3.2, 9.3]},
            "goal": {"room": "north_0", "search": True}}
    # free run crosses the whole corridor: long straight stretch at full speed
    free_squad = {**base, "vision": "free", "tactic": "FREE",
                  "goal": {"room": "corridor", "point": [29.0, 8.2]}}
    scenario(out, "free", free_squad, graph)
    scenario(out, "lhr", {**base, "vision": "restricted", "tactic": "WALL_LHR"}, wall_graph)
    scenario(out, "rhr", {**base, "vision": "restricted", "tactic": "WALL_RHR"}, wall_graph)


def main():
    make_studio()
    make_flat()
    make_office()
    print(f"maps written under {MAPS}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
