"""Per-room planning graphs: medial axis + visibility roadmap + fill nodes.

All nodes of a room are connected by proximity (line-of-sight pairs within
a radius); every directed edge carries the set of tactics it is permitted
under. Construction is fully deterministic: sampling is index-based and all
iteration orders are fixed.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
import shapely
from scipy.spatial import cKDTree
from skimage.morphology import skeletonize

from sarsim.mapgrid import DistanceField, GridMap, line_of_sight
from sarsim.rooms import Room, RoomGraph
from sarsim.sampling import halton_2d, hammersley_2d
from sarsim.tactics import Tactic

_CHIRALITY_EPS = 1e-9


class NodeKind(enum.Enum):
    MEDIAL = "medial"
    GUARD = "guard"
    CONNECTOR = "connector"
    FILL = "fill"
    DOORWAY = "doorway"


@dataclass(frozen=True)
class PlanNode:
    id: int
    position: tuple[float, float]
    kind: NodeKind
    wall_distance: float


@dataclass(frozen=True)
class PlanEdge:
    src: int
    dst: int
    length: float
    permits: frozenset[Tactic]


@dataclass
class RoomSubGraph:
    room_id: str
    nodes: list[PlanNode]
    edges: list[PlanEdge]
    adjacency: dict[int, list[int]]  # node id -> edge indices leaving it
    visibility_nodes: list[int]  # guard + connector ids
    entry_nodes: dict[str, int]  # doorway id -> node id

    def out_edges(self, node_id: int, tactic: Tactic | None = None):
        for ei in self.adjacency.get(node_id, ()):
            edge = self.edges[ei]
            if tactic is None or tactic in edge.permits:
                yield edge

    def guard_ids(self) -> list[int]:
        return [n.id for n in self.nodes if n.kind is NodeKind.GUARD]


@dataclass
class GraphConfig:
    """Tunable construction parameters (defaults sized for room-scale maps)."""

    connection_radius: float = 1.5  # m
    wall_band: float = 1.0  # m; wall-search edges need both endpoints this close
    fill_density: float = 1.0  # nodes per m^2 considered for the fill pass
    fill_min_spacing: float = 0.3  # m
    visibility_budget: int = 50  # consecutive rejected samples before stopping
    visibility_max_samples: int = 5000
    seed_offset: int = 0
    medial_spacing: float = 0.0  # m; >0 thins the medial node set
    medial_seed_separation: float = 2.0  # cells; min seed distance for a Voronoi border
    ensure_coverage: bool = True  # add guards until every free cell is seen


def _room_free_mask(room: Room, grid: GridMap) -> np.ndarray:
    return room.cell_mask(grid)


def build_medial_axis(room: Room, df: DistanceField,
                      seed_separation: float = 2.0) -> tuple[
        list[tuple[float, float]], list[tuple[int, int]]]:
    """Skeleton of the room's free space at maximal wall clearance.

    Cells on Voronoi borders (where the nearest-obstacle seeds of adjacent
    cells lie far apart) and clearance plateaus are extracted and thinned to
    a one-cell-wide skeleton. Returns node positions (cell centers, sorted
    row-major) and index pairs of 8-adjacent skeleton cells.
    """
    grid = df.grid
    mask = _room_free_mask(room, grid)
    if not mask.any():
        return [], []
    if df.nearest is None:
        # obstacle-free map: no Voronoi structure, fall back to plateau rule
        border = mask.copy()
    else:
        border = _voronoi_border_mask(df, mask, seed_separation)
    skel = skeletonize(border)
    iys, ixs = np.nonzero(skel)
    order = np.lexsort((ixs, iys))
    cells = list(zip(ixs[order].tolist(), iys[order].tolist()))
    index = {cell: i for i, cell in enumerate(cells)}
    positions = [grid.cell_center(ix, iy) for ix, iy in cells]
    edges = []
    for i, (ix, iy) in enumerate(cells):
        for dx, dy in ((1, -1), (1, 0), (1, 1), (0, 1)):
            j = index.get((ix + dx, iy + dy))
            if j is not None:
                edges.append((i, j))
    return positions, edges


def _voronoi_border_mask(df: DistanceField, mask: np.ndarray,
                         seed_separation: float = 2.0) -> np.ndarray:
    """Cells where distinct Voronoi regions meet, plus clearance plateaus.

    The plateau rule (clearance >= every 8-neighbor) catches ridges the seed
    comparison misses, e.g. one-cell corridors whose equidistant seeds tie.
    """
    siy = df.nearest[0].astype(np.int64)
    six = df.nearest[1].astype(np.int64)
    h, w = mask.shape
    sep2 = seed_separation * seed_separation
    border = np.zeros_like(mask)
    is_max = mask.copy()
    dist = df.meters
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dx == 0 and dy == 0:
                continue
            ys0, ys1 = max(0, dy), min(h, h + dy)
            xs0, xs1 = max(0, dx), min(w, w + dx)
            ny0, ny1 = max(0, -dy), min(h, h - dy)
            nx0, nx1 = max(0, -dx), min(w, w - dx)
            dseed2 = ((siy[ys0:ys1, xs0:xs1] - siy[ny0:ny1, nx0:nx1]) ** 2
                      + (six[ys0:ys1, xs0:xs1] - six[ny0:ny1, nx0:nx1]) ** 2)
            far = dseed2 >= sep2
            border[ny0:ny1, nx0:nx1] |= far
            is_max[ny0:ny1, nx0:nx1] &= dist[ny0:ny1, nx0:nx1] >= dist[ys0:ys1, xs0:xs1]
    return (border | is_max) & mask


class _UnionFind:
    def __init__(self):
        self.parent: dict[int, int] = {}

    def add(self, x: int):
        self.parent.setdefault(x, x)

    def find(self, x: int) -> int:
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: int, b: int):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def build_visibility_roadmap(room: Room, grid: GridMap, budget: int = 50,
                             seed_offset: int = 0, max_samples: int = 5000
                             ) -> tuple[list[tuple[float, float]], list[tuple[float, float]]]:
    """Guard/connector node positions for the room.

    Halton samples over the room bounding box are kept as a guard when no
    existing node sees them, or as a connector when they join two or more
    previously disconnected guard components. Sampling stops after
    ``budget`` consecutive samples that add nothing, or at ``max_samples``.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    minx, miny, maxx, maxy = room.polygon.bounds
    guards: list[tuple[float, float]] = []
    connectors: list[tuple[float, float]] = []
    components = _UnionFind()
    failures = 0
    samples = halton_2d(start_index=1 + seed_offset)
    for _ in range(max_samples):
        if failures >= budget:
            break
        u, v = next(samples)
        pos = (minx + u * (maxx - minx), miny + v * (maxy - miny))
        if (not shapely.contains_xy(room.polygon, pos[0], pos[1])
                or not grid.in_bounds_world(*pos)
                or grid.is_occupied_world(*pos)):
            failures += 1
            continue
        visible_guards = [gi for gi, g in enumerate(guards) if line_of_sight(grid, pos, g)]
        visible_connectors = any(line_of_sight(grid, pos, c) for c in connectors)
        if not visible_guards and not visible_connectors:
            components.add(len(guards))
            guards.append(pos)
            failures = 0
            continue
        roots = sorted({components.find(gi) for gi in visible_guards})
        if len(roots) >= 2:
            for r in roots[1:]:
                components.union(roots[0], r)
            connectors.append(pos)
            failures = 0
        else:
            failures += 1
    return guards, connectors


def complete_guard_coverage(room: Room, grid: GridMap,
                            guards: list[tuple[float, float]]) -> list[tuple[float, float]]:
    """Extra guards so every free cell of the room sees at least one guard.

    Free cells are scanned row-major; any cell center invisible from all
    guards (including ones added here) becomes a new guard. This keeps the
    all-space-visible guarantee deterministic instead of probabilistic.
    """
    extras: list[tuple[float, float]] = []
    all_guards = list(guards)
    for center in room.free_cell_centers(grid):
        pos = (float(center[0]), float(center[1]))
        if not any(line_of_sight(grid, pos, g) for g in all_guards):
            extras.append(pos)
            all_guards.append(pos)
    return extras


def fill_random(room: Room, grid: GridMap, density: float, seed_offset: int = 0,
                existing: list[tuple[float, float]] | None = None,
                min_spacing: float = 0.3) -> list[tuple[float, float]]:
    """Hammersley fill of the room's remaining free space.

    ceil(density * area) candidates over the bounding box are kept when they
    fall into free space inside the room and are at least ``min_spacing``
    away from every existing or already kept node.
    """
    if density <= 0:
        raise ValueError("density must be > 0")
    minx, miny, maxx, maxy = room.polygon.bounds
    n = math.ceil(density * room.polygon.area)
    kept: list[tuple[float, float]] = []
    anchors = list(existing or []) + kept
    for u, v in hammersley_2d(n, offset=seed_offset):
        pos = (minx + u * (maxx - minx), miny + v * (maxy - miny))
        if (not shapely.contains_xy(room.polygon, pos[0], pos[1])
                or not grid.in_bounds_world(*pos)
                or grid.is_occupied_world(*pos)):
            continue
        too_close = False
        for ax, ay in anchors:
            if (pos[0] - ax) ** 2 + (pos[1] - ay) ** 2 < min_spacing * min_spacing:
                too_close = True
                break
        if not too_close:
            kept.append(pos)
            anchors.append(pos)
    return kept


def _edge_permits(mid_normal: tuple[float, float] | None,
                  direction: tuple[float, float],
                  in_band: bool) -> tuple[frozenset[Tactic], frozenset[Tactic]]:
    """Permit sets for (u->v, v->u) given the shared wall normal at midpoint."""
    free_only = frozenset((Tactic.FREE,))
    if not in_band or mid_normal is None:
        return free_only, free_only
    nx, ny = mid_normal
    dx, dy = direction
    cross = nx * dy - ny * dx
    if cross > _CHIRALITY_EPS:
        fwd = frozenset((Tactic.FREE, Tactic.WALL_RHR))
        rev = frozenset((Tactic.FREE, Tactic.WALL_LHR))
    elif cross < -_CHIRALITY_EPS:
        fwd = frozenset((Tactic.FREE, Tactic.WALL_LHR))
        rev = frozenset((Tactic.FREE, Tactic.WALL_RHR))
    else:
        both = frozenset((Tactic.FREE, Tactic.WALL_LHR, Tactic.WALL_RHR))
        fwd = rev = both
    return fwd, rev


def connect_and_label(nodes: list[PlanNode], grid: GridMap, df: DistanceField,
                      radius: float, wall_band: float, room: Room) -> RoomSubGraph:
    """Proximity-connect nodes and label each directed edge with its tactics.

    Every line-of-sight pair within ``radius`` yields a directed edge pair.
    FREE is always permitted. Wall-search permits require both endpoints
    within ``wall_band`` of a wall; the chirality (LHR/RHR) of each
    direction follows from the wall normal at the edge midpoint, so the
    LHR permit of u->v always mirrors the RHR permit of v->u.
    """
    if radius <= 0:
        raise ValueError("radius must be > 0")
    edges: list[PlanEdge] = []
    adjacency: dict[int, list[int]] = {n.id: [] for n in nodes}
    if nodes:
        positions = np.array([n.position for n in nodes])
        tree = cKDTree(positions)
        pairs = sorted(tree.query_pairs(radius))
        for i, j in pairs:
            u, v = nodes[i], nodes[j]
            if not line_of_sight(grid, u.position, v.position):
                continue
            ux, uy = u.position
            vx, vy = v.position
            length = math.hypot(vx - ux, vy - uy)
            if length < 1e-12:
                continue
            direction = ((vx - ux) / length, (vy - uy) / length)
            band = wall_band + 1e-9  # tolerate grid-quantized distances
            in_band = (u.wall_distance <= band and v.wall_distance <= band)
            mid_normal = df.obstacle_direction(0.5 * (ux + vx), 0.5 * (uy + vy))
            fwd, rev = _edge_permits(mid_normal, direction, in_band)
            adjacency[u.id].append(len(edges))
            edges.append(PlanEdge(u.id, v.id, length, fwd))
            adjacency[v.id].append(len(edges))
            edges.append(PlanEdge(v.id, u.id, length, rev))
    return RoomSubGraph(room_id=room.id, nodes=list(nodes), edges=edges,
                        adjacency=adjacency, visibility_nodes=[], entry_nodes={})


def _thin_positions(positions: list[tuple[float, float]], spacing: float
                    ) -> list[tuple[float, float]]:
    if spacing <= 0:
        return positions
    kept: list[tuple[float, float]] = []
    for pos in positions:
        if all((pos[0] - k[0]) ** 2 + (pos[1] - k[1]) ** 2 >= spacing * spacing
               for k in kept):
            kept.append(pos)
    return kept


def build_room_subgraph(room: Room, grid: GridMap, df: DistanceField,
                        rg: RoomGraph, cfg: GraphConfig) -> RoomSubGraph:
    """Assemble the full planning sub-graph of one room.

    Node order (and therefore node ids) is fixed: medial axis, doorway
    midpoints, guards, connectors, fill. Rebuilding with identical inputs
    reproduces the graph bit for bit.
    """
    medial_pos, _ = build_medial_axis(room, df, cfg.medial_seed_separation)
    medial_pos = _thin_positions(medial_pos, cfg.medial_spacing)
    doorway_ids = sorted(room.entry_doorways)
    doorway_pos = [rg.doorways[d].midpoint for d in doorway_ids]
    guards, connectors = build_visibility_roadmap(
        room, grid, budget=cfg.visibility_budget, seed_offset=cfg.seed_offset,
        max_samples=cfg.visibility_max_samples)
    if cfg.ensure_coverage:
        guards = guards + complete_guard_coverage(room, grid, guards)
    fill = fill_random(room, grid, cfg.fill_density, seed_offset=cfg.seed_offset,
                       existing=medial_pos + doorway_pos + guards + connectors,
                       min_spacing=cfg.fill_min_spacing)

    def wall_dist(pos):
        return df.value_at_world(*pos)

    nodes: list[PlanNode] = []
    for kind, group in ((NodeKind.MEDIAL, medial_pos), (NodeKind.DOORWAY, doorway_pos),
                        (NodeKind.GUARD, guards), (NodeKind.CONNECTOR, connectors),
                        (NodeKind.FILL, fill)):
        for pos in group:
            nodes.append(PlanNode(id=len(nodes), position=(float(pos[0]), float(pos[1])),
                                  kind=kind, wall_distance=wall_dist(pos)))
    sg = connect_and_label(nodes, grid, df, cfg.connection_radius, cfg.wall_band, room)
    sg.visibility_nodes = [n.id for n in nodes
                           if n.kind in (NodeKind.GUARD, NodeKind.CONNECTOR)]
    first_doorway = len(medial_pos)
    sg.entry_nodes = {d: first_doorway + k for k, d in enumerate(doorway_ids)}
    return sg


def build_all_subgraphs(rg: RoomGraph, grid: GridMap, df: DistanceField,
                        cfg: GraphConfig) -> None:
    """Fill each room's write-once sub_graph slot."""
    for rid in sorted(rg.rooms):
        room = rg.rooms[rid]
        if room.sub_graph is None:
            room.sub_graph = build_room_subgraph(room, grid, df, rg, cfg)


def dump_subgraph(sg: RoomSubGraph) -> str:
    """Plain-text dump of nodes and directed edges (for plan --dump-graph)."""
    lines = [f"room {sg.room_id} nodes {len(sg.nodes)} edges {len(sg.edges)}"]
    for n in sg.nodes:
        lines.append(f"node {n.id} {n.kind.value} {n.position[0]:.6f} {n.position[1]:.6f} "
                     f"wall_distance {n.wall_distance:.6f}")
    for e in sg.edges:
        permits = ",".join(sorted(t.value for t in e.permits))
        lines.append(f"edge {e.src} -> {e.dst} length {e.length:.6f} permits {permits}")
    return "\n".join(lines) + "\n"
