"""Shared fixtures and small builders used across the test suite."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import pytest

from sarsim.mapgrid import GridMap
from sarsim.subgraph import NodeKind, PlanEdge, PlanNode, RoomSubGraph
from sarsim.tactics import Tactic

MAPS = Path(__file__).resolve().parent.parent / "maps"
MAP_NAMES = ("studio", "flat", "office")
TACTIC_NAMES = ("free", "lhr", "rhr")

# one line per acceptance criterion, echoed after the test run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def grid_from_rows(rows: list[str], resolution: float = 1.0,
                   origin: tuple[float, float] = (0.0, 0.0)) -> GridMap:
    """Build a GridMap from strings; '#' occupied, '.' free; first row = top."""
    height = len(rows)
    width = len(rows[0])
    occupied = np.zeros((height, width), dtype=bool)
    for r, row in enumerate(rows):
        assert len(row) == width
        occupied[height - 1 - r] = [c == "#" for c in row]
    return GridMap(width=width, height=height, resolution=resolution,
                   origin=origin, occupied=occupied)


def empty_grid(width: int = 8, height: int = 8, resolution: float = 1.0) -> GridMap:
    return GridMap(width=width, height=height, resolution=resolution,
                   origin=(0.0, 0.0),
                   occupied=np.zeros((height, width), dtype=bool))


def random_subgraph(rng: np.random.Generator, max_nodes: int = 500) -> RoomSubGraph:
    """Synthetic room sub-graph with random geometry and permit labels.

    Directed edge pairs are labeled so that the WALL_LHR permit of u->v
    always mirrors the WALL_RHR permit of v->u, matching the construction
    invariant of connect_and_label.
    """
    n = int(rng.integers(2, max_nodes + 1))
    span = math.sqrt(n)  # keep density roughly constant as n grows
    positions = rng.uniform(0.0, 4.0 * span, size=(n, 2))
    nodes = [PlanNode(id=i, position=(float(x), float(y)), kind=NodeKind.FILL,
                      wall_distance=float(rng.uniform(0.0, 2.0)))
             for i, (x, y) in enumerate(positions)]
    edges: list[PlanEdge] = []
    adjacency: dict[int, list[int]] = {i: [] for i in range(n)}
    radius = 3.0
    free_only = frozenset((Tactic.FREE,))
    for i in range(n):
        for j in range(i + 1, n):
            dx = positions[j, 0] - positions[i, 0]
            dy = positions[j, 1] - positions[i, 1]
            length = math.hypot(dx, dy)
            if length > radius or length < 1e-12 or rng.random() < 0.3:
                continue
            roll = rng.random()
            if roll < 0.4:
                fwd, rev = free_only, free_only
            elif roll < 0.7:
                fwd = frozenset((Tactic.FREE, Tactic.WALL_LHR))
                rev = frozenset((Tactic.FREE, Tactic.WALL_RHR))
            else:
                fwd = frozenset((Tactic.FREE, Tactic.WALL_RHR))
                rev = frozenset((Tactic.FREE, Tactic.WALL_LHR))
            adjacency[i].append(len(edges))
            edges.append(PlanEdge(i, j, length, fwd))
            adjacency[j].append(len(edges))
            edges.append(PlanEdge(j, i, length, rev))
    return RoomSubGraph(room_id="synthetic", nodes=nodes, edges=edges,
                        adjacency=adjacency, visibility_nodes=[], entry_nodes={})


def dijkstra_oracle(sg: RoomSubGraph, src: int, tactic: Tactic) -> dict[int, float]:
    """Independent Dijkstra over permitted edges (oracle for the planner)."""
    import heapq

    dist = {src: 0.0}
    heap = [(0.0, src)]
    done: set[int] = set()
    while heap:
        d, node = heapq.heappop(heap)
        if node in done:
            continue
        done.add(node)
        for ei in sg.adjacency.get(node, ()):
            edge = sg.edges[ei]
            if tactic not in edge.permits:
                continue
            nd = d + edge.length
            if edge.dst not in dist or nd < dist[edge.dst]:
                dist[edge.dst] = nd
                heapq.heappush(heap, (nd, edge.dst))
    return dist


def path_cost(sg: RoomSubGraph, path: list[int], tactic: Tactic) -> float:
    """Cost of a node path, asserting every hop is a permitted edge."""
    total = 0.0
    for a, b in zip(path, path[1:]):
        hop = None
        for ei in sg.adjacency[a]:
            edge = sg.edges[ei]
            if edge.dst == b and tactic in edge.permits:
                hop = edge
                break
        assert hop is not None, f"path uses missing/forbidden edge {a}->{b}"
        total += hop.length
    return total


@pytest.fixture(scope="session")
def studio_mission():
    from sarsim.scenario import load_scenario, prepare_mission

    return prepare_mission(load_scenario(MAPS / "studio" / "free.yaml"))
