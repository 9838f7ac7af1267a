import math

import numpy as np
import pytest
import shapely

from conftest import empty_grid, grid_from_rows
from sarsim.mapgrid import (GridMap, MapError, distance_transform, line_of_sight,
                            load_map, save_map, supercover_cells)

META = {"resolution": 0.5, "origin_x": 0.0, "origin_y": 0.0,
        "occupied_threshold": 0.5}


def test_load_map_p5_orientation():
    # 2x2: dark pixel top-left -> occupied at the *top* row, i.e. iy = 1
    payload = b"P5\n2 2\n255\n" + bytes([0, 255, 255, 255])
    grid = load_map(payload, META)
    assert grid.occupied[1, 0] and not grid.occupied[0, 0]
    assert not grid.occupied[1, 1] and not grid.occupied[0, 1]


def test_load_map_p2_matches_p5():
    p2 = b"P2\n# a comment\n2 2\n255\n0 255\n255 255\n"
    p5 = b"P5\n2 2\n255\n" + bytes([0, 255, 255, 255])
    assert np.array_equal(load_map(p2, META).occupied, load_map(p5, META).occupied)


def test_load_map_16bit_binary():
    payload = b"P5\n2 1\n65535\n" + np.array([0, 65535], dtype=">u2").tobytes()
    grid = load_map(payload, META)
    assert grid.occupied[0, 0] and not grid.occupied[0, 1]


def test_save_map_roundtrip():
    grid = grid_from_rows(["#..", ".#.", "..#"], resolution=0.25)
    again = load_map(save_map(grid), {**META, "resolution": 0.25})
    assert np.array_equal(grid.occupied, again.occupied)


@pytest.mark.parametrize("payload", [
    b"",
    b"P6\n2 2\n255\n" + bytes(4),            # unsupported magic
    b"P5\n2 2\n255\n" + bytes(3),            # truncated body
    b"P2\n2 2\n255\n0 0 0\n",                # too few samples
    b"P2\n2 2\n255\n0 0 0 999\n",            # sample above maxval
    b"P2\n2 2\n255\n0 0 0 x\n",              # non-numeric sample
    b"P5\n0 2\n255\n",                       # zero width
])
def test_load_map_rejects_malformed_payload(payload):
    with pytest.raises(MapError):
        load_map(payload, META)


def test_load_map_rejects_bad_metadata():
    payload = b"P5\n1 1\n255\n" + bytes([255])
    with pytest.raises(MapError):
        load_map(payload, {k: v for k, v in META.items() if k != "resolution"})
    with pytest.raises(MapError):
        load_map(payload, {**META, "occupied_threshold": 1.5})


def test_cell_conventions():
    grid = empty_grid(4, 3, resolution=0.5)
    assert grid.world_bounds == (0.0, 0.0, 2.0, 1.5)
    assert grid.world_to_cell(0.6, 1.1) == (1, 2)
    assert grid.world_to_cell(2.0, 1.5) == (3, 2)  # upper edge clips inward
    assert grid.cell_center(1, 2) == (0.75, 1.25)
    with pytest.raises(MapError):
        grid.world_to_cell(-0.1, 0.0)
    with pytest.raises(MapError):
        grid.is_occupied_cell(4, 0)


def test_grid_shape_validation():
    with pytest.raises(MapError):
        GridMap(width=2, height=2, resolution=1.0, origin=(0, 0),
                occupied=np.zeros((3, 2), dtype=bool))
    with pytest.raises(MapError):
        GridMap(width=2, height=2, resolution=0.0, origin=(0, 0),
                occupied=np.zeros((2, 2), dtype=bool))


def _supercover_oracle(grid: GridMap, a, b):
    """Exact-geometry supercover: cells whose closed square touches the
    closed segment. Endpoints are multiples of 1/64, so every incidence is
    decided exactly by GEOS predicates with no 1e-9 near-misses possible."""
    seg = shapely.LineString([a, b])
    cells = []
    for iy in range(grid.height):
        for ix in range(grid.width):
            if shapely.box(ix, iy, ix + 1, iy + 1).intersects(seg):
                cells.append((ix, iy))
    return sorted(cells)


def test_supercover_against_exact_geometry_oracle():
    grid = empty_grid(10, 10, resolution=1.0)
    rng = np.random.default_rng(7)
    for _ in range(200):
        a = tuple(int(v) / 64.0 for v in rng.integers(0, 10 * 64 + 1, size=2))
        b = tuple(int(v) / 64.0 for v in rng.integers(0, 10 * 64 + 1, size=2))
        assert supercover_cells(grid, a, b) == _supercover_oracle(grid, a, b), (a, b)


def test_supercover_corner_and_boundary_touches():
    grid = empty_grid(4, 4)
    # diagonal through the corner (2, 2) touches all four cells around it
    cells = set(supercover_cells(grid, (1.0, 3.0), (3.0, 1.0)))
    assert {(1, 1), (1, 2), (2, 1), (2, 2)} <= cells
    # segment along a cell boundary touches both sides
    cells = set(supercover_cells(grid, (0.5, 2.0), (3.5, 2.0)))
    assert {(1, 1), (1, 2)} <= cells


def test_supercover_rejects_out_of_bounds():
    grid = empty_grid(4, 4)
    with pytest.raises(MapError):
        supercover_cells(grid, (-1.0, 0.0), (1.0, 1.0))


def _los_scan(grid: GridMap, a, b) -> bool:
    return not any(grid.occupied[iy, ix] for ix, iy in supercover_cells(grid, a, b))


def test_line_of_sight_matches_supercover_scan():
    rng = np.random.default_rng(11)
    occupied = rng.random((12, 12)) < 0.25
    grid = GridMap(width=12, height=12, resolution=0.5, origin=(-1.0, -1.0),
                   occupied=occupied)
    x0, y0, x1, y1 = grid.world_bounds
    for _ in range(300):
        a = (rng.uniform(x0, x1), rng.uniform(y0, y1))
        b = (rng.uniform(x0, x1), rng.uniform(y0, y1))
        assert line_of_sight(grid, a, b) == _los_scan(grid, a, b), (a, b)


def test_line_of_sight_simple_cases():
    grid = grid_from_rows([".....",
                           "..#..",
                           "....."])
    assert line_of_sight(grid, (0.5, 0.5), (4.5, 0.5))
    assert not line_of_sight(grid, (0.5, 1.5), (4.5, 1.5))
    assert line_of_sight(empty_grid(3, 3), (0.2, 0.2), (2.8, 2.8))
    with pytest.raises(MapError):
        line_of_sight(grid, (0.5, 0.5), (9.0, 0.5))


def test_distance_transform_euclidean_brute_force():
    rng = np.random.default_rng(3)
    occupied = rng.random((9, 13)) < 0.2
    occupied[4, 6] = True  # guarantee at least one obstacle
    grid = GridMap(width=13, height=9, resolution=0.3, origin=(0, 0),
                   occupied=occupied)
    df = distance_transform(grid)
    oiy, oix = np.nonzero(occupied)
    for iy in range(9):
        for ix in range(13):
            want = math.sqrt(((oix - ix) ** 2 + (oiy - iy) ** 2).min()) * 0.3
            assert df.meters[iy, ix] == pytest.approx(want, abs=1e-9)


def test_distance_transform_chamfer_bound():
    grid = grid_from_rows(["#.......",
                           "........",
                           "........",
                           ".......#"], resolution=0.5)
    exact = distance_transform(grid, metric="euclidean").meters
    chamfer = distance_transform(grid, metric="chamfer").meters
    free = ~grid.occupied
    assert np.all(chamfer[grid.occupied] == 0.0)
    # chamfer-3-4 stays within its classic ~8% bound of the exact distance
    assert np.all(np.abs(chamfer[free] - exact[free]) <= 0.09 * exact[free] + 1e-9)


def test_distance_transform_empty_map_and_bad_metric():
    df = distance_transform(empty_grid(3, 3))
    assert np.all(np.isinf(df.meters))
    assert df.nearest is None
    assert df.obstacle_direction(1.0, 1.0) is None
    with pytest.raises(MapError):
        distance_transform(empty_grid(3, 3), metric="manhattan")


def test_distance_field_queries():
    grid = grid_from_rows(["...",
                           "...",
                           "#.."])
    df = distance_transform(grid)
    assert df.value_at_world(2.5, 0.5) == pytest.approx(2.0)
    assert df.nearest_obstacle_center(2.5, 0.5) == (0.5, 0.5)
    dx, dy = df.obstacle_direction(2.5, 0.5)
    assert (dx, dy) == pytest.approx((-1.0, 0.0))
