"""Occupancy-grid maps and the geometric queries built on them.

Conventions
-----------
A cell (ix, iy) covers the axis-aligned square of side ``resolution`` whose
lower-left corner sits at ``origin + (ix*w, iy*w)``; its center is at
``origin + ((ix+0.5)*w, (iy+0.5)*w)``. The cell array is indexed
``[iy, ix]`` with iy increasing with world y. PGM images are interpreted
with row 0 at the top of the map (largest y), matching the usual robotics
map-server convention.
"""

from __future__ import annotations

import math
import weakref
from dataclasses import dataclass

import numpy as np
import shapely
from scipy import ndimage

_EPS = 1e-9


class MapError(ValueError):
    """Malformed map payload or metadata."""


@dataclass(frozen=True, eq=False)
class GridMap:
    """Immutable occupancy grid. ``occupied[iy, ix]`` is True on obstacles."""

    width: int
    height: int
    resolution: float
    origin: tuple[float, float]
    occupied: np.ndarray

    def __post_init__(self):
        if self.resolution <= 0:
            raise MapError(f"resolution must be > 0, got {self.resolution}")
        if self.width < 1 or self.height < 1:
            raise MapError(f"grid must be at least 1x1, got {self.width}x{self.height}")
        if self.occupied.shape != (self.height, self.width):
            raise MapError(f"cell array shape {self.occupied.shape} does not match "
                           f"{self.height}x{self.width}")
        self.occupied.setflags(write=False)

    @property
    def world_bounds(self) -> tuple[float, float, float, float]:
        ox, oy = self.origin
        w = self.resolution
        return ox, oy, ox + self.width * w, oy + self.height * w

    def in_bounds_world(self, x: float, y: float) -> bool:
        x0, y0, x1, y1 = self.world_bounds
        return x0 <= x <= x1 and y0 <= y <= y1

    def world_to_cell(self, x: float, y: float) -> tuple[int, int]:
        """Cell index containing a world point. Raises on out-of-bounds."""
        if not self.in_bounds_world(x, y):
            raise MapError(f"point ({x}, {y}) is outside the map bounds {self.world_bounds}")
        ix = min(int((x - self.origin[0]) / self.resolution), self.width - 1)
        iy = min(int((y - self.origin[1]) / self.resolution), self.height - 1)
        return ix, iy

    def cell_center(self, ix: int, iy: int) -> tuple[float, float]:
        w = self.resolution
        return self.origin[0] + (ix + 0.5) * w, self.origin[1] + (iy + 0.5) * w

    def is_occupied_cell(self, ix: int, iy: int) -> bool:
        if not (0 <= ix < self.width and 0 <= iy < self.height):
            raise MapError(f"cell ({ix}, {iy}) is outside the {self.width}x{self.height} grid")
        return bool(self.occupied[iy, ix])

    def is_occupied_world(self, x: float, y: float) -> bool:
        ix, iy = self.world_to_cell(x, y)
        return bool(self.occupied[iy, ix])

    def free_cell_centers(self) -> np.ndarray:
        """(N, 2) world centers of all free cells, row-major order."""
        iy, ix = np.nonzero(~self.occupied)
        w = self.resolution
        return np.column_stack((self.origin[0] + (ix + 0.5) * w,
                                self.origin[1] + (iy + 0.5) * w))


def _pgm_tokens(data: bytes):
    """Token stream for the ASCII parts of a PGM header/body."""
    pos = 0
    n = len(data)
    while pos < n:
        c = data[pos:pos + 1]
        if c == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            start = pos
            while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
                pos += 1
            yield data[start:pos], pos
    return


def _parse_pgm(data: bytes) -> tuple[int, int, int, np.ndarray]:
    """Parse P2/P5 payload into (width, height, maxval, rows-top-down array)."""
    tokens = _pgm_tokens(data)
    try:
        magic, _ = next(tokens)
    except StopIteration:
        raise MapError("empty graymap payload") from None
    if magic not in (b"P2", b"P5"):
        raise MapError(f"unsupported graymap magic {magic!r}; expected P2 or P5")
    header = []
    end = 0
    try:
        while len(header) < 3:
            tok, end = next(tokens)
            header.append(int(tok))
    except (StopIteration, ValueError):
        raise MapError("malformed graymap header") from None
    width, height, maxval = header
    if width < 1 or height < 1 or not (0 < maxval < 65536):
        raise MapError(f"invalid graymap dimensions/maxval: {width} {height} {maxval}")

    if magic == b"P2":
        values = []
        for tok, _ in tokens:
            try:
                values.append(int(tok))
            except ValueError:
                raise MapError(f"non-numeric sample {tok!r} in ASCII graymap") from None
        pixels = np.array(values, dtype=np.int64)
    else:
        # binary: exactly one whitespace byte after maxval, then raw samples
        raw = data[end + 1:]
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype(np.uint8)
        expected = width * height * dtype.itemsize
        if len(raw) < expected:
            raise MapError(f"binary graymap truncated: expected {expected} bytes, got {len(raw)}")
        pixels = np.frombuffer(raw[:expected], dtype=dtype).astype(np.int64)

    if pixels.size != width * height:
        raise MapError(f"graymap sample count {pixels.size} does not match "
                       f"{width}x{height} header")
    if pixels.min() < 0 or pixels.max() > maxval:
        raise MapError("graymap sample outside [0, maxval]")
    return width, height, maxval, pixels.reshape(height, width)


def load_map(image_bytes: bytes, meta: dict) -> GridMap:
    """Build a GridMap from a P2/P5 graymap and a metadata record.

    Metadata keys: ``resolution`` (m/cell), ``origin_x``, ``origin_y`` (m),
    ``occupied_threshold`` (fraction of full darkness in [0, 1]). Pixels with
    normalized darkness ``1 - value/maxval >= occupied_threshold`` become
    occupied cells. Image row 0 maps to the top of the grid (largest y).
    """
    for key in ("resolution", "origin_x", "origin_y", "occupied_threshold"):
        if key not in meta:
            raise MapError(f"map metadata is missing key {key!r}")
    threshold = float(meta["occupied_threshold"])
    if not 0.0 <= threshold <= 1.0:
        raise MapError(f"occupied_threshold must be within [0, 1], got {threshold}")
    width, height, maxval, rows = _parse_pgm(image_bytes)
    darkness = 1.0 - rows / maxval
    occupied = np.ascontiguousarray((darkness >= threshold)[::-1])  # flip rows: iy up
    return GridMap(width=width, height=height,
                   resolution=float(meta["resolution"]),
                   origin=(float(meta["origin_x"]), float(meta["origin_y"])),
                   occupied=occupied)


def save_map(grid: GridMap) -> bytes:
    """Serialize occupancy back to a binary graymap (occupied=0, free=255)."""
    values = np.where(grid.occupied[::-1], 0, 255).astype(np.uint8)
    header = f"P5\n{grid.width} {grid.height}\n255\n".encode()
    return header + values.tobytes()


@dataclass(eq=False)
class DistanceField:
    """Per-cell distance (meters) to the nearest occupied cell.

    ``meters`` is 0 exactly on occupied cells and +inf everywhere when the
    map has no occupied cell. ``nearest`` holds the (iy, ix) index arrays of
    the nearest occupied cell (None for obstacle-free maps).
    """

    grid: GridMap
    meters: np.ndarray
    nearest: np.ndarray | None
    metric: str

    def value_at_world(self, x: float, y: float) -> float:
        ix, iy = self.grid.world_to_cell(x, y)
        return float(self.meters[iy, ix])

    def nearest_obstacle_center(self, x: float, y: float) -> tuple[float, float] | None:
        """World center of the occupied cell nearest to (x, y)."""
        if self.nearest is None:
            return None
        ix, iy = self.grid.world_to_cell(x, y)
        siy = int(self.nearest[0][iy, ix])
        six = int(self.nearest[1][iy, ix])
        return self.grid.cell_center(six, siy)

    def obstacle_direction(self, x: float, y: float) -> tuple[float, float] | None:
        """Unit vector from (x, y) toward the nearest occupied cell center."""
        center = self.nearest_obstacle_center(x, y)
        if center is None:
            return None
        dx, dy = center[0] - x, center[1] - y
        norm = math.hypot(dx, dy)
        if norm < _EPS:
            return None
        return dx / norm, dy / norm


def _chamfer34(occupied: np.ndarray, w: float) -> np.ndarray:
    """Two-pass chamfer-3-4 distance in meters (weights w, 4w/3 per step)."""
    h, width = occupied.shape
    big = 3 * (h + width) * 4 + 10
    d = np.where(occupied, 0, big).astype(np.int64)
    # forward pass: left/up-left/up/up-right predecessors (row-major sweep)
    for iy in range(h):
        for ix in range(width):
            v = d[iy, ix]
            if v == 0:
                continue
            if ix > 0:
                v = min(v, d[iy, ix - 1] + 3)
            if iy > 0:
                v = min(v, d[iy - 1, ix] + 3)
                if ix > 0:
                    v = min(v, d[iy - 1, ix - 1] + 4)
                if ix < width - 1:
                    v = min(v, d[iy - 1, ix + 1] + 4)
            d[iy, ix] = v
    for iy in range(h - 1, -1, -1):
        for ix in range(width - 1, -1, -1):
            v = d[iy, ix]
            if v == 0:
                continue
            if ix < width - 1:
                v = min(v, d[iy, ix + 1] + 3)
            if iy < h - 1:
                v = min(v, d[iy + 1, ix] + 3)
                if ix < width - 1:
                    v = min(v, d[iy + 1, ix + 1] + 4)
                if ix > 0:
                    v = min(v, d[iy + 1, ix - 1] + 4)
            d[iy, ix] = v
    return d * (w / 3.0)


def distance_transform(grid: GridMap, metric: str = "euclidean") -> DistanceField:
    """Distance (meters) from every cell to the nearest occupied cell.

    ``metric`` is "euclidean" (exact) or "chamfer" (chamfer-3-4, faster,
    within the usual ~8% chamfer bound). A map without occupied cells yields
    an all +inf field.
    """
    if metric not in ("euclidean", "chamfer"):
        raise MapError(f"unknown distance metric {metric!r}")
    if not grid.occupied.any():
        return DistanceField(grid, np.full(grid.occupied.shape, np.inf), None, metric)
    # indices are computed in both modes; the chirality labeling needs them
    meters, nearest = ndimage.distance_transform_edt(
        ~grid.occupied, sampling=grid.resolution, return_indices=True)
    if metric == "chamfer":
        meters = _chamfer34(grid.occupied, grid.resolution)
    return DistanceField(grid, meters, nearest, metric)


def _touched_indices(v: float) -> tuple[int, ...]:
    """Grid-unit coordinate -> indices of the cell columns/rows it touches."""
    r = round(v)
    if abs(v - r) <= _EPS:
        return (r - 1, r)
    return (math.floor(v),)


def supercover_cells(grid: GridMap, a: tuple[float, float],
                     b: tuple[float, float]) -> list[tuple[int, int]]:
    """All cells the closed segment a-b touches (conservative traversal).

    A segment grazing a cell corner or running along a cell boundary touches
    the cells on both sides. Returned indices are clipped to the grid; both
    endpoints must lie inside the map bounds.
    """
    if not (grid.in_bounds_world(*a) and grid.in_bounds_world(*b)):
        raise MapError("supercover endpoints must lie inside the map bounds")
    w = grid.resolution
    ox, oy = grid.origin
    ax, ay = (a[0] - ox) / w, (a[1] - oy) / w
    bx, by = (b[0] - ox) / w, (b[1] - oy) / w
    dx, dy = bx - ax, by - ay

    ts = {0.0, 1.0}
    if abs(dx) > _EPS:
        lo, hi = min(ax, bx), max(ax, bx)
        for k in range(math.ceil(lo - _EPS), math.floor(hi + _EPS) + 1):
            t = (k - ax) / dx
            if _EPS < t < 1.0 - _EPS:
                ts.add(t)
    if abs(dy) > _EPS:
        lo, hi = min(ay, by), max(ay, by)
        for k in range(math.ceil(lo - _EPS), math.floor(hi + _EPS) + 1):
            t = (k - ay) / dy
            if _EPS < t < 1.0 - _EPS:
                ts.add(t)
    order = sorted(ts)

    cells: set[tuple[int, int]] = set()

    def visit(x: float, y: float):
        for ix in _touched_indices(x):
            if not 0 <= ix < grid.width:
                continue
            for iy in _touched_indices(y):
                if 0 <= iy < grid.height:
                    cells.add((ix, iy))

    for t in order:
        visit(ax + t * dx, ay + t * dy)
    for t0, t1 in zip(order, order[1:]):
        tm = 0.5 * (t0 + t1)
        visit(ax + tm * dx, ay + tm * dy)
    return sorted(cells)


# Prepared union of every occupied cell, cached per map (maps are immutable).
_OCCUPIED_GEOMETRY: weakref.WeakKeyDictionary = weakref.WeakKeyDictionary()


def occupied_geometry(grid: GridMap):
    """Prepared GEOS union of all occupied cells, or None for an empty map."""
    geom = _OCCUPIED_GEOMETRY.get(grid)
    if geom is None and grid not in _OCCUPIED_GEOMETRY:
        iy, ix = np.nonzero(grid.occupied)
        if len(ix) == 0:
            geom = None
        else:
            w = grid.resolution
            x0 = grid.origin[0] + ix * w
            y0 = grid.origin[1] + iy * w
            geom = shapely.union_all(shapely.box(x0, y0, x0 + w, y0 + w))
            shapely.prepare(geom)
        _OCCUPIED_GEOMETRY[grid] = geom
    return geom


def line_of_sight(grid: GridMap, a: tuple[float, float], b: tuple[float, float]) -> bool:
    """True iff the closed segment a-b touches no occupied cell.

    Grazing an occupied corner or running along an occupied cell's boundary
    already blocks visibility; an endpoint inside an occupied cell yields
    False. Evaluated with exact geometric predicates on the union of
    occupied cells (equivalent to scanning the supercover traversal).
    """
    if not (grid.in_bounds_world(*a) and grid.in_bounds_world(*b)):
        raise MapError("line-of-sight endpoints must lie inside the map bounds")
    geom = occupied_geometry(grid)
    if geom is None:
        return True
    return not shapely.intersects(geom, shapely.LineString((a, b)))
