import pytest
import shapely

from conftest import grid_from_rows
from sarsim.rooms import (Doorway, Room, RoomError, RoomGraph, UnreachableError,
                          load_rooms, room_route, room_sequence)
from sarsim.tactics import Tactic

# 6x5 map: two rooms split by a wall with a gap at (3, 2)
GRID = grid_from_rows(["######",
                       "#..#.#",
                       "#....#",
                       "#..#.#",
                       "######"])

META = {
    "rooms": [
        {"id": "west", "polygon": [[1, 1], [3, 1], [3, 4], [1, 4]]},
        {"id": "east", "polygon": [[3, 1], [5, 1], [5, 4], [3, 4]]},
    ],
    "doorways": [
        {"id": "d0", "room_a": "west", "room_b": "east",
         "segment": [[3.0, 2.2], [3.0, 2.8]]},
    ],
}


def test_load_rooms_valid():
    rg = load_rooms(META, GRID)
    assert sorted(rg.rooms) == ["east", "west"]
    assert rg.rooms["west"].entry_doorways == ["d0"]
    assert rg.doorways["d0"].midpoint == (3.0, 2.5)
    assert rg.doorways["d0"].other_room("west") == "east"
    assert [r for r, _ in rg.neighbors("west")] == ["east"]


def test_room_masks_exclude_occupied_cells():
    rg = load_rooms(META, GRID)
    mask = rg.rooms["west"].cell_mask(GRID)
    assert mask.sum() == 6  # 2x3 block of free cell centers inside the polygon
    centers = rg.rooms["west"].free_cell_centers(GRID)
    assert all(GRID.is_occupied_world(x, y) is False for x, y in centers)


def _meta(**overrides):
    meta = {"rooms": [dict(r) for r in META["rooms"]],
            "doorways": [dict(d) for d in META["doorways"]]}
    meta.update(overrides)
    return meta


@pytest.mark.parametrize("mutate, match", [
    (lambda m: m["rooms"].append({"id": "west", "polygon": [[1, 1], [2, 1], [2, 2]]}),
     "duplicate or reserved"),
    (lambda m: m["rooms"].append({"id": "exterior", "polygon": [[1, 1], [2, 1], [2, 2]]}),
     "duplicate or reserved"),
    (lambda m: m["rooms"].append({"id": "bad", "polygon": [[1, 1], [1, 1], [1, 1]]}),
     "positive-area"),
    (lambda m: m["rooms"].append({"id": "overlap", "polygon": [[1, 1], [4, 1], [4, 4], [1, 4]]}),
     "overlap"),
    (lambda m: m["doorways"].append({"id": "d1", "room_a": "west", "room_b": "nowhere",
                                     "segment": [[3.0, 2.2], [3.0, 2.8]]}),
     "unknown room"),
    (lambda m: m["doorways"].append({"id": "d0", "room_a": "west", "room_b": "east",
                                     "segment": [[3.0, 2.2], [3.0, 2.8]]}),
     "duplicate doorway"),
    (lambda m: m["doorways"].append({"id": "d1", "room_a": "west", "room_b": "west",
                                     "segment": [[3.0, 2.2], [3.0, 2.8]]}),
     "distinct rooms"),
    (lambda m: m["doorways"].append({"id": "d1", "room_a": "west", "room_b": "east",
                                     "segment": [[1.5, 5.5], [1.5, 5.6]]}),
     "not adjacent"),
    (lambda m: m["doorways"].append({"id": "d1", "room_a": "west", "room_b": "east",
                                     "segment": [[3.0, 1.2], [3.0, 1.8]]}),
     "occupied"),
])
def test_load_rooms_rejects_invalid(mutate, match):
    meta = _meta()
    mutate(meta)
    with pytest.raises(RoomError, match=match):
        load_rooms(meta, GRID)


def test_room_route_two_rooms():
    rg = load_rooms(META, GRID)
    rooms, doors = room_route(rg, "west", "east")
    assert rooms == ["west", "east"]
    assert [d.id for d in doors] == ["d0"]
    assert room_route(rg, "west", "west") == (["west"], [])
    with pytest.raises(RoomError):
        room_route(rg, "west", "attic")


def _synthetic_graph(doorways: list[Doorway]) -> RoomGraph:
    unit = shapely.Polygon([(0, 0), (1, 0), (1, 1), (0, 1)])
    rooms = {}
    for d in doorways:
        for rid in (d.room_a, d.room_b):
            rooms.setdefault(rid, Room(id=rid, polygon=unit))
            rooms[rid].entry_doorways.append(d.id)
    return RoomGraph(rooms=rooms, doorways={d.id: d for d in doorways})


def test_room_route_picks_cheaper_chain():
    # A -> D via B costs 2 (doorway midpoints 2 apart), via C costs 10
    rg = _synthetic_graph([
        Doorway("a_b", "A", "B", ((0.0, 0.0), (0.0, 0.0))),
        Doorway("b_d", "B", "D", ((2.0, 0.0), (2.0, 0.0))),
        Doorway("a_c", "A", "C", ((0.0, 0.0), (0.0, 0.0))),
        Doorway("c_d", "C", "D", ((10.0, 0.0), (10.0, 0.0))),
    ])
    rooms, doors = room_route(rg, "A", "D")
    assert rooms == ["A", "B", "D"]
    assert [d.id for d in doors] == ["a_b", "b_d"]


def test_room_route_breaks_cost_ties_lexicographically():
    # both chains cost exactly 2; B < C so the B path must win
    rg = _synthetic_graph([
        Doorway("a_b", "A", "B", ((0.0, 0.0), (0.0, 0.0))),
        Doorway("b_d", "B", "D", ((2.0, 0.0), (2.0, 0.0))),
        Doorway("a_c", "A", "C", ((0.0, 0.0), (0.0, 0.0))),
        Doorway("c_d", "C", "D", ((0.0, 2.0), (0.0, 2.0))),
    ])
    assert room_sequence(rg, "A", "D") == ["A", "B", "D"]


def test_room_route_unreachable():
    rg = _synthetic_graph([
        Doorway("a_b", "A", "B", ((0.0, 0.0), (0.0, 0.0))),
        Doorway("c_d", "C", "D", ((0.0, 2.0), (0.0, 2.0))),
    ])
    with pytest.raises(UnreachableError):
        room_route(rg, "A", "D")


def test_exterior_doorways_are_not_traversable():
    rg = _synthetic_graph([
        Doorway("a_out", "A", "exterior", ((0.0, 0.0), (0.0, 0.0))),
        Doorway("b_out", "B", "exterior", ((1.0, 0.0), (1.0, 0.0))),
    ])
    assert rg.neighbors("A") == []
    with pytest.raises(UnreachableError):
        room_route(rg, "A", "B")


def test_tactic_parse():
    assert Tactic.parse(" free ") is Tactic.FREE
    assert Tactic.parse("wall_lhr") is Tactic.WALL_LHR
    assert Tactic.WALL_RHR.is_wall and not Tactic.FREE.is_wall
    with pytest.raises(ValueError, match="unknown tactic"):
        Tactic.parse("diagonal")
