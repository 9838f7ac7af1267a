"""Squad motion prediction for indoor search and rescue.

Pipeline: occupancy map -> room graph -> per-room planning graphs ->
tactic-constrained waypoint plans -> headed-social-force trajectory
simulation.
"""

from sarsim.mapgrid import GridMap, DistanceField, load_map, distance_transform, line_of_sight
from sarsim.rooms import Room, Doorway, RoomGraph, load_rooms, room_sequence
from sarsim.tactics import Tactic

__all__ = [
    "GridMap",
    "DistanceField",
    "load_map",
    "distance_transform",
    "line_of_sight",
    "Room",
    "Doorway",
    "RoomGraph",
    "load_rooms",
    "room_sequence",
    "Tactic",
]
