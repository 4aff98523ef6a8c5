"""Static scene representation on a 4-connected occupancy grid."""

from __future__ import annotations

import enum
import json
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping

from .errors import InvalidCell, ParseError, ValidationError

Cell = tuple[int, int]

DEFAULT_CELL_SIZE = 0.25
DEFAULT_CAPACITY = 4
FREE, OBSTACLE = ".", "#"

SCENE_KEYS = ("id", "cell_size_m", "grid", "rooms", "receptacles")
ROOM_KEYS = ("id", "category", "cells")
RECEPTACLE_KEYS = ("id", "category", "room", "cell", "capacity")


class Heading(enum.Enum):
    N = (-1, 0)
    E = (0, 1)
    S = (1, 0)
    W = (0, -1)

    @property
    def delta(self) -> Cell:
        return self.value

    def left(self) -> "Heading":
        return _LEFT[self]

    def right(self) -> "Heading":
        return _RIGHT[self]


_ORDER = [Heading.N, Heading.E, Heading.S, Heading.W]
_RIGHT = {h: _ORDER[(i + 1) % 4] for i, h in enumerate(_ORDER)}
_LEFT = {h: _ORDER[(i - 1) % 4] for i, h in enumerate(_ORDER)}


def step_cell(cell: Cell, heading: Heading, k: int = 1) -> Cell:
    dr, dc = heading.delta
    return (cell[0] + k * dr, cell[1] + k * dc)


def neighbors4(cell: Cell) -> Iterable[Cell]:
    r, c = cell
    yield (r - 1, c)
    yield (r, c + 1)
    yield (r + 1, c)
    yield (r, c - 1)


@dataclass(frozen=True)
class Room:
    id: str
    category: str
    cells: frozenset[Cell]


@dataclass(frozen=True)
class Receptacle:
    id: str
    category: str
    room: str
    cell: Cell
    capacity: int = DEFAULT_CAPACITY


@dataclass(frozen=True)
class ObjectCategory:
    name: str
    high_level: str
    split: str  # seen | val-unseen | test-unseen


@dataclass(frozen=True)
class ObjectInstance:
    id: str
    category: str
    on: str


@dataclass(frozen=True, eq=False)
class GridScene:
    """Immutable scene. Construct through ``load_scene`` to get validation."""

    id: str
    grid: tuple[str, ...]
    rooms: tuple[Room, ...]
    receptacles: tuple[Receptacle, ...]
    cell_size_m: float = DEFAULT_CELL_SIZE
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.grid), (len(self.grid[0]) if self.grid else 0)

    def in_bounds(self, cell: Cell) -> bool:
        r, c = cell
        rows, cols = self.shape
        return 0 <= r < rows and 0 <= c < cols

    def is_free(self, cell: Cell) -> bool:
        return self.in_bounds(cell) and self.grid[cell[0]][cell[1]] == FREE

    @cached_property
    def free_cells(self) -> frozenset[Cell]:
        return frozenset(
            (r, c) for r, row in enumerate(self.grid) for c, ch in enumerate(row) if ch == FREE
        )

    @cached_property
    def room_of_cell(self) -> dict[Cell, str]:
        return {cell: room.id for room in self.rooms for cell in room.cells}

    @cached_property
    def room_by_id(self) -> dict[str, Room]:
        return {room.id: room for room in self.rooms}

    @cached_property
    def receptacle_by_id(self) -> dict[str, Receptacle]:
        return {rec.id: rec for rec in self.receptacles}

    @cached_property
    def receptacles_at(self) -> dict[Cell, Receptacle]:
        return {rec.cell: rec for rec in self.receptacles}

    def room_category(self, receptacle_id: str) -> str:
        return self.room_by_id[self.receptacle_by_id[receptacle_id].room].category

    @cached_property
    def placement_keys(self) -> tuple[tuple[str, str], ...]:
        """Distinct (room-category, receptacle-category) pairs present in the scene."""
        keys = {(self.room_by_id[r.room].category, r.category) for r in self.receptacles}
        return tuple(sorted(keys))

    def distances_from(self, source: Cell) -> dict[Cell, int]:
        """BFS layer index of every Free cell reachable from ``source`` (memoised)."""
        memo = self._cache.setdefault("dist", {})
        if source not in memo:
            memo[source] = bfs_distances(self.free_cells, source)
        return memo[source]


def bfs_distances(passable: frozenset[Cell] | set[Cell], source: Cell) -> dict[Cell, int]:
    dist = {source: 0}
    queue = deque([source])
    while queue:
        cell = queue.popleft()
        d = dist[cell] + 1
        for nb in neighbors4(cell):
            if nb in passable and nb not in dist:
                dist[nb] = d
                queue.append(nb)
    return dist


def geodesic_distance(scene: GridScene, start: Cell, goal: Cell) -> int | None:
    """Shortest 4-connected path length in cells, or ``None`` when unreachable."""
    for cell in (start, goal):
        if not scene.is_free(cell):
            raise InvalidCell(f"cell {cell} is not a Free cell of scene {scene.id!r}")
    return scene.distances_from(start).get(goal)


def navigable_area(scene: GridScene) -> int:
    return len(scene.free_cells)


def validate_scene(scene: GridScene) -> None:
    """Raise ``ValidationError`` naming the first invariant violation found."""
    rows, cols = scene.shape
    if rows == 0 or cols == 0:
        raise ValidationError(f"scene {scene.id!r}: empty grid")
    for r, row in enumerate(scene.grid):
        if len(row) != cols:
            raise ValidationError(f"scene {scene.id!r}: grid row {r} has length {len(row)}, expected {cols}")
        bad = set(row) - {FREE, OBSTACLE}
        if bad:
            raise ValidationError(f"scene {scene.id!r}: grid row {r} has unknown symbols {sorted(bad)}")
    free = scene.free_cells
    if not free:
        raise ValidationError(f"scene {scene.id!r}: no Free cells")

    start = min(free)
    reached = bfs_distances(free, start)
    if len(reached) != len(free):
        stray = min(free - reached.keys())
        raise ValidationError(f"free space is disconnected: cell {list(stray)} unreachable from {list(start)}")

    labeled: dict[Cell, str] = {}
    seen_rooms: set[str] = set()
    for room in scene.rooms:
        if room.id in seen_rooms:
            raise ValidationError(f"duplicate room id {room.id!r}")
        seen_rooms.add(room.id)
        if not room.cells:
            raise ValidationError(f"room {room.id!r} has no cells")
        for cell in sorted(room.cells):
            if cell not in free:
                raise ValidationError(f"room {room.id!r} labels non-Free cell {list(cell)}")
            if cell in labeled:
                raise ValidationError(f"cell {list(cell)} labeled by rooms {labeled[cell]!r} and {room.id!r}")
            labeled[cell] = room.id
        start = min(room.cells)
        if len(bfs_distances(room.cells, start)) != len(room.cells):
            raise ValidationError(f"room {room.id!r} cells are not connected")
    unlabeled = sorted(free - labeled.keys())
    if unlabeled:
        raise ValidationError(f"Free cell {list(unlabeled[0])} has no room label")

    seen_recs: set[str] = set()
    occupied: dict[Cell, str] = {}
    for rec in scene.receptacles:
        if rec.id in seen_recs:
            raise ValidationError(f"duplicate receptacle id {rec.id!r}")
        seen_recs.add(rec.id)
        if not scene.in_bounds(rec.cell) or rec.cell not in free:
            raise ValidationError(f"receptacle {rec.id!r} sits on non-Free cell {list(rec.cell)}")
        if rec.cell in occupied:
            raise ValidationError(f"receptacles {occupied[rec.cell]!r} and {rec.id!r} share cell {list(rec.cell)}")
        occupied[rec.cell] = rec.id
        if rec.room not in seen_rooms:
            raise ValidationError(f"receptacle {rec.id!r} references unknown room {rec.room!r}")
        if labeled[rec.cell] != rec.room:
            raise ValidationError(
                f"receptacle {rec.id!r} declares room {rec.room!r} but its cell belongs to {labeled[rec.cell]!r}"
            )
        if rec.capacity < 1:
            raise ValidationError(f"receptacle {rec.id!r} has capacity {rec.capacity} < 1")
        if not any(nb in free for nb in neighbors4(rec.cell)):
            raise ValidationError(f"receptacle {rec.id!r} at {list(rec.cell)} has no Free neighbor")


def _cell(value, where: str) -> Cell:
    if not (isinstance(value, list) and len(value) == 2 and all(isinstance(v, int) for v in value)):
        raise ParseError(f"{where}: expected [row, col], got {value!r}")
    return (value[0], value[1])


def _check_keys(obj, expected: tuple[str, ...], where: str, optional: tuple[str, ...] = ()) -> None:
    if not isinstance(obj, dict):
        raise ParseError(f"{where}: expected an object")
    missing = [k for k in expected if k not in obj and k not in optional]
    extra = [k for k in obj if k not in expected]
    if missing or extra:
        raise ParseError(f"{where}: missing keys {missing}, unexpected keys {extra}")


def scene_from_dict(data: Mapping) -> GridScene:
    _check_keys(data, SCENE_KEYS, "scene")
    grid = data["grid"]
    if not isinstance(grid, list) or not all(isinstance(row, str) for row in grid):
        raise ParseError("scene.grid: expected a list of strings")
    rooms = []
    for i, room in enumerate(data["rooms"]):
        _check_keys(room, ROOM_KEYS, f"rooms[{i}]")
        cells = frozenset(_cell(c, f"rooms[{i}].cells") for c in room["cells"])
        rooms.append(Room(str(room["id"]), str(room["category"]), cells))
    recs = []
    for i, rec in enumerate(data["receptacles"]):
        _check_keys(rec, RECEPTACLE_KEYS, f"receptacles[{i}]", optional=("capacity",))
        capacity = rec.get("capacity", DEFAULT_CAPACITY)
        if not isinstance(capacity, int):
            raise ParseError(f"receptacles[{i}].capacity: expected integer")
        recs.append(
            Receptacle(
                str(rec["id"]), str(rec["category"]), str(rec["room"]),
                _cell(rec["cell"], f"receptacles[{i}].cell"), capacity,
            )
        )
    try:
        cell_size = float(data["cell_size_m"])
    except (TypeError, ValueError) as exc:
        raise ParseError(f"scene.cell_size_m: {exc}") from None
    return GridScene(str(data["id"]), tuple(grid), tuple(rooms), tuple(recs), cell_size)


def load_scene(path: str | Path) -> GridScene:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None
    scene = scene_from_dict(data)
    validate_scene(scene)
    return scene


def dumps_scene(scene: GridScene) -> str:
    """Serialise with one grid row / room / receptacle per line; stable byte output."""
    def enc(v) -> str:
        return json.dumps(v, separators=(", ", ": "))

    lines = ["{", f'  "id": {enc(scene.id)},', f'  "cell_size_m": {enc(scene.cell_size_m)},', '  "grid": [']
    lines += [f"    {enc(row)}," for row in scene.grid]
    lines[-1] = lines[-1].rstrip(",")
    lines += ["  ],", '  "rooms": [']
    for room in scene.rooms:
        d = {"id": room.id, "category": room.category, "cells": [list(c) for c in sorted(room.cells)]}
        lines.append(f"    {enc(d)},")
    if scene.rooms:
        lines[-1] = lines[-1].rstrip(",")
    lines += ["  ],", '  "receptacles": [']
    for rec in scene.receptacles:
        d = {"id": rec.id, "category": rec.category, "room": rec.room, "cell": list(rec.cell), "capacity": rec.capacity}
        lines.append(f"    {enc(d)},")
    if scene.receptacles:
        lines[-1] = lines[-1].rstrip(",")
    lines += ["  ]", "}"]
    return "\n".join(lines) + "\n"


def write_scene(scene: GridScene, path: str | Path) -> None:
    Path(path).write_text(dumps_scene(scene))


def load_scenes(paths: Iterable[str | Path]) -> dict[str, GridScene]:
    """Load scene files (or every ``*.json`` in a directory) keyed by scene id."""
    scenes: dict[str, GridScene] = {}
    for p in paths:
        p = Path(p)
        files = sorted(p.glob("*.json")) if p.is_dir() else [p]
        for f in files:
            scene = load_scene(f)
            scenes[scene.id] = scene
    return scenes
