"""Allocentric map accumulation and exploration strategies."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .embodiment import Action, AgentState, MapView, Observation, plan_path
from .errors import Exhausted, NoPath
from .world import Cell, GridScene, Heading, bfs_distances, neighbors4, step_cell

UNKNOWN, FREE, OBSTACLE = 0, 1, 2


@dataclass
class DiscoveredObject:
    category: str
    on: str | None
    t_discovered: int


class AlloMap:
    """Top-down map in scene coordinates; cells only ever leave ``UNKNOWN``."""

    def __init__(self, shape: tuple[int, int]):
        self.status = np.zeros(shape, dtype=np.int8)
        self.known_free: set[Cell] = set()
        self.receptacles: dict[str, tuple[Cell, str, str]] = {}  # id -> (cell, category, room)
        self.receptacle_cells: dict[Cell, str] = {}
        self.objects: dict[str, DiscoveredObject] = {}

    @classmethod
    def full(cls, scene: GridScene, placements: dict[str, str | None], categories: dict[str, str], t: int = 0) -> "AlloMap":
        """Complete knowledge of the scene, as granted by oracle exploration."""
        amap = cls(scene.shape)
        for r, row in enumerate(scene.grid):
            for c, ch in enumerate(row):
                amap.status[r, c] = FREE if ch == "." else OBSTACLE
        amap.known_free = set(scene.free_cells)
        for rec in scene.receptacles:
            amap.receptacles[rec.id] = (rec.cell, rec.category, scene.room_category(rec.id))
            amap.receptacle_cells[rec.cell] = rec.id
        for obj in sorted(placements):
            amap.objects[obj] = DiscoveredObject(categories[obj], placements[obj], t)
        return amap

    @property
    def explored(self) -> int:
        return len(self.known_free)

    def view(self) -> MapView:
        return MapView(self.known_free, set(self.receptacle_cells))

    def update(self, obs: Observation, scene: GridScene, t: int, held: str | None = None) -> None:
        for cell in obs.visible_cells:
            if self.status[cell] == UNKNOWN:
                if scene.is_free(cell):
                    self.status[cell] = FREE
                    self.known_free.add(cell)
                else:
                    self.status[cell] = OBSTACLE
        cats = {}
        for inst_id, category, kind in obs.visible_instances:
            if kind == "receptacle":
                rec = scene.receptacle_by_id[inst_id]
                room = obs.receptacle_rooms[inst_id]
                self.receptacles[inst_id] = (rec.cell, category, room)
                self.receptacle_cells[rec.cell] = inst_id
            else:
                cats[inst_id] = category
        seen_on = dict(obs.on_top)
        visible_recs = {i for i, _, k in obs.visible_instances if k == "receptacle"}
        for obj_id, known in self.objects.items():
            if obj_id not in seen_on and known.on in visible_recs:
                known.on = None
        for obj_id, rec_id in seen_on.items():
            known = self.objects.get(obj_id)
            if known is None:
                self.objects[obj_id] = DiscoveredObject(cats[obj_id], rec_id, t)
            else:
                known.on = rec_id
        if held is not None and held in self.objects:
            self.objects[held].on = None

    def has_frontier(self) -> bool:
        return any(self._is_frontier(c) for c in self.known_free)

    def _is_frontier(self, cell: Cell) -> bool:
        rows, cols = self.status.shape
        for r, c in neighbors4(cell):
            if 0 <= r < rows and 0 <= c < cols and self.status[r, c] == UNKNOWN:
                return True
        return False

    def dump(self, agent: AgentState | None = None) -> str:
        """Text grid: ``?`` unknown, ``.`` free, ``#`` obstacle, ``R`` receptacle, ``@`` agent."""
        chars = {UNKNOWN: "?", FREE: ".", OBSTACLE: "#"}
        rows = [[chars[int(v)] for v in row] for row in self.status]
        for cell in self.receptacle_cells:
            rows[cell[0]][cell[1]] = "R"
        if agent is not None:
            rows[agent.cell[0]][agent.cell[1]] = "@"
        return "\n".join("".join(r) for r in rows)


def update_map(amap: AlloMap, obs: Observation, scene: GridScene, t: int, held: str | None = None) -> AlloMap:
    amap.update(obs, scene, t, held)
    return amap


def frontiers(amap: AlloMap, agent_cell: Cell) -> list[Cell]:
    """Known-free cells next to unknown space, nearest first (row-major tie-break).

    Frontiers unreachable through known-free space are listed last.
    """
    dist = bfs_distances(amap.known_free, agent_cell) if agent_cell in amap.known_free else {}
    cells = [c for c in amap.known_free if amap._is_frontier(c)]
    inf = float("inf")
    return sorted(cells, key=lambda c: (dist.get(c, inf), c))


class Strategy(enum.Enum):
    FRONTIER = "frontier"
    RANDOM = "random"
    FORWARD_RIGHT = "forward-right"
    ORACLE = "oracle"


class Explorer:
    """Stateful exploration policy; one instance per episode."""

    def __init__(self, kind: Strategy | str, seed: int = 0):
        self.kind = Strategy(kind)
        self.rng = np.random.default_rng(seed)
        self._plan: list[Action] = []
        self._goal: Cell | None = None

    def act(self, amap: AlloMap, state: AgentState, collided: bool = False) -> Action:
        if self.kind is Strategy.ORACLE:
            raise Exhausted("oracle exploration starts with a complete map")
        if self.kind is Strategy.FRONTIER:
            return self._frontier_step(amap, state)
        if not amap.has_frontier():
            raise Exhausted("no frontiers remain")
        if self.kind is Strategy.RANDOM:
            return (Action.FORWARD, Action.TURN_LEFT, Action.TURN_RIGHT)[int(self.rng.integers(3))]
        return Action.TURN_RIGHT if collided else Action.FORWARD

    def _frontier_step(self, amap: AlloMap, state: AgentState) -> Action:
        if self._plan and self._goal is not None and amap._is_frontier(self._goal):
            return self._plan.pop(0)
        self._plan, self._goal = [], None
        view = amap.view()
        dist = bfs_distances(amap.known_free, state.cell)
        candidates = sorted((d, c) for c, d in dist.items() if amap._is_frontier(c))
        for _, goal in candidates:
            rows, cols = amap.status.shape
            goals = set()
            for h in Heading:
                r, c = step_cell(goal, h)
                if 0 <= r < rows and 0 <= c < cols and amap.status[r, c] == UNKNOWN:
                    goals.add((goal, h))
            try:
                plan = plan_path(view, state.pose, goals)
            except NoPath:
                continue
            if plan:
                self._plan, self._goal = plan, goal
                return self._plan.pop(0)
        raise Exhausted("no reachable frontiers remain")


def explore_step(explorer: Explorer, amap: AlloMap, state: AgentState, collided: bool = False) -> Action:
    return explorer.act(amap, state, collided)
