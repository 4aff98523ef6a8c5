"""Agent dynamics, ground-truth sensing, the magic-pointer interaction and
shortest-path navigation over (cell, heading) states."""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable

from .errors import BudgetExhausted, NoPath
from .world import Cell, GridScene, Heading, step_cell

FOV_DEPTH = 12
INTERACT_REACH_M = 1.5


def interact_range(scene: GridScene) -> int:
    return round(INTERACT_REACH_M / scene.cell_size_m)


class Action(enum.Enum):
    FORWARD = "forward"
    TURN_LEFT = "turn_left"
    TURN_RIGHT = "turn_right"
    INTERACT = "interact"


MOTIONS = (Action.FORWARD, Action.TURN_LEFT, Action.TURN_RIGHT)


class Outcome(enum.Enum):
    PICKED = "picked"
    PLACED = "placed"
    PLACE_FAILED = "place_failed"
    NO_TARGET = "no_target"
    NO_OP = "no_op"


@dataclass(frozen=True)
class AgentState:
    cell: Cell
    heading: Heading
    held: str | None = None
    step_count: int = 0

    @property
    def pose(self) -> tuple[Cell, Heading]:
        return (self.cell, self.heading)


@dataclass(frozen=True)
class Interaction:
    outcome: Outcome
    object: str | None = None
    receptacle: str | None = None

    def to_dict(self) -> dict:
        return {"outcome": self.outcome.value, "object": self.object, "receptacle": self.receptacle}


@dataclass(frozen=True)
class Observation:
    visible_cells: frozenset[Cell]
    visible_instances: tuple[tuple[str, str, str], ...]  # (id, category, "object" | "receptacle")
    on_top: tuple[tuple[str, str], ...]  # (object id, receptacle id)
    receptacle_rooms: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class StepResult:
    state: AgentState
    observation: Observation
    collision: bool
    interaction: Interaction | None


# -- geometry ----------------------------------------------------------------


def bresenham(a: Cell, b: Cell) -> list[Cell]:
    """Integer line from ``a`` to ``b`` inclusive."""
    r0, c0 = a
    r1, c1 = b
    dr, dc = abs(r1 - r0), abs(c1 - c0)
    sr = 1 if r1 >= r0 else -1
    sc = 1 if c1 >= c0 else -1
    cells = []
    if dc >= dr:
        err = dc // 2
        r = r0
        for c in range(c0, c1 + sc, sc):
            cells.append((r, c))
            err -= dr
            if err < 0:
                r += sr
                err += dc
    else:
        err = dr // 2
        c = c0
        for r in range(r0, r1 + sr, sr):
            cells.append((r, c))
            err -= dc
            if err < 0:
                c += sc
                err += dr
    return cells


def in_cone(origin: Cell, heading: Heading, cell: Cell, depth: int) -> bool:
    """90-degree cone: forward offset in [1, depth] and |lateral| <= forward."""
    dr, dc = cell[0] - origin[0], cell[1] - origin[1]
    hr, hc = heading.delta
    forward = dr * hr + dc * hc
    lateral = dr * hc - dc * hr
    return 0 < forward <= depth and abs(lateral) <= forward


def visible_cells(scene: GridScene, cell: Cell, heading: Heading, depth: int = FOV_DEPTH) -> frozenset[Cell]:
    """Cells in the view cone with an unobstructed Bresenham line of sight.

    The endpoint itself may be an Obstacle (walls are seen). Memoised per scene.
    """
    memo = scene._cache.setdefault("vis", {})
    key = (cell, heading, depth)
    hit = memo.get(key)
    if hit is not None:
        return hit
    out = {cell}
    for r in range(cell[0] - depth, cell[0] + depth + 1):
        for c in range(cell[1] - depth, cell[1] + depth + 1):
            target = (r, c)
            if not scene.in_bounds(target) or not in_cone(cell, heading, target, depth):
                continue
            line = bresenham(cell, target)
            if all(scene.is_free(x) for x in line[1:-1]):
                out.add(target)
    res = frozenset(out)
    memo[key] = res
    return res


def cast_ray(
    start: Cell,
    heading: Heading,
    reach: int,
    passable: Callable[[Cell], bool],
    stops: Callable[[Cell], bool],
) -> tuple[Cell | None, int]:
    """First cell along the ray that ``stops`` it, within ``reach`` cells.

    Returns ``(cell, distance)``; ``(None, k)`` when blocked by a non-passable
    cell at distance ``k`` or when nothing is hit (``k == reach + 1``).
    """
    for k in range(1, reach + 1):
        cell = step_cell(start, heading, k)
        if not passable(cell):
            return None, k
        if stops(cell):
            return cell, k
    return None, reach + 1


# -- pure dynamics -----------------------------------------------------------


def apply_motion(scene: GridScene, state: AgentState, action: Action) -> tuple[AgentState, bool]:
    """Pose update for a motion action; returns (state, collided)."""
    if action is Action.TURN_LEFT:
        return replace(state, heading=state.heading.left()), False
    if action is Action.TURN_RIGHT:
        return replace(state, heading=state.heading.right()), False
    if action is Action.FORWARD:
        nxt = step_cell(state.cell, state.heading)
        if scene.is_free(nxt):
            return replace(state, cell=nxt), False
        return state, True
    return state, False


def interact(
    scene: GridScene,
    state: AgentState,
    placements: dict[str, str | None],
    target: str | None = None,
) -> tuple[AgentState, Interaction]:
    """Magic pointer. Mutates ``placements`` on success.

    The ray stops at the first cell holding a receptacle (objects always rest
    on receptacles). Empty-handed: pick ``target`` if it rests there, else the
    smallest object id there. Holding: place on the hit receptacle if it has
    room and (when given) ``target`` names that receptacle.
    """
    receptacles = scene.receptacles_at
    hit, _ = cast_ray(state.cell, state.heading, interact_range(scene), scene.is_free, receptacles.__contains__)
    if hit is None:
        return state, Interaction(Outcome.NO_TARGET)
    rec = receptacles[hit]
    resting = sorted(o for o, r in placements.items() if r == rec.id)
    if state.held is None:
        if not resting:
            return state, Interaction(Outcome.NO_OP, None, rec.id)
        if target is None:
            obj = resting[0]
        elif target in resting:
            obj = target
        else:
            return state, Interaction(Outcome.NO_OP, target, rec.id)
        placements[obj] = None
        return replace(state, held=obj), Interaction(Outcome.PICKED, obj, rec.id)
    if target is not None and target != rec.id:
        return state, Interaction(Outcome.NO_OP, state.held, rec.id)
    if len(resting) >= rec.capacity:
        return state, Interaction(Outcome.PLACE_FAILED, state.held, rec.id)
    obj = state.held
    placements[obj] = rec.id
    return replace(state, held=None), Interaction(Outcome.PLACED, obj, rec.id)


def observe(
    scene: GridScene,
    state: AgentState,
    placements: dict[str, str | None],
    categories: dict[str, str],
    depth: int = FOV_DEPTH,
) -> Observation:
    cells = visible_cells(scene, state.cell, state.heading, depth)
    instances = []
    on_top = []
    rooms = {}
    recs = [scene.receptacles_at[c] for c in sorted(cells) if c in scene.receptacles_at]
    rec_ids = {r.id for r in recs}
    for rec in recs:
        instances.append((rec.id, rec.category, "receptacle"))
        rooms[rec.id] = scene.room_category(rec.id)
    for obj in sorted(placements):
        on = placements[obj]
        if on in rec_ids:
            instances.append((obj, categories[obj], "object"))
            on_top.append((obj, on))
    return Observation(cells, tuple(instances), tuple(on_top), rooms)


class Simulator:
    """Mutable ground-truth state of one episode."""

    def __init__(
        self,
        scene: GridScene,
        state: AgentState,
        placements: dict[str, str],
        categories: dict[str, str],
        max_steps: int,
        fov_depth: int = FOV_DEPTH,
    ):
        self.scene = scene
        self.state = state
        self.placements: dict[str, str | None] = dict(placements)
        self.categories = dict(categories)
        self.max_steps = max_steps
        self.fov_depth = fov_depth
        self.log: list[dict] = []

    @property
    def t(self) -> int:
        return self.state.step_count

    @property
    def remaining(self) -> int:
        return self.max_steps - self.state.step_count

    def observe(self) -> Observation:
        return observe(self.scene, self.state, self.placements, self.categories, self.fov_depth)

    def step(self, action: Action, target: str | None = None) -> StepResult:
        if self.state.step_count >= self.max_steps:
            raise BudgetExhausted(f"step budget of {self.max_steps} exhausted")
        interaction = None
        collision = False
        if action is Action.INTERACT:
            state, interaction = interact(self.scene, self.state, self.placements, target)
        else:
            state, collision = apply_motion(self.scene, self.state, action)
        self.state = replace(state, step_count=state.step_count + 1)
        obs = self.observe()
        self.log.append({
            "t": self.state.step_count,
            "action": action.value,
            "pose": {"cell": list(self.state.cell), "heading": self.state.heading.name},
            "held": self.state.held,
            "collision": collision,
            "interaction": interaction.to_dict() if interaction else None,
        })
        return StepResult(self.state, obs, collision, interaction)

    def event(self, kind: str, detail) -> None:
        self.log.append({"t": self.state.step_count, "event": kind, "detail": detail})


# -- navigation --------------------------------------------------------------


@dataclass
class MapView:
    """What the navigator may assume: traversable cells and ray-stopping cells."""

    passable: set[Cell] | frozenset[Cell]
    stops: set[Cell] | frozenset[Cell]


def ground_truth_view(scene: GridScene) -> MapView:
    return MapView(scene.free_cells, frozenset(scene.receptacles_at))


def interaction_poses(view: MapView, target: Cell, reach: int) -> set[tuple[Cell, Heading]]:
    """Poses from which the ray's first stopping cell is ``target``."""
    poses = set()
    for heading in Heading:
        dr, dc = heading.delta
        for k in range(1, reach + 1):
            origin = (target[0] - k * dr, target[1] - k * dc)
            if origin not in view.passable:
                break
            between = [step_cell(origin, heading, j) for j in range(1, k)]
            if all(c in view.passable and c not in view.stops for c in between):
                poses.add((origin, heading))
    return poses


def plan_path(view: MapView, start: tuple[Cell, Heading], goals: Iterable[tuple[Cell, Heading]]) -> list[Action]:
    """Breadth-first search over (cell, heading); every action costs 1."""
    goals = set(goals)
    if not goals:
        raise NoPath("no goal poses")
    if start in goals:
        return []
    parent: dict[tuple[Cell, Heading], tuple[tuple[Cell, Heading], Action]] = {start: (start, Action.FORWARD)}
    queue = deque([start])
    while queue:
        pose = queue.popleft()
        cell, heading = pose
        for action in MOTIONS:
            if action is Action.FORWARD:
                nxt_cell = step_cell(cell, heading)
                if nxt_cell not in view.passable:
                    continue
                nxt = (nxt_cell, heading)
            elif action is Action.TURN_LEFT:
                nxt = (cell, heading.left())
            else:
                nxt = (cell, heading.right())
            if nxt in parent:
                continue
            parent[nxt] = (pose, action)
            if nxt in goals:
                path = []
                while nxt != start:
                    nxt, act = parent[nxt]
                    path.append(act)
                return path[::-1]
            queue.append(nxt)
    raise NoPath(f"no path from {start[0]} to any of {len(goals)} goal poses")


def navigate_to(view: MapView, state: AgentState, target: Cell, reach: int) -> list[Action]:
    """Shortest motion sequence ending with ``target`` first on the interaction ray."""
    return plan_path(view, state.pose, interaction_poses(view, target, reach))


# -- skills ------------------------------------------------------------------


@dataclass
class SkillOutcome:
    success: bool
    status: str  # picked | placed | place_failed | no_path | target_lost | budget
    actions: int


def run_skill(
    sim: Simulator,
    view: MapView,
    target_cell: Cell,
    target_id: str,
    after_step: Callable[[StepResult], None],
) -> SkillOutcome:
    """Navigate into interaction range of ``target_cell`` and interact with ``target_id``.

    ``target_id`` is an object to pick when empty-handed, a receptacle to
    place on when holding.
    """
    spent = 0
    try:
        actions = navigate_to(view, sim.state, target_cell, interact_range(sim.scene))
    except NoPath:
        return SkillOutcome(False, "no_path", 0)
    try:
        for action in actions:
            after_step(sim.step(action))
            spent += 1
        res = sim.step(Action.INTERACT, target_id)
        after_step(res)
        spent += 1
    except BudgetExhausted:
        return SkillOutcome(False, "budget", spent)
    outcome = res.interaction.outcome
    if outcome is Outcome.PICKED:
        return SkillOutcome(True, "picked", spent)
    if outcome is Outcome.PLACED:
        return SkillOutcome(True, "placed", spent)
    if outcome is Outcome.PLACE_FAILED:
        return SkillOutcome(False, "place_failed", spent)
    return SkillOutcome(False, "target_lost", spent)


def pick_object(sim, view, object_cell, object_id, after_step) -> SkillOutcome:
    return run_skill(sim, view, object_cell, object_id, after_step)


def place_object(sim, view, receptacle_cell, receptacle_id, after_step) -> SkillOutcome:
    return run_skill(sim, view, receptacle_cell, receptacle_id, after_step)
