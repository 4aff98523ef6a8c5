"""Explore/rearrange control loop and the rearrangement plan it follows."""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .embodiment import AgentState, Simulator, StepResult, pick_object, place_object
from .episodes import Episode
from .errors import Exhausted
from .mapping import AlloMap, Explorer, Strategy
from .metrics import EpisodeResult
from .preferences import Place
from .ranker.scoring import ScoreModel, score_joint
from .world import Cell, GridScene, bfs_distances, navigable_area


class Ordering(enum.Enum):
    DISCOVERY_TIME = "discovery"
    SCORE_GAIN = "score-gain"
    AGENT_OBJECT_DIST = "agent-object"
    OBJECT_RECEPTACLE_DIST = "object-receptacle"


@dataclass
class PlannerConfig:
    n_e: int = 16
    max_steps: int | None = None  # overrides the episode budget when set
    ordering: Ordering = Ordering.DISCOVERY_TIME
    s_L: float = 0.5

    def __post_init__(self):
        self.ordering = Ordering(self.ordering)
        if self.n_e < 1:
            raise ValueError("n_e must be >= 1")
        if self.max_steps is not None and self.max_steps < self.n_e:
            raise ValueError("max_steps must be >= n_e")


@dataclass(frozen=True)
class PlannedRearrangement:
    object: str
    receptacle: str
    gain: float


def pending_rearrangements(
    amap: AlloMap,
    model: ScoreModel,
    s_L: float,
    ordering: Ordering = Ordering.DISCOVERY_TIME,
    agent_cell: Cell | None = None,
    held: str | None = None,
    blacklist: set[tuple[str, str]] | frozenset = frozenset(),
) -> list[PlannedRearrangement]:
    """Objects the model thinks are misplaced, each with its best discovered target.

    An object is planned when its current receptacle scores at or below ``s_L``
    and some other discovered receptacle scores above it. The target is the
    joint-probability argmax among those (ties: smaller receptacle id). A held
    object always comes first.
    """
    recs = sorted(amap.receptacles.items())
    if not recs:
        return []
    place_of = {rid: (room, cat) for rid, (_, cat, room) in recs}
    candidates = sorted(set(place_of.values()))
    joint_cache: dict[str, dict[Place, float]] = {}

    def joint(category: str) -> dict[Place, float]:
        if category not in joint_cache:
            joint_cache[category] = dict(score_joint(model, category, candidates))
        return joint_cache[category]

    plan, held_item = [], None
    for obj in sorted(amap.objects):
        known = amap.objects[obj]
        if obj != held and known.on is None:
            continue
        cat = known.category
        current = None if obj == held else known.on
        if current is not None and model.score_orr(cat, *place_of[current]) > s_L:
            continue
        options = [
            rid for rid, _ in recs
            if rid != current and (obj, rid) not in blacklist and model.score_orr(cat, *place_of[rid]) > s_L
        ]
        if not options:
            continue
        probs = joint(cat)
        target = min(options, key=lambda rid: (-probs[place_of[rid]], rid))
        gain = probs[place_of[target]] - (probs[place_of[current]] if current is not None else 0.0)
        item = PlannedRearrangement(obj, target, gain)
        if obj == held:
            held_item = item
        else:
            plan.append(item)

    def cell_of_object(obj: str) -> Cell:
        return amap.receptacles[amap.objects[obj].on][0]

    if ordering is Ordering.DISCOVERY_TIME:
        plan.sort(key=lambda r: (amap.objects[r.object].t_discovered, r.object))
    elif ordering is Ordering.SCORE_GAIN:
        plan.sort(key=lambda r: (-r.gain, r.object))
    elif ordering is Ordering.AGENT_OBJECT_DIST:
        dist = bfs_distances(amap.known_free, agent_cell) if agent_cell is not None else {}
        plan.sort(key=lambda r: (dist.get(cell_of_object(r.object), float("inf")), r.object))
    else:
        def o_r(r: PlannedRearrangement) -> float:
            d = bfs_distances(amap.known_free, cell_of_object(r.object))
            return d.get(amap.receptacles[r.receptacle][0], float("inf"))
        plan.sort(key=lambda r: (o_r(r), r.object))
    return ([held_item] if held_item else []) + plan


def run_planner(
    scene: GridScene,
    episode: Episode,
    model: ScoreModel,
    explorer: Explorer,
    config: PlannerConfig | None = None,
) -> EpisodeResult:
    """Alternate n_e-step exploration bursts with rearrangements until the budget ends.

    The plan is recomputed after every rearrangement attempt and at the end of
    each exploration burst. Failed attempts blacklist the (object, receptacle)
    pair for the rest of the episode. The episode stops early when the plan is
    empty and exploration is exhausted.
    """
    cfg = config or PlannerConfig()
    budget = cfg.max_steps if cfg.max_steps is not None else episode.max_steps
    cell, heading = episode.agent_start
    sim = Simulator(scene, AgentState(cell, heading), episode.placements, episode.categories, budget)
    if explorer.kind is Strategy.ORACLE:
        amap = AlloMap.full(scene, sim.placements, sim.categories)
    else:
        amap = AlloMap(scene.shape)
    amap.update(sim.observe(), scene, 0)

    interactions: list[dict] = []
    blacklist: set[tuple[str, str]] = set()

    def after_step(res: StepResult) -> None:
        amap.update(res.observation, scene, sim.t, res.state.held)
        it = res.interaction
        if it is not None and it.outcome.value in ("picked", "placed"):
            interactions.append({
                "t": sim.t, "object": it.object,
                "kind": "pick" if it.outcome.value == "picked" else "place",
                "receptacle": it.receptacle,
            })

    def plan() -> list[PlannedRearrangement]:
        return pending_rearrangements(amap, model, cfg.s_L, cfg.ordering, sim.state.cell, sim.state.held, blacklist)

    collided = False
    while sim.t < budget:
        todo = plan()
        if not todo:
            sim.event("explore", {"steps": cfg.n_e})
            exhausted = False
            for _ in range(cfg.n_e):
                if sim.t >= budget:
                    break
                try:
                    action = explorer.act(amap, sim.state, collided)
                except Exhausted:
                    exhausted = True
                    break
                res = sim.step(action)
                after_step(res)
                collided = res.collision
            if exhausted and not plan():
                sim.event("explore", {"exhausted": True})
                break
            continue

        item = todo[0]
        sim.event("plan", [[r.object, r.receptacle, r.gain] for r in todo])
        if sim.state.held != item.object:
            on = amap.objects[item.object].on
            sim.event("pick", {"object": item.object, "from": on})
            out = pick_object(sim, amap.view(), amap.receptacles[on][0], item.object, after_step)
            collided = False
            if out.status == "budget":
                break
            if not out.success:
                blacklist.add((item.object, item.receptacle))
                continue
        sim.event("place", {"object": item.object, "on": item.receptacle})
        out = place_object(sim, amap.view(), amap.receptacles[item.receptacle][0], item.receptacle, after_step)
        collided = False
        if out.status == "budget":
            break
        if not out.success:
            blacklist.add((item.object, item.receptacle))

    return EpisodeResult(
        episode_id=episode.id,
        scene_id=scene.id,
        categories=episode.categories,
        initial=episode.placements,
        misplaced=sorted(episode.misplaced_ids),
        final=dict(sim.placements),
        interactions=interactions,
        discovered={o: d.t_discovered for o, d in sorted(amap.objects.items())},
        explored_cells=amap.explored,
        navigable_area=navigable_area(scene),
        places={r.id: [scene.room_category(r.id), r.category] for r in scene.receptacles},
        steps=sim.t,
        max_steps=budget,
        log=sim.log,
    )
