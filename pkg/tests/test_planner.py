from __future__ import annotations

import numpy as np
import pytest

from conftest import direct_table, make_scene
from housekeep.episodes import Episode, EpisodeObject, generate_episode
from housekeep.mapping import AlloMap, Explorer
from housekeep.planner import Ordering, PlannerConfig, pending_rearrangements, run_planner
from housekeep.ranker.scoring import ExternalScores, OracleScores, RandomScores, ScoreModel, score_joint
from housekeep.world import Heading

GRID = ["." * 10] * 6
RECS = [("shelf", "shelf", (0, 1)), ("sink", "sink", (0, 8)), ("desk", "desk", (5, 8))]


def toy(objects, start=((3, 4), Heading.N), max_steps=500):
    scene = make_scene(GRID, RECS)
    ep = Episode("e", scene.id, start, [EpisodeObject(*o) for o in objects], max_steps)
    return scene, ep


TABLE = direct_table({
    ("cup", "kitchen", "shelf"): (0.0, 0.9), ("cup", "kitchen", "sink"): (0.9, 0.0), ("cup", "kitchen", "desk"): (0.6, 0.1, 2.0),
    ("pen", "kitchen", "shelf"): (0.1, 0.8), ("pen", "kitchen", "sink"): (0.0, 0.9), ("pen", "kitchen", "desk"): (0.9, 0.0),
})


class Silent(ScoreModel):
    """Never calls anything misplaced."""

    def score_or(self, obj, room):
        return 1.0

    def score_orr(self, obj, room, receptacle):
        return 1.0


def test_all_correct_means_no_plan():
    scene, ep = toy([("c1", "cup", "sink", False), ("p1", "pen", "desk", False)])
    res = run_planner(scene, ep, OracleScores(TABLE), Explorer("oracle", 0))
    assert res.interactions == []
    assert res.final == ep.placements


def test_oracle_fixes_misplaced_objects():
    scene, ep = toy([("c1", "cup", "shelf", True), ("p1", "pen", "shelf", True)])
    res = run_planner(scene, ep, OracleScores(TABLE), Explorer("oracle", 0))
    assert res.final == {"c1": "sink", "p1": "desk"}
    assert [it["kind"] for it in res.interactions] == ["pick", "place"] * 2


def test_target_is_joint_argmax():
    scene, ep = toy([("c1", "cup", "shelf", True)])
    amap = AlloMap.full(scene, ep.placements, ep.categories)
    scores = {"cup|kitchen": 1.0, "cup|kitchen|shelf": 0.1, "cup|kitchen|sink": 0.3, "cup|kitchen|desk": 0.4}
    model = ExternalScores(scores)
    joint = dict(score_joint(model, "cup", [("kitchen", r) for r in ("shelf", "sink", "desk")]))
    assert joint[("kitchen", "desk")] == pytest.approx(0.5)
    plan = pending_rearrangements(amap, model, 0.2)
    assert [(p.object, p.receptacle) for p in plan] == [("c1", "desk")]
    # above-threshold current placement is left alone
    scores["cup|kitchen|shelf"] = 0.25
    assert pending_rearrangements(amap, model, 0.2) == []


def test_blacklist_and_held_first():
    scene, ep = toy([("c1", "cup", "shelf", True), ("p1", "pen", "shelf", True)])
    amap = AlloMap.full(scene, ep.placements, ep.categories)
    model = OracleScores(TABLE)
    plan = pending_rearrangements(amap, model, 0.5, blacklist={("c1", "sink")})
    assert {(p.object, p.receptacle) for p in plan} == {("c1", "desk"), ("p1", "desk")}
    amap.objects["p1"] = amap.objects["p1"].__class__(**{**amap.objects["p1"].__dict__, "on": None})
    plan = pending_rearrangements(amap, model, 0.5, held="p1")
    assert plan[0].object == "p1"


@pytest.mark.parametrize("seed", range(5))
def test_score_gain_ordering(world, scenes, seed):
    scene = scenes[sorted(scenes)[seed % len(scenes)]]
    ep = generate_episode(scene, world.table, 5, 5, seed)
    amap = AlloMap.full(scene, ep.placements, ep.categories)
    model = RandomScores(seed)
    plan = pending_rearrangements(amap, model, 0.5, Ordering.SCORE_GAIN)
    places = {r.id: (scene.room_category(r.id), r.category) for r in scene.receptacles}
    cands = sorted(set(places.values()))
    for p in plan:
        joint = dict(score_joint(model, ep.categories[p.object], cands))
        assert p.gain == pytest.approx(joint[places[p.receptacle]] - joint[places[ep.placements[p.object]]])
    gains = [p.gain for p in plan]
    assert gains == sorted(gains, reverse=True)


def test_distance_orderings_sorted(world, scenes):
    scene = scenes[sorted(scenes)[0]]
    ep = generate_episode(scene, world.table, 5, 5, 3)
    amap = AlloMap.full(scene, ep.placements, ep.categories)
    model = OracleScores(world.table)
    base = {p.object for p in pending_rearrangements(amap, model, 0.5)}
    for order in Ordering:
        plan = pending_rearrangements(amap, model, 0.5, order, agent_cell=ep.agent_start[0])
        assert {p.object for p in plan} == base


def test_budget_starvation():
    scene, ep = toy([("c1", "cup", "shelf", True)], start=((5, 9), Heading.S))
    res = run_planner(scene, ep, OracleScores(TABLE), Explorer("oracle", 0), PlannerConfig(n_e=2, max_steps=3))
    assert res.interactions == []
    assert res.steps <= 3


def test_no_action_after_budget(world, scenes):
    for i, sid in enumerate(sorted(scenes)):
        ep = generate_episode(scenes[sid], world.table, 4, 4, i, max_steps=60)
        for kind in ("frontier", "random", "forward-right"):
            res = run_planner(scenes[sid], ep, RandomScores(i), Explorer(kind, i), PlannerConfig(n_e=8))
            assert res.steps <= 60
            assert all(rec["t"] <= 60 for rec in res.log)
            assert sum(1 for rec in res.log if "action" in rec) == res.steps


@pytest.mark.parametrize("seed", range(8))
def test_oracle_never_touches_correct_objects(world, scenes, seed):
    scene = scenes[sorted(scenes)[seed % len(scenes)]]
    ep = generate_episode(scene, world.table, 3 + seed % 3, 4 + seed % 2, 100 + seed)
    for kind in ("oracle", "frontier"):
        res = run_planner(scene, ep, OracleScores(world.table), Explorer(kind, seed))
        touched = {it["object"] for it in res.interactions}
        assert touched <= ep.misplaced_ids


def test_exploration_bursts_last_n_e(world, scenes):
    scene = scenes[sorted(scenes)[0]]
    ep = generate_episode(scene, world.table, 3, 4, 0, max_steps=120)
    for n_e in (1, 5, 16):
        res = run_planner(scene, ep, Silent(), Explorer("forward-right", 1), PlannerConfig(n_e=n_e))
        starts = [rec["t"] for rec in res.log if rec.get("event") == "explore" and rec["detail"] == {"steps": n_e}]
        assert res.steps == 120
        assert starts == list(range(0, 120, n_e))


def test_idle_stop_when_exhausted():
    scene, ep = toy([("c1", "cup", "sink", False)], max_steps=500)
    res = run_planner(scene, ep, Silent(), Explorer("frontier", 0))
    assert res.steps < 500
    assert res.log[-1] == {"t": res.steps, "event": "explore", "detail": {"exhausted": True}}
    assert res.explored_cells == res.navigable_area


def test_config_validation():
    with pytest.raises(ValueError):
        PlannerConfig(n_e=0)
    with pytest.raises(ValueError):
        PlannerConfig(n_e=8, max_steps=4)
    with pytest.raises(ValueError):
        PlannerConfig(ordering="sideways")
    assert PlannerConfig(ordering="score-gain").ordering is Ordering.SCORE_GAIN
