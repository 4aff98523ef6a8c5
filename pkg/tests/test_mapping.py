from __future__ import annotations

import numpy as np
import pytest

from housekeep.embodiment import Action, AgentState, Simulator, observe
from housekeep.errors import Exhausted
from housekeep.mapping import FREE, OBSTACLE, UNKNOWN, AlloMap, Explorer, frontiers
from housekeep.synth import synth_scene
from housekeep.world import Heading, navigable_area

from conftest import make_scene


def explore(scene, kind, start=(1, 1), heading=Heading.E, steps=400, seed=0, placements=None):
    placements = placements or {}
    sim = Simulator(scene, AgentState(start, heading), placements, {o: "cup" for o in placements}, steps)
    amap = AlloMap(scene.shape)
    amap.update(sim.observe(), scene, 0)
    ex = Explorer(kind, seed)
    collided, explored = False, [amap.explored]
    while sim.t < steps:
        try:
            a = ex.act(amap, sim.state, collided)
        except Exhausted:
            break
        res = sim.step(a)
        amap.update(res.observation, scene, sim.t, res.state.held)
        collided = res.collision
        explored.append(amap.explored)
    return sim, amap, explored


def test_first_observation_leaves_unknown():
    scene = make_scene(["." * 6] * 6)
    amap = AlloMap(scene.shape)
    assert amap.explored == 0
    obs = observe(scene, AgentState((3, 0), Heading.E), {}, {})
    amap.update(obs, scene, 0)
    assert all(amap.status[c] == FREE for c in obs.visible_cells)
    assert amap.explored == len(obs.visible_cells)


def test_discovery_time_is_first_sighting():
    scene = make_scene(["." * 6] * 3, [("t", "table", (1, 5))])
    amap = AlloMap(scene.shape)
    facing = observe(scene, AgentState((1, 0), Heading.E), {"o": "t"}, {"o": "cup"})
    away = observe(scene, AgentState((1, 0), Heading.W), {"o": "t"}, {"o": "cup"})
    amap.update(facing, scene, 7)
    amap.update(away, scene, 12)
    amap.update(facing, scene, 20)
    assert amap.objects["o"].t_discovered == 7 and amap.objects["o"].on == "t"
    assert amap.receptacles["t"] == ((1, 5), "table", "kitchen")


def test_full_coverage_equals_ground_truth():
    scene = synth_scene("s", 3)
    sim, amap, explored = explore(scene, "frontier", start=min(scene.free_cells), steps=5000)
    assert amap.explored == navigable_area(scene)
    for r, row in enumerate(scene.grid):
        for c, ch in enumerate(row):
            if ch == ".":
                assert amap.status[r, c] == FREE
            elif amap.status[r, c] != UNKNOWN:  # interior walls may never be seen
                assert amap.status[r, c] == OBSTACLE
    assert explored == sorted(explored)
    assert frontiers(amap, sim.state.cell) == []


def test_frontiers_in_corridor():
    scene = make_scene(["#" * 11, "." * 11, "#" * 11])
    amap = AlloMap(scene.shape)
    for c in range(3, 8):
        amap.status[1, c] = FREE
        amap.known_free.add((1, c))
    amap.status[0, :] = OBSTACLE
    amap.status[2, :] = OBSTACLE
    fr = frontiers(amap, (1, 4))
    assert fr == [(1, 3), (1, 7)]
    # brute-force adjacency scan
    scan = [c for c in amap.known_free if any(
        0 <= c[0] + dr < 3 and 0 <= c[1] + dc < 11 and amap.status[c[0] + dr, c[1] + dc] == UNKNOWN
        for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)))]
    assert sorted(scan) == sorted(fr)


def test_no_frontiers_means_exhausted():
    scene = make_scene(["..."])
    amap = AlloMap.full(scene, {}, {})
    for kind in ("frontier", "random", "forward-right", "oracle"):
        with pytest.raises(Exhausted):
            Explorer(kind).act(amap, AgentState((0, 0), Heading.E))


def test_forward_right_turns_after_collision():
    scene = make_scene(["." * 5] * 5)
    amap = AlloMap(scene.shape)
    amap.update(observe(scene, AgentState((0, 0), Heading.E), {}, {}), scene, 0)
    ex = Explorer("forward-right")
    assert ex.act(amap, AgentState((0, 0), Heading.E), collided=False) is Action.FORWARD
    assert ex.act(amap, AgentState((0, 0), Heading.E), collided=True) is Action.TURN_RIGHT


def test_frontier_open_room_coverage_bound():
    scene = make_scene(["." * 10] * 10)
    sim, amap, _ = explore(scene, "frontier", start=(0, 0), heading=Heading.N, steps=4 * 100)
    assert amap.explored == 100
    assert sim.t <= 400


def test_random_is_seed_deterministic():
    scene = synth_scene("s", 1)
    start = min(scene.free_cells)
    a = explore(scene, "random", start=start, steps=200, seed=5)[0].log
    b = explore(scene, "random", start=start, steps=200, seed=5)[0].log
    c = explore(scene, "random", start=start, steps=200, seed=6)[0].log
    assert a == b and a != c


def test_pick_clears_object_position():
    scene = make_scene(["." * 6], [("t", "table", (0, 3))])
    sim = Simulator(scene, AgentState((0, 0), Heading.E), {"o": "t"}, {"o": "cup"}, 10)
    amap = AlloMap(scene.shape)
    amap.update(sim.observe(), scene, 0)
    res = sim.step(Action.INTERACT)
    amap.update(res.observation, scene, 1, res.state.held)
    assert "o" in amap.objects and amap.objects["o"].on is None
    assert "R" in amap.dump(sim.state)
