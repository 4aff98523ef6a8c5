"""Episode generation by rejection sampling, solvability checks and splits."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .embodiment import ground_truth_view, interact_range, interaction_poses
from .errors import GenerationExhausted, InvalidCounts, ParseError
from .preferences import PlacementClass, PreferenceTable, classify
from .world import Cell, GridScene, Heading, ObjectInstance

MISPLACED_RANGE = (3, 5)
TOTAL_RANGE = (7, 10)
DEFAULT_MAX_STEPS = 1000
RETRY_BUDGET = 1000

EPISODE_SPLITS = {
    # episode split -> (scene split, object split)
    "train": ("train", "seen"),
    "val-seen": ("val", "seen"),
    "val-unseen": ("val", "val-unseen"),
    "test-seen": ("test", "seen"),
    "test-unseen": ("test", "test-unseen"),
}


@dataclass
class EpisodeObject:
    id: str
    category: str
    on: str
    misplaced: bool


@dataclass
class Episode:
    id: str
    scene_id: str
    agent_start: tuple[Cell, Heading]
    objects: list[EpisodeObject]
    max_steps: int = DEFAULT_MAX_STEPS

    @property
    def placements(self) -> dict[str, str]:
        return {o.id: o.on for o in self.objects}

    @property
    def categories(self) -> dict[str, str]:
        return {o.id: o.category for o in self.objects}

    @property
    def misplaced_ids(self) -> set[str]:
        return {o.id for o in self.objects if o.misplaced}

    def instances(self) -> list[ObjectInstance]:
        return [ObjectInstance(o.id, o.category, o.on) for o in self.objects]

    def to_dict(self) -> dict:
        cell, heading = self.agent_start
        return {
            "id": self.id,
            "scene_id": self.scene_id,
            "max_steps": self.max_steps,
            "agent_start": {"cell": list(cell), "heading": heading.name},
            "objects": [
                {"id": o.id, "category": o.category, "on": o.on, "misplaced": o.misplaced} for o in self.objects
            ],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Episode":
        try:
            start = d["agent_start"]
            return cls(
                id=str(d.get("id", "")),
                scene_id=str(d["scene_id"]),
                agent_start=((int(start["cell"][0]), int(start["cell"][1])), Heading[start["heading"]]),
                objects=[EpisodeObject(str(o["id"]), str(o["category"]), str(o["on"]), bool(o["misplaced"]))
                         for o in d["objects"]],
                max_steps=int(d["max_steps"]),
            )
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise ParseError(f"episode record: {exc!r}") from None


def write_episodes(episodes: Iterable[Episode], path: str | Path) -> None:
    with open(path, "w") as fh:
        for ep in episodes:
            fh.write(json.dumps(ep.to_dict(), separators=(",", ":")) + "\n")


def read_episodes(path: str | Path) -> list[Episode]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(Episode.from_dict(json.loads(line)))
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
    return out


# -- solvability --------------------------------------------------------------


def _reachable_cells(scene: GridScene, start: Cell) -> set[Cell]:
    return set(scene.distances_from(start))


def _in_range_reachable(scene: GridScene, reachable: set[Cell], target: Cell) -> bool:
    poses = interaction_poses(ground_truth_view(scene), target, interact_range(scene))
    return any(cell in reachable for cell, _ in poses)


def _free_capacity(scene: GridScene, placements: Mapping[str, str], exclude: str | None = None) -> dict[str, int]:
    load = Counter(r for o, r in placements.items() if o != exclude)
    return {rec.id: rec.capacity - load[rec.id] for rec in scene.receptacles}


def correct_receptacles(scene: GridScene, table: PreferenceTable, category: str) -> list[str]:
    out = []
    for rec in scene.receptacles:
        key = (category, scene.room_category(rec.id), rec.category)
        if key in table and classify(table, *key) is PlacementClass.CORRECT:
            out.append(rec.id)
    return out


def check_graspable(scene: GridScene, agent_start: Cell, placements: Mapping[str, str], obj: str) -> bool:
    rec = scene.receptacle_by_id[placements[obj]]
    return _in_range_reachable(scene, _reachable_cells(scene, agent_start), rec.cell)


def check_solvable(
    scene: GridScene,
    table: PreferenceTable,
    agent_start: Cell,
    placements: Mapping[str, str],
    categories: Mapping[str, str],
    obj: str,
) -> bool:
    """Can the agent reach ``obj``, pick it, and reach a Correct receptacle with room?"""
    reachable = _reachable_cells(scene, agent_start)
    rec = scene.receptacle_by_id[placements[obj]]
    if not _in_range_reachable(scene, reachable, rec.cell):
        return False
    free = _free_capacity(scene, placements, exclude=obj)
    for rid in correct_receptacles(scene, table, categories[obj]):
        if free[rid] > 0 and _in_range_reachable(scene, reachable, scene.receptacle_by_id[rid].cell):
            return True
    return False


def joint_assignment_exists(
    scene: GridScene,
    table: PreferenceTable,
    placements: Mapping[str, str],
    categories: Mapping[str, str],
    misplaced: Iterable[str],
) -> bool:
    """All misplaced objects fit simultaneously on Correct receptacles (bipartite matching over slots)."""
    misplaced = sorted(misplaced)
    free = _free_capacity(scene, {o: r for o, r in placements.items() if o not in misplaced})
    slots = [rid for rid in sorted(free) for _ in range(max(free[rid], 0))]
    options = {o: set(correct_receptacles(scene, table, categories[o])) for o in misplaced}
    match: dict[int, str] = {}

    def augment(o: str, seen: set[int]) -> bool:
        for i, rid in enumerate(slots):
            if rid in options[o] and i not in seen:
                seen.add(i)
                if i not in match or augment(match[i], seen):
                    match[i] = o
                    return True
        return False

    return all(augment(o, set()) for o in misplaced)


# -- generation --------------------------------------------------------------


def _start_pose(scene: GridScene, rng: np.random.Generator) -> tuple[Cell, Heading]:
    recs = [r.cell for r in scene.receptacles]
    cells = sorted(
        c for c in scene.free_cells if all(abs(c[0] - r[0]) + abs(c[1] - r[1]) >= 2 for r in recs)
    )
    if not cells:
        raise GenerationExhausted(f"scene {scene.id!r} has no Free cell 2+ cells from every receptacle")
    cell = cells[int(rng.integers(len(cells)))]
    heading = list(Heading)[int(rng.integers(4))]
    return cell, heading


def generate_episode(
    scene: GridScene,
    table: PreferenceTable,
    n_m: int,
    n_c: int,
    seed: int,
    objects: Iterable[str] | None = None,
    max_steps: int = DEFAULT_MAX_STEPS,
    episode_id: str = "",
    retries: int = RETRY_BUDGET,
) -> Episode:
    """Sample a solvable episode: ``n_m`` misplaced then ``n_c`` correctly placed objects.

    Categories are distinct within an episode until the eligible pool runs
    out, after which repeats are allowed. Only objects with at least one
    Correct receptacle in the scene are eligible; misplaced ones also need a
    Misplaced receptacle there.
    """
    lo, hi = MISPLACED_RANGE
    tlo, thi = TOTAL_RANGE
    if not (lo <= n_m <= hi) or not (tlo <= n_m + n_c <= thi) or n_c < 0:
        raise InvalidCounts(f"need {lo}-{hi} misplaced and {tlo}-{thi} total objects, got {n_m} + {n_c}")
    rng = np.random.default_rng(seed)
    pool = sorted(set(objects) if objects is not None else table.objects)
    rec_class: dict[str, dict[str, list[str]]] = {}
    for cat in pool:
        by_cls = {"correct": [], "misplaced": []}
        for rec in scene.receptacles:
            key = (cat, scene.room_category(rec.id), rec.category)
            if key not in table:
                continue
            cls = classify(table, *key)
            if cls is PlacementClass.CORRECT:
                by_cls["correct"].append(rec.id)
            elif cls is PlacementClass.MISPLACED:
                by_cls["misplaced"].append(rec.id)
        if by_cls["correct"]:
            rec_class[cat] = by_cls

    start = _start_pose(scene, rng)
    placements: dict[str, str] = {}
    categories: dict[str, str] = {}
    misplaced: list[str] = []
    full = _free_capacity

    def sample(kind: str, count: int) -> None:
        for _ in range(count):
            oid = f"obj{len(placements)}"
            for _attempt in range(retries):
                usable = [c for c in rec_class if rec_class[c][kind]]
                eligible = [c for c in usable if c not in categories.values()] or usable
                if not eligible:
                    raise GenerationExhausted(f"scene {scene.id!r}: no eligible categories left for a {kind} object")
                cat = eligible[int(rng.integers(len(eligible)))]
                free = full(scene, placements)
                recs = [r for r in rec_class[cat][kind] if free[r] > 0]
                if not recs:
                    continue
                rid = recs[int(rng.integers(len(recs)))]
                placements[oid], categories[oid] = rid, cat
                if kind == "misplaced":
                    ok = check_solvable(scene, table, start[0], placements, categories, oid) and \
                        joint_assignment_exists(scene, table, placements, categories, misplaced + [oid])
                else:
                    ok = check_graspable(scene, start[0], placements, oid) and \
                        joint_assignment_exists(scene, table, placements, categories, misplaced)
                if ok:
                    if kind == "misplaced":
                        misplaced.append(oid)
                    break
                del placements[oid], categories[oid]
            else:
                raise GenerationExhausted(f"scene {scene.id!r}: {retries} attempts failed to place a {kind} object")

    sample("misplaced", n_m)
    sample("correct", n_c)
    objs = [EpisodeObject(o, categories[o], placements[o], o in misplaced) for o in placements]
    return Episode(episode_id, scene.id, start, objs, max_steps)


@dataclass
class SplitConfig:
    scene_splits: dict[str, str]  # scene id -> train | val | test
    counts: dict[str, int] = field(default_factory=lambda: {
        "train": 100, "val-seen": 20, "val-unseen": 20, "test-seen": 20, "test-unseen": 20,
    })
    max_steps: int = DEFAULT_MAX_STEPS

    @classmethod
    def for_scenes(cls, scene_ids: Iterable[str], **kw) -> "SplitConfig":
        """8:2:4 train/val/test over sorted scene ids, at least one each when possible."""
        ids = sorted(scene_ids)
        n = len(ids)
        if n < 3:
            return cls({s: "all" for s in ids}, **kw)
        n_val = max(1, round(n * 2 / 14))
        n_test = max(1, round(n * 4 / 14))
        n_train = n - n_val - n_test
        splits = ["train"] * n_train + ["val"] * n_val + ["test"] * n_test
        return cls(dict(zip(ids, splits)), **kw)

    def scenes_for(self, scene_split: str) -> list[str]:
        return sorted(s for s, sp in self.scene_splits.items() if sp in (scene_split, "all"))


def generate_split(
    config: SplitConfig,
    scenes: Mapping[str, GridScene],
    table: PreferenceTable,
    seed: int,
) -> dict[str, list[Episode]]:
    """Episodes per split; object categories follow the catalog's split field."""
    out: dict[str, list[Episode]] = {}
    for split_idx, split in enumerate(EPISODE_SPLITS):
        count = config.counts.get(split, 0)
        if count <= 0:
            continue
        scene_split, object_split = EPISODE_SPLITS[split]
        scene_ids = config.scenes_for(scene_split)
        if not scene_ids:
            raise GenerationExhausted(f"no scenes assigned to the {scene_split!r} split")
        objects = [o for o in table.objects if table.split_of(o) == object_split]
        episodes = []
        for i in range(count):
            rng = np.random.default_rng([seed, split_idx, i])
            scene = scenes[scene_ids[i % len(scene_ids)]]
            n_m = int(rng.integers(MISPLACED_RANGE[0], MISPLACED_RANGE[1] + 1))
            total = int(rng.integers(TOTAL_RANGE[0], TOTAL_RANGE[1] + 1))
            ep_seed = int(rng.integers(2**32))
            episodes.append(generate_episode(
                scene, table, n_m, total - n_m, ep_seed, objects, config.max_steps, f"{split}-{i:05d}",
            ))
        out[split] = episodes
    return out
