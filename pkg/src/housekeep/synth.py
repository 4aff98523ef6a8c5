"""Synthetic scenes, object catalogs and word vectors for desk-scale runs."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .preferences import (
    AnnotationRecord,
    PreferenceTable,
    aggregate,
    save_catalog,
    save_table,
    synth_preferences,
    write_annotations,
)
from .world import GridScene, ObjectCategory, Receptacle, Room, write_scene

ROOM_RECEPTACLES = {
    "kitchen": ["counter", "fridge", "cabinet", "table", "shelf", "stove", "floor"],
    "living_room": ["sofa", "coffee_table", "shelf", "tv_stand", "chair", "floor"],
    "bedroom": ["bed", "nightstand", "dresser", "wardrobe", "chair", "floor"],
    "bathroom": ["sink", "cabinet", "shelf", "bathtub", "counter"],
    "office": ["desk", "shelf", "chair", "cabinet", "floor"],
    "garage": ["shelf", "workbench", "cabinet", "floor"],
    "dining_room": ["table", "chair", "cabinet", "shelf"],
    "laundry_room": ["washer", "dryer", "shelf", "counter", "floor"],
    "hallway": ["shelf", "cabinet", "floor"],
}
ROOM_TYPES = list(ROOM_RECEPTACLES)

HIGH_LEVEL = ["food", "toy", "stationery", "kitchenware", "toiletry", "clothing", "electronics", "tool", "sports", "decor"]


def synth_scene(
    scene_id: str,
    seed: int,
    layout: tuple[int, int] = (2, 3),
    room_size: tuple[int, int] = (5, 6),
    receptacles_per_room: tuple[int, int] = (3, 5),
    capacity: int = 4,
    room_types: list[str] | None = None,
) -> GridScene:
    """A block of rectangular rooms separated by 1-cell walls with doorways.

    Doorways follow a random spanning tree over the room grid (plus one extra
    door when possible), so free space is always connected.
    """
    rng = np.random.default_rng(seed)
    n_r, n_c = layout
    h, w = room_size
    rows, cols = n_r * (h + 1) + 1, n_c * (w + 1) + 1
    grid = [["#"] * cols for _ in range(rows)]

    def interior(i: int, j: int) -> list[tuple[int, int]]:
        r0, c0 = i * (h + 1) + 1, j * (w + 1) + 1
        return [(r, c) for r in range(r0, r0 + h) for c in range(c0, c0 + w)]

    cells_of = {}
    for i in range(n_r):
        for j in range(n_c):
            cells_of[(i, j)] = interior(i, j)
            for r, c in cells_of[(i, j)]:
                grid[r][c] = "."

    # random spanning tree over rooms (randomised DFS), plus one extra edge
    edges = []
    visited = {(0, 0)}
    stack = [(0, 0)]
    while stack:
        cur = stack[-1]
        nbrs = [(cur[0] + di, cur[1] + dj) for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1))]
        nbrs = [n for n in nbrs if 0 <= n[0] < n_r and 0 <= n[1] < n_c and n not in visited]
        if not nbrs:
            stack.pop()
            continue
        nxt = nbrs[rng.integers(len(nbrs))]
        edges.append((cur, nxt))
        visited.add(nxt)
        stack.append(nxt)
    all_edges = [((i, j), (i + di, j + dj)) for i in range(n_r) for j in range(n_c)
                 for di, dj in ((1, 0), (0, 1)) if i + di < n_r and j + dj < n_c]
    extra = [e for e in all_edges if e not in edges and (e[1], e[0]) not in edges]
    if extra:
        edges.append(extra[rng.integers(len(extra))])

    doors = []
    for a, b in edges:
        (i1, j1), (i2, j2) = sorted([a, b])
        if i1 != i2:  # vertical neighbours: horizontal wall row
            wr = i2 * (h + 1)
            dc = j1 * (w + 1) + 1 + int(rng.integers(w))
            door = (wr, dc)
        else:
            wc = j2 * (w + 1)
            dr = i1 * (h + 1) + 1 + int(rng.integers(h))
            door = (dr, wc)
        grid[door[0]][door[1]] = "."
        doors.append((door, a))

    types = list(room_types) if room_types else list(rng.permutation(ROOM_TYPES))
    rooms, receptacles = [], []
    room_ids = {}
    for k, (i, j) in enumerate(sorted(cells_of)):
        rid = f"room{k}"
        room_ids[(i, j)] = rid
        category = str(types[k % len(types)])
        cells = set(cells_of[(i, j)])
        rooms.append([rid, category, cells])
    for door, owner in doors:
        for room in rooms:
            if room[0] == room_ids[owner]:
                room[2].add(door)

    rec_id = 0
    for rid, category, cells in rooms:
        (i, j) = next(key for key, v in room_ids.items() if v == rid)
        inner = cells_of[(i, j)]
        r0, c0 = inner[0]
        door_cells = {d for d, _ in doors}
        # wall-adjacent interior cells, away from doorways
        border = [
            (r, c) for r, c in inner
            if (r in (r0, r0 + h - 1) or c in (c0, c0 + w - 1))
            and not any(abs(r - dr) + abs(c - dc) <= 1 for dr, dc in door_cells)
        ]
        lo, hi = receptacles_per_room
        options = ROOM_RECEPTACLES.get(category, ["shelf", "floor"])
        k = int(rng.integers(lo, hi + 1))
        k = min(k, len(options), len(border))
        chosen = rng.choice(len(options), size=k, replace=False)
        spots = rng.choice(len(border), size=len(border), replace=False)
        used: list[tuple[int, int]] = []
        for opt in sorted(int(x) for x in chosen):
            spot = next(
                (border[s] for s in spots if all(abs(border[s][0] - u[0]) + abs(border[s][1] - u[1]) > 1 for u in used)),
                None,
            )
            if spot is None:
                break
            used.append(spot)
            receptacles.append(Receptacle(f"rec{rec_id}", options[opt], rid, spot, capacity))
            rec_id += 1

    return GridScene(
        scene_id,
        tuple("".join(row) for row in grid),
        tuple(Room(rid, cat, frozenset(cells)) for rid, cat, cells in rooms),
        tuple(receptacles),
    )


def synth_catalog(
    n_objects: int,
    seed: int,
    fractions: tuple[float, float, float] = (0.4, 0.2, 0.4),
    n_groups: int | None = None,
) -> list[ObjectCategory]:
    """Objects spread over high-level groups; splits stratified within groups."""
    rng = np.random.default_rng(seed)
    groups = HIGH_LEVEL[: n_groups or min(len(HIGH_LEVEL), max(1, n_objects // 5))]
    cats = []
    per_group: dict[str, list[str]] = {g: [] for g in groups}
    for k in range(n_objects):
        g = groups[k % len(groups)]
        per_group[g].append(f"{g}{len(per_group[g])}")
    splits = ("seen", "val-unseen", "test-unseen")
    for g in groups:
        names = list(per_group[g])
        order = rng.permutation(len(names))
        n = len(names)
        n_seen = max(1, round(fractions[0] * n))
        n_val = round(fractions[1] * n)
        for pos, idx in enumerate(order):
            split = splits[0] if pos < n_seen else splits[1] if pos < n_seen + n_val else splits[2]
            cats.append(ObjectCategory(names[idx], g, split))
    return sorted(cats, key=lambda c: c.name)


def synth_embeddings(
    catalog: list[ObjectCategory],
    places: list[tuple[str, str]],
    dim: int,
    seed: int,
    object_noise: float = 0.3,
) -> dict[str, np.ndarray]:
    """Word vectors in which objects of one high-level group cluster together."""
    rng = np.random.default_rng(seed)
    groups = sorted({c.high_level for c in catalog})
    group_vec = {g: rng.normal(0.0, 1.0, dim) for g in groups}
    table: dict[str, np.ndarray] = {}
    for c in sorted(catalog, key=lambda c: c.name):
        table[c.name] = group_vec[c.high_level] + rng.normal(0.0, object_noise, dim)
    tokens = set()
    for room, rec in places:
        tokens.update(room.split("_"))
        tokens.update(rec.split("_"))
    tokens.update({"in", "of"})
    for tok in sorted(tokens - table.keys()):
        table[tok] = rng.normal(0.0, 1.0, dim)
    return table


@dataclass
class SynthWorld:
    scenes: list[GridScene]
    catalog: list[ObjectCategory]
    annotations: list[AnnotationRecord]
    table: PreferenceTable
    embeddings: dict[str, np.ndarray]

    @property
    def places(self) -> list[tuple[str, str]]:
        return sorted({p for s in self.scenes for p in s.placement_keys})


def synth_world(
    seed: int,
    n_scenes: int = 3,
    n_objects: int = 30,
    agreement: float = 0.85,
    embedding_dim: int = 32,
    layout: tuple[int, int] = (2, 3),
    room_size: tuple[int, int] = (5, 6),
) -> SynthWorld:
    scenes = [synth_scene(f"scene{k}", seed * 1000 + k, layout=layout, room_size=room_size) for k in range(n_scenes)]
    places = sorted({p for s in scenes for p in s.placement_keys})
    catalog = synth_catalog(n_objects, seed + 1)
    annotations = synth_preferences(catalog, places, seed + 2, agreement=agreement)
    table = aggregate(annotations, {c.name: c for c in catalog}, places)
    embeddings = synth_embeddings(catalog, places, embedding_dim, seed + 3)
    return SynthWorld(scenes, catalog, annotations, table, embeddings)


def write_world(world: SynthWorld, out: str | Path) -> dict[str, Path]:
    from .ranker.embeddings import save_embeddings

    out = Path(out)
    (out / "scenes").mkdir(parents=True, exist_ok=True)
    for scene in world.scenes:
        write_scene(scene, out / "scenes" / f"{scene.id}.json")
    paths = {
        "scenes": out / "scenes",
        "catalog": out / "catalog.json",
        "annotations": out / "annotations.csv",
        "prefs": out / "prefs.json",
        "embeddings": out / "embeddings.txt",
    }
    save_catalog(world.catalog, paths["catalog"])
    write_annotations(world.annotations, paths["annotations"])
    save_table(world.table, paths["prefs"])
    save_embeddings(world.embeddings, paths["embeddings"])
    return paths
