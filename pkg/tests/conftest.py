from __future__ import annotations

import pytest

from housekeep.preferences import AnnotationRecord, Bin, aggregate
from housekeep.synth import synth_world
from housekeep.world import GridScene, Receptacle, Room


def make_scene(grid: list[str], receptacles=(), room_category: str = "kitchen", scene_id: str = "toy") -> GridScene:
    """Single-room scene; ``receptacles`` are (id, category, (r, c)[, capacity]) tuples."""
    free = frozenset((r, c) for r, row in enumerate(grid) for c, ch in enumerate(row) if ch == ".")
    room = Room("r0", room_category, free)
    recs = tuple(Receptacle(rid, cat, "r0", cell, *rest) for rid, cat, cell, *rest in receptacles)
    return GridScene(scene_id, tuple(grid), (room,), recs)


def votes(obj: str, room: str, rec: str, counts: dict[str, int], ranks=None) -> list[AnnotationRecord]:
    """Annotation records for one key from bin counts, ranks default to 1."""
    out, i = [], 0
    for b in ("correct", "misplaced", "implausible"):
        for _ in range(counts.get(b, 0)):
            rank = None if b == "implausible" else (ranks[i] if ranks and b == "correct" else 1)
            out.append(AnnotationRecord(f"a{i}", obj, room, rec, Bin(b), rank))
            i += 1
    return out


def table_from(entries: dict[tuple[str, str, str], tuple[int, int, int]]):
    """Table from {(obj, room, rec): (n_correct, n_misplaced, n_implausible)}.

    Each key gets its own annotator pool so rank groups never collide.
    """
    records = []
    for k, (nc, nm, ni) in entries.items():
        for rec in votes(*k, {"correct": nc, "misplaced": nm, "implausible": ni}):
            records.append(AnnotationRecord(f"{rec.annotator}-{'|'.join(k)}", *k, rec.bin, rec.rank))
    return aggregate(records)


@pytest.fixture(scope="session")
def world():
    return synth_world(0)


@pytest.fixture(scope="session")
def scenes(world):
    return {s.id: s for s in world.scenes}


def direct_table(wanted: dict[tuple[str, str, str], tuple], n: int = 10):
    """Table straight from {(obj, room, rec): (c_or, m_or[, mean_correct_rank])}."""
    from housekeep.preferences import PreferenceEntry, PreferenceTable

    entries = {}
    for k, v in wanted.items():
        c, m = v[0], v[1]
        rank = v[2] if len(v) > 2 else (1.0 if c > 0 else None)
        entries[k] = PreferenceEntry(c, m, 1.0 - c - m, rank, n)
    return PreferenceTable(entries, {})
