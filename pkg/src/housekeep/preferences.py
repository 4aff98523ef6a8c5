"""Human placement preferences: annotation records, vote ratios, agreement."""

from __future__ import annotations

import csv
import enum
import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DuplicateClassification,
    MissingKey,
    NotCorrect,
    ParseError,
    UndefinedKappa,
    UnequalRaterCounts,
    UnknownCategory,
    ValidationError,
)
from .world import ObjectCategory

Key = tuple[str, str, str]  # (object, room-category, receptacle-category)
Place = tuple[str, str]  # (room-category, receptacle-category)

CSV_HEADER = ["annotator", "object", "room", "receptacle", "bin", "rank"]
ENTRY_FIELDS = ["c_or", "m_or", "i_or", "mean_correct_rank", "n_annotators"]
SPLITS = ("seen", "val-unseen", "test-unseen")


class Bin(enum.Enum):
    CORRECT = "correct"
    MISPLACED = "misplaced"
    IMPLAUSIBLE = "implausible"


class PlacementClass(enum.Enum):
    CORRECT = "correct"
    MISPLACED = "misplaced"
    NEUTRAL = "neutral"


@dataclass(frozen=True)
class AnnotationRecord:
    annotator: str
    object: str
    room: str
    receptacle: str
    bin: Bin
    rank: int | None = None

    def __post_init__(self):
        ranked = self.bin is not Bin.IMPLAUSIBLE
        if ranked != (self.rank is not None):
            raise ValidationError(
                f"{self.annotator}/{self.object}/{self.room}/{self.receptacle}: "
                f"rank must be present iff bin is correct or misplaced"
            )
        if self.rank is not None and self.rank < 1:
            raise ValidationError(f"rank must be positive, got {self.rank}")

    @property
    def key(self) -> Key:
        return (self.object, self.room, self.receptacle)


@dataclass(frozen=True)
class PreferenceEntry:
    c_or: float
    m_or: float
    i_or: float
    mean_correct_rank: float | None
    n_annotators: int


def _classify_entry(entry: PreferenceEntry) -> PlacementClass:
    if entry.c_or > 0.5:
        return PlacementClass.CORRECT
    if entry.m_or > 0.5:
        return PlacementClass.MISPLACED
    return PlacementClass.NEUTRAL


@dataclass
class PreferenceTable:
    entries: dict[Key, PreferenceEntry]
    catalog: dict[str, ObjectCategory] = field(default_factory=dict)

    def __post_init__(self):
        by_object: dict[str, list[Key]] = defaultdict(list)
        for key in sorted(self.entries):
            by_object[key[0]].append(key)
        self._by_object = dict(by_object)

    def __contains__(self, key: Key) -> bool:
        return key in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def entry(self, obj: str, room: str, receptacle: str) -> PreferenceEntry:
        try:
            return self.entries[(obj, room, receptacle)]
        except KeyError:
            raise MissingKey(f"no preference entry for {obj}|{room}|{receptacle}") from None

    def c(self, obj: str, room: str, receptacle: str) -> float:
        """c_or, treating keys nobody annotated as 0 votes."""
        e = self.entries.get((obj, room, receptacle))
        return e.c_or if e is not None else 0.0

    @property
    def objects(self) -> list[str]:
        return sorted(self._by_object)

    def keys_for(self, obj: str) -> list[Key]:
        return self._by_object.get(obj, [])

    @property
    def places(self) -> list[Place]:
        return sorted({(k[1], k[2]) for k in self.entries})

    def places_with(self, obj: str, cls: PlacementClass, within: Iterable[Place] | None = None) -> list[Place]:
        allowed = set(within) if within is not None else None
        out = []
        for key in self.keys_for(obj):
            place = (key[1], key[2])
            if allowed is not None and place not in allowed:
                continue
            if _classify_entry(self.entries[key]) is cls:
                out.append(place)
        return out

    def split_of(self, obj: str) -> str | None:
        cat = self.catalog.get(obj)
        return cat.split if cat else None

    def restrict(self, objects: Iterable[str]) -> "PreferenceTable":
        keep = set(objects)
        return PreferenceTable(
            {k: v for k, v in self.entries.items() if k[0] in keep},
            {k: v for k, v in self.catalog.items() if k in keep},
        )


def aggregate(
    annotations: Iterable[AnnotationRecord],
    catalog: Mapping[str, ObjectCategory] | None = None,
    vocabulary: Iterable[Place] | None = None,
) -> PreferenceTable:
    """Turn raw annotations into per-key vote ratios and mean correct ranks."""
    vocab = set(vocabulary) if vocabulary is not None else None
    seen: set[tuple[str, Key]] = set()
    votes: dict[Key, Counter] = defaultdict(Counter)
    correct_ranks: dict[Key, list[int]] = defaultdict(list)
    rank_groups: dict[tuple, list[int]] = defaultdict(list)
    for rec in annotations:
        if catalog is not None and rec.object not in catalog:
            raise UnknownCategory(f"object category {rec.object!r} is not in the catalog")
        if vocab is not None and (rec.room, rec.receptacle) not in vocab:
            raise UnknownCategory(f"room-receptacle {rec.room}|{rec.receptacle} is not in the scene vocabulary")
        tag = (rec.annotator, rec.key)
        if tag in seen:
            raise DuplicateClassification(
                f"annotator {rec.annotator!r} classified {'|'.join(rec.key)} more than once"
            )
        seen.add(tag)
        votes[rec.key][rec.bin] += 1
        if rec.bin is Bin.CORRECT:
            correct_ranks[rec.key].append(rec.rank)
        if rec.rank is not None:
            rank_groups[(rec.annotator, rec.object, rec.room, rec.bin)].append(rec.rank)

    for group, ranks in rank_groups.items():
        if sorted(ranks) != list(range(1, len(ranks) + 1)):
            raise ValidationError(f"ranks for {group[0]}/{group[1]}/{group[2]}/{group[3].value} are not 1..k: {sorted(ranks)}")

    entries = {}
    for key, count in votes.items():
        n = sum(count.values())
        ranks = correct_ranks.get(key)
        entries[key] = PreferenceEntry(
            c_or=count[Bin.CORRECT] / n,
            m_or=count[Bin.MISPLACED] / n,
            i_or=count[Bin.IMPLAUSIBLE] / n,
            mean_correct_rank=(sum(ranks) / len(ranks)) if ranks else None,
            n_annotators=n,
        )
    return PreferenceTable(entries, dict(catalog or {}))


def classify(table: PreferenceTable, obj: str, room: str, receptacle: str) -> PlacementClass:
    return _classify_entry(table.entry(obj, room, receptacle))


def correct_ranking(table: PreferenceTable, obj: str, within: Iterable[Place] | None = None) -> list[Place]:
    """Correct places for ``obj`` in preference order (best mean rank first)."""
    places = table.places_with(obj, PlacementClass.CORRECT, within)
    return sorted(places, key=lambda p: (table.entries[(obj, *p)].mean_correct_rank, p))


def correct_rank(
    table: PreferenceTable, obj: str, room: str, receptacle: str, within: Iterable[Place] | None = None
) -> int:
    """1-based position of (room, receptacle) among the object's Correct places.

    ``within`` restricts the candidate set, typically to the places present in
    the episode's scene.
    """
    order = correct_ranking(table, obj, within)
    try:
        return order.index((room, receptacle)) + 1
    except ValueError:
        raise NotCorrect(f"{room}|{receptacle} is not a correct placement for {obj}") from None


def filter_top_agreement(records: Sequence[AnnotationRecord], keep: int) -> list[AnnotationRecord]:
    """Keep, per (object, room), the ``keep`` annotators agreeing most with the majority bin.

    Agreement is the number of receptacles where an annotator's bin equals the
    per-receptacle plurality bin; ties go to the lexicographically smaller id.
    """
    by_group: dict[tuple[str, str], list[AnnotationRecord]] = defaultdict(list)
    for rec in records:
        by_group[(rec.object, rec.room)].append(rec)
    order = {b: i for i, b in enumerate(Bin)}
    kept: list[AnnotationRecord] = []
    for group in sorted(by_group):
        recs = by_group[group]
        tallies: dict[str, Counter] = defaultdict(Counter)
        for rec in recs:
            tallies[rec.receptacle][rec.bin] += 1
        majority = {
            r: min(t, key=lambda b: (-t[b], order[b])) for r, t in tallies.items()
        }
        score: Counter = Counter()
        for rec in recs:
            score[rec.annotator] += rec.bin is majority[rec.receptacle]
        chosen = set(sorted(score, key=lambda a: (-score[a], a))[:keep])
        kept.extend(r for r in recs if r.annotator in chosen)
    return kept


# -- agreement ---------------------------------------------------------------


def fleiss_kappa_counts(counts) -> float:
    """Fleiss' kappa from an items x categories matrix of rating counts."""
    m = np.asarray(counts, dtype=float)
    if m.ndim != 2 or m.shape[0] == 0:
        raise ValueError("counts must be a non-empty 2-D matrix")
    per_item = m.sum(axis=1)
    if not np.all(per_item == per_item[0]):
        raise UnequalRaterCounts(f"items have differing rater counts: {sorted(set(per_item.astype(int)))}")
    n = per_item[0]
    if n < 2:
        raise UnequalRaterCounts("Fleiss' kappa needs at least 2 raters per item")
    n_items = m.shape[0]
    p_j = m.sum(axis=0) / (n_items * n)
    p_i = ((m * m).sum(axis=1) - n) / (n * (n - 1))
    p_bar = p_i.mean()
    p_e = float((p_j * p_j).sum())
    if math.isclose(p_e, 1.0):
        raise UndefinedKappa("every rating falls in one category; expected agreement is 1")
    return float((p_bar - p_e) / (1.0 - p_e))


def rating_counts(annotations: Iterable[AnnotationRecord], merged: bool = False) -> tuple[list[Key], np.ndarray]:
    """Per-key category counts; ``merged`` folds misplaced into implausible."""
    cats = [Bin.CORRECT, Bin.IMPLAUSIBLE] if merged else list(Bin)
    col = {b: i for i, b in enumerate(cats)}
    if merged:
        col[Bin.MISPLACED] = col[Bin.IMPLAUSIBLE]
    tally: dict[Key, np.ndarray] = {}
    for rec in annotations:
        row = tally.setdefault(rec.key, np.zeros(len(cats), dtype=int))
        row[col[rec.bin]] += 1
    keys = sorted(tally)
    return keys, np.array([tally[k] for k in keys], dtype=int).reshape(len(keys), len(cats))


def fleiss_kappa(annotations: Iterable[AnnotationRecord], merged: bool = False) -> float:
    """Fleiss' kappa treating each (object, room, receptacle) key as an item."""
    _, counts = rating_counts(annotations, merged)
    return fleiss_kappa_counts(counts)


def kappa_by_object(annotations: Sequence[AnnotationRecord], merged: bool = False) -> dict[str, float]:
    """Per-object kappa over that object's room-receptacle items (NaN when undefined)."""
    groups: dict[str, list[AnnotationRecord]] = defaultdict(list)
    for rec in annotations:
        groups[rec.object].append(rec)
    out = {}
    for obj in sorted(groups):
        try:
            out[obj] = fleiss_kappa(groups[obj], merged)
        except UndefinedKappa:
            out[obj] = float("nan")
    return out


# -- synthetic preferences ---------------------------------------------------


def synth_preferences(
    catalog: Sequence[ObjectCategory],
    vocabulary: Iterable[Place],
    seed: int,
    agreement: float = 0.8,
    n_annotators: int = 10,
    correct_fraction: float = 0.15,
    misplaced_fraction: float = 0.3,
    object_noise: float = 0.35,
) -> list[AnnotationRecord]:
    """Deterministic stand-in for crowd-sourced annotations.

    Each high-level category gets a latent affinity over room-receptacle
    places; objects perturb their group's affinity. The top places are truly
    correct, the next band misplaced, the rest implausible. Each annotator
    reports the true bin with probability ``agreement`` and a uniformly random
    bin otherwise. Objects whose aggregate would lack a Correct or Misplaced
    place get one anchored place per missing class voted unanimously, except
    at ``agreement=0``, which stays pure noise.
    """
    rng = np.random.default_rng(seed)
    places = sorted(set(vocabulary))
    rooms = sorted({p[0] for p in places})
    if not places:
        return []
    groups = sorted({c.high_level for c in catalog})
    group_affinity = {}
    for g in groups:
        room_bias = dict(zip(rooms, rng.normal(0.0, 1.0, len(rooms))))
        place_score = rng.normal(0.0, 1.0, len(places))
        group_affinity[g] = np.array([room_bias[p[0]] for p in places]) + place_score

    n_correct = max(1, round(correct_fraction * len(places)))
    n_misplaced = max(1, round(misplaced_fraction * len(places)))
    bins = list(Bin)
    annotators = [f"a{i:02d}" for i in range(n_annotators)]
    records: list[AnnotationRecord] = []
    for cat in sorted(catalog, key=lambda c: c.name):
        affinity = group_affinity[cat.high_level] + rng.normal(0.0, object_noise, len(places))
        order = np.argsort(-affinity, kind="stable")
        truth = [Bin.IMPLAUSIBLE] * len(places)
        for idx in order[:n_correct]:
            truth[idx] = Bin.CORRECT
        for idx in order[n_correct:n_correct + n_misplaced]:
            truth[idx] = Bin.MISPLACED

        # votes[a][p]
        honest = rng.random((n_annotators, len(places))) < agreement
        noise = rng.integers(0, 3, (n_annotators, len(places)))
        votes = [
            [truth[p] if honest[a, p] else bins[noise[a, p]] for p in range(len(places))]
            for a in range(n_annotators)
        ]
        for cls in (Bin.CORRECT, Bin.MISPLACED):
            has = any(
                sum(votes[a][p] is cls for a in range(n_annotators)) * 2 > n_annotators
                for p in range(len(places))
            )
            if not has and agreement > 0:
                anchor = next(p for p in order if truth[p] is cls)
                for a in range(n_annotators):
                    votes[a][anchor] = cls

        rank_noise = rng.normal(0.0, 0.5, (n_annotators, len(places)))
        for a, annotator in enumerate(annotators):
            groups_for: dict[tuple[str, Bin], list[int]] = defaultdict(list)
            for p, b in enumerate(votes[a]):
                if b is not Bin.IMPLAUSIBLE:
                    groups_for[(places[p][0], b)].append(p)
            ranks: dict[int, int] = {}
            for members in groups_for.values():
                members.sort(key=lambda p: (-(affinity[p] + rank_noise[a, p]), p))
                for r, p in enumerate(members, start=1):
                    ranks[p] = r
            for p, b in enumerate(votes[a]):
                records.append(
                    AnnotationRecord(annotator, cat.name, places[p][0], places[p][1], b, ranks.get(p))
                )
    return records


# -- file formats ------------------------------------------------------------


def read_annotations(path: str | Path) -> list[AnnotationRecord]:
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_HEADER:
            raise ParseError(f"{path}: header must be {','.join(CSV_HEADER)}, got {reader.fieldnames}")
        for lineno, row in enumerate(reader, start=2):
            try:
                b = Bin(row["bin"].strip().lower())
                rank = int(row["rank"]) if row["rank"].strip() else None
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
            records.append(AnnotationRecord(row["annotator"], row["object"], row["room"], row["receptacle"], b, rank))
    return records


def write_annotations(records: Iterable[AnnotationRecord], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in records:
            writer.writerow([r.annotator, r.object, r.room, r.receptacle, r.bin.value, "" if r.rank is None else r.rank])


def table_to_dict(table: PreferenceTable) -> dict:
    entries = []
    for key in sorted(table.entries):
        e = table.entries[key]
        entries.append({
            "object": key[0], "room": key[1], "receptacle": key[2],
            "c_or": e.c_or, "m_or": e.m_or, "i_or": e.i_or,
            "mean_correct_rank": e.mean_correct_rank, "n_annotators": e.n_annotators,
        })
    catalog = [
        {"name": c.name, "high_level": c.high_level, "split": c.split}
        for c in sorted(table.catalog.values(), key=lambda c: c.name)
    ]
    return {"entries": entries, "catalog": catalog}


def table_from_dict(data: Mapping) -> PreferenceTable:
    try:
        entries = {
            (d["object"], d["room"], d["receptacle"]): PreferenceEntry(
                float(d["c_or"]), float(d["m_or"]), float(d["i_or"]),
                None if d["mean_correct_rank"] is None else float(d["mean_correct_rank"]),
                int(d["n_annotators"]),
            )
            for d in data["entries"]
        }
        catalog = {d["name"]: ObjectCategory(d["name"], d["high_level"], d["split"]) for d in data.get("catalog", [])}
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"preference table: {exc!r}") from None
    return PreferenceTable(entries, catalog)


def save_table(table: PreferenceTable, path: str | Path) -> None:
    Path(path).write_text(json.dumps(table_to_dict(table), indent=1) + "\n")


def load_table(path: str | Path) -> PreferenceTable:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None
    return table_from_dict(data)


def load_catalog(path: str | Path) -> list[ObjectCategory]:
    data = json.loads(Path(path).read_text())
    cats = [ObjectCategory(d["name"], d["high_level"], d["split"]) for d in data]
    bad = [c.name for c in cats if c.split not in SPLITS]
    if bad:
        raise ParseError(f"{path}: objects with unknown split: {bad}")
    return cats


def save_catalog(catalog: Iterable[ObjectCategory], path: str | Path) -> None:
    data = [{"name": c.name, "high_level": c.high_level, "split": c.split} for c in sorted(catalog, key=lambda c: c.name)]
    Path(path).write_text(json.dumps(data, indent=1) + "\n")
