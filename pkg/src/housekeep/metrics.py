"""Episode metrics (ES, OS, SOS, RQ, MC, MOC, PPE), ES@K and aggregation."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptySet
from .preferences import Place, PreferenceTable, correct_rank

METRIC_NAMES = ("ES", "OS", "SOS", "RQ", "MC", "MOC", "PPE", "steps")

@dataclass
class EpisodeResult:
    episode_id: str
    scene_id: str
    categories: dict[str, str]
    initial: dict[str, str]
    misplaced: list[str]
    final: dict[str, str | None]
    interactions: list[dict]  # {"t", "object", "kind": pick|place, "receptacle"}
    discovered: dict[str, int]  # object -> first step seen
    explored_cells: int
    navigable_area: int
    places: dict[str, list[str]]  # receptacle id -> [room category, receptacle category]
    steps: int
    max_steps: int
    log: list[dict] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "episode_id": self.episode_id,
            "scene_id": self.scene_id,
            "categories": self.categories,
            "initial": self.initial,
            "misplaced": self.misplaced,
            "final": self.final,
            "interactions": self.interactions,
            "discovered": self.discovered,
            "explored_cells": self.explored_cells,
            "navigable_area": self.navigable_area,
            "places": self.places,
            "steps": self.steps,
            "max_steps": self.max_steps,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EpisodeResult":
        return cls(**{k: d[k] for k in (
            "episode_id", "scene_id", "categories", "initial", "misplaced", "final", "interactions",
            "discovered", "explored_cells", "navigable_area", "places", "steps", "max_steps",
        )})

    def place_of(self, receptacle: str | None) -> Place | None:
        if receptacle is None:
            return None
        room, rec = self.places[receptacle]
        return (room, rec)


    def scene_places(self) -> list[Place]:
        return sorted({(room, rec) for room, rec in self.places.values()})


@dataclass(frozen=True)
class MetricsReport:
    ES: float
    OS: float
    SOS: float
    RQ: float
    MC: float
    MOC: float
    PPE: float
    steps: int

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in METRIC_NAMES}

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(**{k: d[k] for k in METRIC_NAMES})


def object_sets(result: EpisodeResult) -> tuple[set[str], set[str], set[str]]:
    """(O_m, O_i, O_mi): initially misplaced, interacted with, and their union."""
    o_m = set(result.misplaced)
    o_i = {it["object"] for it in result.interactions}
    return o_m, o_i, o_m | o_i


def final_score(result: EpisodeResult, table: PreferenceTable, obj: str) -> float:
    """c for the object's final placement; a held object scores 0."""
    place = result.place_of(result.final.get(obj))
    if place is None:
        return 0.0
    return table.c(result.categories[obj], *place)


def _is_correct(result: EpisodeResult, table: PreferenceTable, obj: str) -> bool:
    return final_score(result, table, obj) > 0.5


def episode_success(result: EpisodeResult, table: PreferenceTable) -> int:
    return int(all(_is_correct(result, table, o) for o in result.categories))


def object_success(result: EpisodeResult, table: PreferenceTable) -> float:
    _, _, o_mi = object_sets(result)
    if not o_mi:
        return 1.0
    return sum(_is_correct(result, table, o) for o in sorted(o_mi)) / len(o_mi)


def soft_object_success(result: EpisodeResult, table: PreferenceTable) -> float:
    _, _, o_mi = object_sets(result)
    if not o_mi:
        return 1.0
    return sum(final_score(result, table, o) for o in sorted(o_mi)) / len(o_mi)


def rearrange_quality(result: EpisodeResult, table: PreferenceTable) -> float:
    """Mean reciprocal correct-rank of final placements over O_mi, 0 for incorrect ones.

    Ranks are taken among the Correct places present in the episode's scene.
    """
    _, _, o_mi = object_sets(result)
    if not o_mi:
        return 1.0
    within = result.scene_places()
    total = 0.0
    for o in sorted(o_mi):
        if _is_correct(result, table, o):
            room, rec = result.place_of(result.final[o])
            total += 1.0 / correct_rank(table, result.categories[o], room, rec, within)
    return total / len(o_mi)


def map_coverage(result: EpisodeResult) -> float:
    return 100.0 * result.explored_cells / result.navigable_area


def misplaced_object_coverage(result: EpisodeResult) -> float:
    o_m = set(result.misplaced)
    if not o_m:
        return 1.0
    return len(o_m & set(result.discovered)) / len(o_m)


def pick_place_efficiency(result: EpisodeResult, table: PreferenceTable) -> float:
    """Mean over interacted objects of 1[correct] * N_min / N (minimum over actual)."""
    o_m, o_i, _ = object_sets(result)
    if not o_i:
        return 1.0
    counts: dict[str, int] = {}
    for it in result.interactions:
        counts[it["object"]] = counts.get(it["object"], 0) + 1
    total = 0.0
    for o in sorted(o_i):
        n_min = 2 if o in o_m else 0
        if n_min and _is_correct(result, table, o):
            total += n_min / counts[o]
    return total / len(o_i)


def evaluate(result: EpisodeResult, table: PreferenceTable) -> MetricsReport:
    return MetricsReport(
        ES=float(episode_success(result, table)),
        OS=object_success(result, table),
        SOS=soft_object_success(result, table),
        RQ=rearrange_quality(result, table),
        MC=map_coverage(result),
        MOC=misplaced_object_coverage(result),
        PPE=pick_place_efficiency(result, table),
        steps=result.steps,
    )


def rearrangement_outcomes(result: EpisodeResult, table: PreferenceTable) -> list[bool]:
    """Per executed rearrangement (each completed place), whether it left the object Correct."""
    out = []
    for it in result.interactions:
        if it["kind"] == "place":
            place = result.place_of(it["receptacle"])
            out.append(table.c(result.categories[it["object"]], *place) > 0.5)
    return out


def es_at_k(results: Iterable[EpisodeResult], table: PreferenceTable, k: int) -> float | None:
    """Among episodes with at least ``k`` rearrangements, the fraction whose first
    ``k`` all left their object Correct. ``None`` when no episode qualifies."""
    if k < 1:
        raise ValueError("k must be >= 1")
    hits = []
    for r in results:
        outcomes = rearrangement_outcomes(r, table)
        if len(outcomes) >= k:
            hits.append(all(outcomes[:k]))
    return sum(hits) / len(hits) if hits else None


def es_at_k_curve(results: Sequence[EpisodeResult], table: PreferenceTable, k_max: int) -> dict[int, float]:
    """ES@K for K = 1..k_max, omitting undefined points."""
    out = {}
    for k in range(1, k_max + 1):
        v = es_at_k(results, table, k)
        if v is not None:
            out[k] = v
    return out


@dataclass(frozen=True)
class Summary:
    mean: float
    stderr: float
    n: int


def aggregate(reports: Sequence[MetricsReport]) -> dict[str, Summary]:
    """Mean and standard error (sample std / sqrt n) per metric."""
    if not reports:
        raise EmptySet("cannot aggregate zero reports")
    out = {}
    for name in METRIC_NAMES:
        x = np.array([getattr(r, name) for r in reports], dtype=float)
        se = float(x.std(ddof=1) / math.sqrt(len(x))) if len(x) > 1 else 0.0
        out[name] = Summary(float(x.mean()), se, len(x))
    return out


def _cell(name: str, s: Summary) -> str:
    if name == "steps":
        return f"{s.mean:.1f} ± {s.stderr:.1f}"
    if name == "MC":
        return f"{s.mean:.1f} ± {s.stderr:.1f}"
    return f"{s.mean:.2f} ± {s.stderr:.2f}"


def format_table(rows: dict[str, dict[str, Summary]], metrics: Sequence[str] = METRIC_NAMES) -> str:
    """Aligned plain-text table, one row per labelled aggregate."""
    header = ["run", *metrics, "n"]
    body = []
    for label, agg in rows.items():
        n = next(iter(agg.values())).n
        body.append([label, *(_cell(m, agg[m]) for m in metrics), str(n)])
    widths = [max(len(r[i]) for r in [header, *body]) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in [header, *body]]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def format_csv(rows: dict[str, dict[str, Summary]], metrics: Sequence[str] = METRIC_NAMES) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["run", *(f"{m}_{s}" for m in metrics for s in ("mean", "stderr")), "n"])
    for label, agg in rows.items():
        n = next(iter(agg.values())).n
        w.writerow([label, *(f"{v:.6g}" for m in metrics for v in (agg[m].mean, agg[m].stderr)), n])
    return buf.getvalue()
