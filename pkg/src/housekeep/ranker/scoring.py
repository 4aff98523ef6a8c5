"""Score models and everything computed from their scores: joint placement
probabilities, ranked placement lists, threshold calibration, and mAP."""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass
from itertools import groupby
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..errors import ParseError
from ..preferences import Place, PlacementClass, PreferenceTable, classify

GRID_STEP = 0.01


class ScoreModel:
    """Interface: raw compatibility scores in [0, 1] plus a normalisation rule."""

    def score_or(self, obj: str, room: str) -> float:
        raise NotImplementedError

    def score_orr(self, obj: str, room: str, receptacle: str) -> float:
        raise NotImplementedError

    def normalize(self, scores: np.ndarray) -> np.ndarray:
        total = scores.sum()
        if total <= 0:
            return np.full(len(scores), 1.0 / len(scores))
        return scores / total


def softmax(x: np.ndarray, temperature: float) -> np.ndarray:
    z = np.asarray(x, dtype=float) / temperature
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


class OracleScores(ScoreModel):
    """Ground-truth preferences: ORR score is c_or, OR score the best c_or in the room."""

    def __init__(self, table: PreferenceTable):
        self.table = table
        self._room_max: dict[tuple[str, str], float] = {}
        for (obj, room, _), e in table.entries.items():
            k = (obj, room)
            self._room_max[k] = max(self._room_max.get(k, 0.0), e.c_or)

    def score_or(self, obj, room):
        return self._room_max.get((obj, room), 0.0)

    def score_orr(self, obj, room, receptacle):
        return self.table.c(obj, room, receptacle)


class ExternalScores(ScoreModel):
    """Scores supplied by an outside scorer as ``"object|room|receptacle"`` and
    ``"object|room"`` keys. Missing keys score 0."""

    def __init__(self, scores: dict[str, float]):
        self.scores = scores

    @classmethod
    def load(cls, path: str | Path) -> "ExternalScores":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: {exc}") from None
        if not isinstance(data, dict):
            raise ParseError(f"{path}: expected a JSON object of key -> score")
        bad = [k for k, v in data.items() if not isinstance(v, (int, float)) or not 0.0 <= v <= 1.0]
        if bad:
            raise ParseError(f"{path}: scores must be numbers in [0, 1]; offending keys {bad[:5]}")
        return cls({k: float(v) for k, v in data.items()})

    def score_or(self, obj, room):
        return self.scores.get(f"{obj}|{room}", 0.0)

    def score_orr(self, obj, room, receptacle):
        return self.scores.get(f"{obj}|{room}|{receptacle}", 0.0)


def _unit(seed: int, *parts: str) -> float:
    h = zlib.crc32("|".join(parts).encode())
    return float(np.random.default_rng([seed, h]).random())


class RandomScores(ScoreModel):
    """Uniform random scores, fixed per key for a given seed."""

    def __init__(self, seed: int = 0):
        self.seed = seed

    def score_or(self, obj, room):
        return _unit(self.seed, "or", obj, room)

    def score_orr(self, obj, room, receptacle):
        return _unit(self.seed, "orr", obj, room, receptacle)


class NoisyOracleScores(ScoreModel):
    """Oracle whose target choice is right for each object with probability ``p``.

    With probability 1 - p an object gets a decoy place (neither Correct nor,
    when possible, Misplaced) that it scores highest; its true Correct places
    stay just above the 0.5 threshold so misplaced-detection is unchanged.
    The sharp softmax makes the decoy the joint argmax.
    """

    def __init__(self, table: PreferenceTable, p: float, seed: int, places: Iterable[Place], temperature: float = 0.01):
        self.oracle = OracleScores(table)
        self.table = table
        self.p = p
        self.seed = seed
        self.places = sorted(set(places))
        self.temperature = temperature
        self._decoy: dict[str, Place | None] = {}

    def decoy(self, obj: str) -> Place | None:
        if obj not in self._decoy:
            rng = np.random.default_rng([self.seed, zlib.crc32(obj.encode())])
            decoy = None
            if rng.random() >= self.p:
                classes = {p: self._cls(obj, p) for p in self.places}
                pool = [p for p, c in classes.items() if c is PlacementClass.NEUTRAL]
                pool = pool or [p for p, c in classes.items() if c is not PlacementClass.CORRECT]
                if pool:
                    decoy = pool[int(rng.integers(len(pool)))]
            self._decoy[obj] = decoy
        return self._decoy[obj]

    def _cls(self, obj: str, place: Place) -> PlacementClass:
        if (obj, *place) not in self.table:
            return PlacementClass.NEUTRAL
        return classify(self.table, obj, *place)

    @staticmethod
    def _flatten(c: float) -> float:
        return 0.5 + (c - 0.5) * 0.01 if c > 0.5 else c

    def score_or(self, obj, room):
        d = self.decoy(obj)
        if d is None:
            return self.oracle.score_or(obj, room)
        if room == d[0]:
            return 1.0
        return self._flatten(self.oracle.score_or(obj, room))

    def score_orr(self, obj, room, receptacle):
        d = self.decoy(obj)
        if d is None:
            return self.oracle.score_orr(obj, room, receptacle)
        if (room, receptacle) == d:
            return 1.0
        return self._flatten(self.oracle.score_orr(obj, room, receptacle))

    def normalize(self, scores):
        return softmax(scores, self.temperature)


# -- ranking -----------------------------------------------------------------


def score_joint(model: ScoreModel, obj: str, candidates: Sequence[Place]) -> list[tuple[Place, float]]:
    """P(room | obj) * P(receptacle | obj, room), normalised over the candidates.

    Sorted by probability, descending; ties broken lexicographically.
    """
    if not candidates:
        raise ValueError("score_joint needs at least one candidate")
    cands = sorted(set(candidates))
    rooms = sorted({room for room, _ in cands})
    p_room = model.normalize(np.array([model.score_or(obj, r) for r in rooms]))
    out = []
    for (room, members), pr in zip(groupby(cands, key=lambda p: p[0]), p_room):
        members = list(members)
        p_rec = model.normalize(np.array([model.score_orr(obj, room, rec) for _, rec in members]))
        out.extend(((room, rec), float(pr * q)) for (_, rec), q in zip(members, p_rec))
    return sorted(out, key=lambda item: (-item[1], item[0]))


def ranked_placements(
    model: ScoreModel, obj: str, candidates: Sequence[Place], threshold: float
) -> tuple[list[Place], list[Place]]:
    """Rooms by OR score; within a room, above-threshold receptacles by ORR score.

    Returns (correct list, incorrect tail). The tail keeps the same room order.
    """
    cands = sorted(set(candidates))
    rooms = sorted({room for room, _ in cands}, key=lambda r: (-model.score_or(obj, r), r))
    correct, incorrect = [], []
    for room in rooms:
        recs = sorted(
            (rec for r, rec in cands if r == room),
            key=lambda rec: (-model.score_orr(obj, room, rec), rec),
        )
        for rec in recs:
            (correct if model.score_orr(obj, room, rec) > threshold else incorrect).append((room, rec))
    return correct, incorrect


# -- threshold calibration ---------------------------------------------------


@dataclass(frozen=True)
class ThresholdCalibration:
    s_L: float
    f1: float
    step: float = GRID_STEP


def threshold_grid(step: float = GRID_STEP) -> np.ndarray:
    n = int(round(1.0 / step))
    return np.round(np.arange(n + 1) * step, 10)


def f1_score(labels: np.ndarray, predicted: np.ndarray) -> float:
    tp = int(np.sum(labels & predicted))
    fp = int(np.sum(~labels & predicted))
    fn = int(np.sum(labels & ~predicted))
    if tp == 0:
        return 0.0
    return 2 * tp / (2 * tp + fp + fn)


def calibrate_threshold(
    model: ScoreModel, table: PreferenceTable, objects: Iterable[str] | None = None, step: float = GRID_STEP
) -> ThresholdCalibration:
    """Grid-search s_L maximising F1 of ``score > s_L`` against Correct labels."""
    objs = set(objects) if objects is not None else None
    keys = [k for k in sorted(table.entries) if objs is None or k[0] in objs]
    labels = np.array([classify(table, *k) is PlacementClass.CORRECT for k in keys], dtype=bool)
    scores = np.array([model.score_orr(*k) for k in keys])
    best = (-1.0, 0.0)
    for s in threshold_grid(step):
        f1 = f1_score(labels, scores > s)
        if f1 > best[0]:
            best = (f1, float(s))
    return ThresholdCalibration(best[1], best[0], step)


# -- mAP ---------------------------------------------------------------------


def average_precision(ranked_labels: Sequence[bool]) -> float | None:
    """AP of a ranked relevance list; ``None`` when there are no positives."""
    hits, total = 0, 0.0
    for i, rel in enumerate(ranked_labels, start=1):
        if rel:
            hits += 1
            total += hits / i
    return total / hits if hits else None


def _mean_ap(lists: Iterable[list[tuple[float, tuple, bool]]]) -> float:
    aps = []
    for items in lists:
        items.sort(key=lambda x: (-x[0], x[1]))
        ap = average_precision([lab for _, _, lab in items])
        if ap is not None:
            aps.append(ap)
    return float(np.mean(aps)) if aps else float("nan")


def eval_map(model: ScoreModel, table: PreferenceTable, objects: Iterable[str] | None = None) -> dict[str, float]:
    """mAP for room matching (OR) and receptacle matching (ORR).

    OR queries are objects ranking rooms; a room is relevant when it holds at
    least one Correct receptacle. ORR queries are (object, room) pairs ranking
    that room's receptacles; a receptacle is relevant when classified Correct.
    Queries without positives are skipped.
    """
    objs = sorted(objects) if objects is not None else table.objects
    if not objs:
        raise ValueError("eval_map needs a non-empty object split")
    or_lists, orr_lists = [], []
    for obj in objs:
        by_room: dict[str, list] = {}
        room_pos: dict[str, bool] = {}
        for key in table.keys_for(obj):
            correct = classify(table, *key) is PlacementClass.CORRECT
            by_room.setdefault(key[1], []).append((model.score_orr(*key), (key[2],), correct))
            room_pos[key[1]] = room_pos.get(key[1], False) or correct
        orr_lists.extend(by_room[room] for room in sorted(by_room))
        or_lists.append([(model.score_or(obj, room), (room,), pos) for room, pos in room_pos.items()])
    return {"OR": _mean_ap(or_lists), "ORR": _mean_ap(orr_lists)}
