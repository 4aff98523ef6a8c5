"""Contrastive-matching (CM) training of the embedding ranker."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from ..errors import DivergenceDetected, NoPositivePairs, ParseError
from ..preferences import PlacementClass, PreferenceTable, correct_ranking
from .embeddings import OR_KEY, OR_QUERY, ORR_KEY, ORR_QUERY, embed_prompt
from .mlp import MLP, Adam, cosine_bce, info_nce, l2_normalize
from .scoring import ScoreModel, eval_map, softmax

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    batch_size: int = 64
    learning_rate: float = 0.01
    weight_decay: float = 0.2
    epochs: int = 1000
    temperature: float = 0.07
    seed: int = 0
    hidden_dim: int = 512
    out_dim: int = 512
    hidden_layers: int = 2
    eval_every: int = 10

    def __post_init__(self):
        for name in ("batch_size", "epochs", "hidden_dim", "out_dim", "eval_every"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.learning_rate <= 0 or self.temperature <= 0 or self.weight_decay < 0:
            raise ValueError("learning_rate and temperature must be positive, weight_decay non-negative")

    def layer_sizes(self, dim: int) -> list[int]:
        return [dim] + [self.hidden_dim] * self.hidden_layers + [self.out_dim]


@dataclass
class TrainHistory:
    orr_loss: list[float] = field(default_factory=list)
    or_loss: list[float] = field(default_factory=list)
    validation: list[dict] = field(default_factory=list)  # {"epoch", "OR", "ORR"}
    best_epoch: dict[str, int] = field(default_factory=dict)


class EmbeddingRanker(ScoreModel):
    """Two siamese MLPs over prompt embeddings; scores are (1 + cosine) / 2."""

    def __init__(
        self,
        embeddings: Mapping[str, np.ndarray],
        or_mlp: MLP,
        orr_mlp: MLP,
        temperature: float = 0.07,
        s_L: float = 0.5,
        phrase_mode: bool = False,
    ):
        self.embeddings = embeddings
        self.or_mlp = or_mlp
        self.orr_mlp = orr_mlp
        self.temperature = temperature
        self.s_L = s_L
        self.phrase_mode = phrase_mode
        self._cache: dict[tuple[str, str], np.ndarray] = {}

    def _encode(self, which: str, template: str, **slots: str) -> np.ndarray:
        text = template.format(**slots)
        key = (which, text)
        hit = self._cache.get(key)
        if hit is None:
            mlp = self.or_mlp if which == "or" else self.orr_mlp
            x = embed_prompt(self.embeddings, template, slots, self.phrase_mode)
            hit = l2_normalize(mlp(x[None, :]))[0][0]
            self._cache[key] = hit
        return hit

    def cosine_or(self, obj: str, room: str) -> float:
        return float(self._encode("or", OR_QUERY, object=obj) @ self._encode("or", OR_KEY, room=room))

    def cosine_orr(self, obj: str, room: str, receptacle: str) -> float:
        a = self._encode("orr", ORR_QUERY, object=obj, room=room)
        b = self._encode("orr", ORR_KEY, receptacle=receptacle, room=room)
        return float(a @ b)

    def score_or(self, obj, room):
        return (1.0 + self.cosine_or(obj, room)) / 2.0

    def score_orr(self, obj, room, receptacle):
        return (1.0 + self.cosine_orr(obj, room, receptacle)) / 2.0

    def normalize(self, scores):
        # scores are (1 + cos) / 2; softmax over cos / tau
        return softmax(2.0 * np.asarray(scores) - 1.0, self.temperature)

    def to_dict(self) -> dict:
        return {
            "temperature": self.temperature,
            "s_L": self.s_L,
            "phrase_mode": self.phrase_mode,
            "templates": {"orr_query": ORR_QUERY, "orr_key": ORR_KEY, "or_query": OR_QUERY, "or_key": OR_KEY},
            "or": self.or_mlp.to_dict(),
            "orr": self.orr_mlp.to_dict(),
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path: str | Path, embeddings: Mapping[str, np.ndarray]) -> "EmbeddingRanker":
        try:
            data = json.loads(Path(path).read_text())
            return cls(
                embeddings, MLP.from_dict(data["or"]), MLP.from_dict(data["orr"]),
                float(data["temperature"]), float(data["s_L"]), bool(data.get("phrase_mode", False)),
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"{path}: bad checkpoint ({exc!r})") from None


def orr_pairs(table: PreferenceTable, objects) -> list[tuple[str, str, str]]:
    """(object, room, receptacle with best mean correct rank) per room with a Correct receptacle."""
    pairs = []
    for obj in sorted(objects):
        rooms = sorted({k[1] for k in table.keys_for(obj)})
        for room in rooms:
            within = [(r, rec) for _, r, rec in table.keys_for(obj) if r == room]
            ranked = correct_ranking(table, obj, within)
            if ranked:
                pairs.append((obj, room, ranked[0][1]))
    return pairs


def or_pairs(table: PreferenceTable, objects) -> list[tuple[str, str, float]]:
    """(object, room, 1.0 if the room holds a Correct receptacle else 0.0)."""
    out = []
    for obj in sorted(objects):
        rooms = sorted({k[1] for k in table.keys_for(obj)})
        correct_rooms = {r for r, _ in table.places_with(obj, PlacementClass.CORRECT)}
        out.extend((obj, room, 1.0 if room in correct_rooms else 0.0) for room in rooms)
    return out


def training_objects(table: PreferenceTable) -> list[str]:
    """Seen-split objects when the table carries a catalog, else every object."""
    if table.catalog:
        return [o for o in table.objects if table.split_of(o) == "seen"]
    return table.objects


def _batches(n: int, size: int, rng: np.random.Generator):
    perm = rng.permutation(n)
    for i in range(0, n, size):
        yield perm[i:i + size]


def train_cm(
    embeddings: Mapping[str, np.ndarray],
    table: PreferenceTable,
    config: TrainConfig | None = None,
    val_objects: list[str] | None = None,
    train_objects: list[str] | None = None,
    phrase_mode: bool = False,
) -> tuple[EmbeddingRanker, TrainHistory]:
    """Train OR (BCE) and ORR (InfoNCE, in-batch negatives) MLPs with Adam.

    When ``val_objects`` is given, each head keeps the checkpoint with the best
    validation mAP on its own task; otherwise the final weights are returned.
    """
    cfg = config or TrainConfig()
    objs = train_objects if train_objects is not None else training_objects(table)
    orr = orr_pairs(table, objs)
    orp = or_pairs(table, objs)
    if not orr or not any(label for *_, label in orp):
        raise NoPositivePairs("no training object has a Correct receptacle")

    def emb(template, **slots):
        return embed_prompt(embeddings, template, slots, phrase_mode)

    anchors = np.array([emb(ORR_QUERY, object=o, room=r) for o, r, _ in orr])
    key_text = sorted({(rec, room) for _, room, rec in orr})
    key_index = {k: i for i, k in enumerate(key_text)}
    keys = np.array([emb(ORR_KEY, receptacle=rec, room=room) for rec, room in key_text])
    pos = np.array([key_index[(rec, room)] for _, room, rec in orr])

    or_left = np.array([emb(OR_QUERY, object=o) for o, _, _ in orp])
    or_right = np.array([emb(OR_KEY, room=r) for _, r, _ in orp])
    or_labels = np.array([label for *_, label in orp])

    dim = anchors.shape[1]
    rng = np.random.default_rng(cfg.seed)
    orr_mlp = MLP(cfg.layer_sizes(dim), rng)
    or_mlp = MLP(cfg.layer_sizes(dim), rng)
    opt_orr = Adam(orr_mlp.params, cfg.learning_rate, cfg.weight_decay)
    opt_or = Adam(or_mlp.params, cfg.learning_rate, cfg.weight_decay)

    hist = TrainHistory()
    best = {"OR": (-math.inf, or_mlp.copy()), "ORR": (-math.inf, orr_mlp.copy())}
    for epoch in range(1, cfg.epochs + 1):
        losses = []
        for idx in _batches(len(orr), cfg.batch_size, rng):
            cols, targets = np.unique(pos[idx], return_inverse=True)
            loss, grads = info_nce(orr_mlp, anchors[idx], keys[cols], targets.ravel(), cfg.temperature)
            opt_orr.step(grads)
            losses.append(loss * len(idx))
        hist.orr_loss.append(sum(losses) / len(orr))
        losses = []
        for idx in _batches(len(orp), cfg.batch_size, rng):
            loss, grads = cosine_bce(or_mlp, or_left[idx], or_right[idx], or_labels[idx], cfg.temperature)
            opt_or.step(grads)
            losses.append(loss * len(idx))
        hist.or_loss.append(sum(losses) / len(orp))
        if not (math.isfinite(hist.orr_loss[-1]) and math.isfinite(hist.or_loss[-1])):
            raise DivergenceDetected(f"non-finite loss at epoch {epoch}")
        log.debug("epoch %d orr=%.5f or=%.5f", epoch, hist.orr_loss[-1], hist.or_loss[-1])

        if val_objects and (epoch % cfg.eval_every == 0 or epoch == cfg.epochs):
            probe = EmbeddingRanker(embeddings, or_mlp, orr_mlp, cfg.temperature, phrase_mode=phrase_mode)
            scores = eval_map(probe, table, val_objects)
            hist.validation.append({"epoch": epoch, **scores})
            for task, mlp in (("OR", or_mlp), ("ORR", orr_mlp)):
                if scores[task] > best[task][0]:
                    best[task] = (scores[task], mlp.copy())
                    hist.best_epoch[task] = epoch

    if val_objects and hist.validation:
        or_mlp, orr_mlp = best["OR"][1], best["ORR"][1]
    return EmbeddingRanker(embeddings, or_mlp, orr_mlp, cfg.temperature, phrase_mode=phrase_mode), hist


def config_dict(cfg: TrainConfig) -> dict:
    d = asdict(cfg)
    d["optimizer"] = "Adam"
    return d
