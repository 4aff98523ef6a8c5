"""Batch orchestration: build a ranker per episode, run the agent, write results."""

from __future__ import annotations

import json
import logging
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .episodes import Episode, read_episodes
from .errors import ValidationError
from .mapping import Explorer, Strategy
from .metrics import EpisodeResult, MetricsReport, evaluate, rearrangement_outcomes
from .planner import Ordering, PlannerConfig, run_planner
from .preferences import PreferenceTable, load_table
from .ranker.embeddings import load_embeddings
from .ranker.scoring import ExternalScores, NoisyOracleScores, OracleScores, RandomScores, ScoreModel
from .ranker.training import EmbeddingRanker
from .world import GridScene, load_scenes

log = logging.getLogger(__name__)

RANKERS = ("oracle", "embedding", "external", "noisy", "random")


@dataclass
class RunConfig:
    scenes: list[str]
    episodes: str
    prefs: str
    out: str
    ranker: str = "oracle"
    explore: str = "frontier"
    order: str = Ordering.DISCOVERY_TIME.value
    ne: int = 16
    max_steps: int | None = None
    seed: int = 0
    jobs: int = 1
    embeddings: str | None = None
    checkpoint: str | None = None
    scores: str | None = None
    noise: float = 0.46  # per-object success probability of the noisy ranker
    threshold: float | None = None
    label: str | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.ranker not in RANKERS:
            raise ValidationError(f"--ranker must be one of {', '.join(RANKERS)}, got {self.ranker!r}")
        Strategy(self.explore)
        Ordering(self.order)
        if self.jobs < 1:
            raise ValidationError("--jobs must be >= 1")
        need = [("--scene", p) for p in self.scenes] + [("--episodes", self.episodes), ("--prefs", self.prefs)]
        if self.ranker == "embedding":
            if not self.embeddings or not self.checkpoint:
                raise ValidationError("--ranker embedding needs --embeddings and --checkpoint")
            need += [("--embeddings", self.embeddings), ("--checkpoint", self.checkpoint)]
        if self.ranker == "external":
            if not self.scores:
                raise ValidationError("--ranker external needs --scores")
            need.append(("--scores", self.scores))
        for flag, path in need:
            if not Path(path).exists():
                raise ValidationError(f"{flag}: no such file or directory: {path}")

    @property
    def run_label(self) -> str:
        return self.label or f"{self.ranker}+{self.explore}"


def episode_seed(seed: int, episode_id: str) -> list[int]:
    return [seed, zlib.crc32(episode_id.encode())]


class _Context:
    """Immutable inputs shared by every episode of a batch."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.scenes: dict[str, GridScene] = load_scenes(cfg.scenes)
        self.table: PreferenceTable = load_table(cfg.prefs)
        self.episodes: list[Episode] = read_episodes(cfg.episodes)
        missing = sorted({e.scene_id for e in self.episodes} - set(self.scenes))
        if missing:
            raise ValidationError(f"episodes reference unknown scenes: {missing}")
        self.shared: ScoreModel | None = None
        self.s_L = 0.5
        if cfg.ranker == "oracle":
            self.shared = OracleScores(self.table)
        elif cfg.ranker == "embedding":
            self.shared = EmbeddingRanker.load(cfg.checkpoint, load_embeddings(cfg.embeddings))
            self.s_L = self.shared.s_L
        elif cfg.ranker == "external":
            self.shared = ExternalScores.load(cfg.scores)
        if cfg.threshold is not None:
            self.s_L = cfg.threshold

    def model_for(self, episode: Episode, scene: GridScene) -> ScoreModel:
        if self.shared is not None:
            return self.shared
        seed = episode_seed(self.cfg.seed, episode.id)
        if self.cfg.ranker == "noisy":
            return NoisyOracleScores(self.table, self.cfg.noise, zlib.crc32(repr(seed).encode()), scene.placement_keys)
        return RandomScores(zlib.crc32(repr(seed).encode()))


def run_episode(ctx: _Context, index: int) -> tuple[str, str, str]:
    """(episode id, results line, trajectory text) for one episode."""
    cfg = ctx.cfg
    ep = ctx.episodes[index]
    scene = ctx.scenes[ep.scene_id]
    explorer = Explorer(cfg.explore, zlib.crc32(repr(episode_seed(cfg.seed, ep.id)).encode()))
    pcfg = PlannerConfig(n_e=cfg.ne, max_steps=cfg.max_steps, ordering=cfg.order, s_L=ctx.s_L)
    result = run_planner(scene, ep, ctx.model_for(ep, scene), explorer, pcfg)
    report = evaluate(result, ctx.table)
    line = json.dumps({
        "episode_id": ep.id,
        "run": cfg.run_label,
        "config": {"ranker": cfg.ranker, "explore": cfg.explore, "order": cfg.order, "ne": cfg.ne, "seed": cfg.seed},
        "metrics": report.to_dict(),
        "rearrangements": rearrangement_outcomes(result, ctx.table),
        "result": result.to_dict(),
    }, sort_keys=True)
    traj = "".join(json.dumps(rec, sort_keys=True) + "\n" for rec in result.log)
    return ep.id, line, traj


_worker_ctx: _Context | None = None


def _init_worker(cfg: RunConfig) -> None:
    global _worker_ctx
    _worker_ctx = _Context(cfg)


def _work(index: int) -> tuple[str, str, str]:
    return run_episode(_worker_ctx, index)


def run_batch(cfg: RunConfig) -> Path:
    """Run every episode and write ``results.jsonl`` plus one trajectory file per episode.

    Results are merged in episode-file order, so serial and parallel runs give
    the same bytes.
    """
    ctx = _Context(cfg)
    out = Path(cfg.out)
    traj_dir = out / "trajectories"
    traj_dir.mkdir(parents=True, exist_ok=True)
    indices = range(len(ctx.episodes))
    if cfg.jobs == 1:
        outputs = (run_episode(ctx, i) for i in indices)
        pool = None
    else:
        pool = ProcessPoolExecutor(cfg.jobs, initializer=_init_worker, initargs=(cfg,))
        outputs = pool.map(_work, indices, chunksize=max(1, len(indices) // (cfg.jobs * 4)))
    lines = []
    try:
        for ep_id, line, traj in outputs:
            (traj_dir / f"{ep_id}.jsonl").write_text(traj)
            lines.append(line)
            log.info("episode %s done", ep_id)
    finally:
        if pool is not None:
            pool.shutdown()
    path = out / "results.jsonl"
    path.write_text("".join(line + "\n" for line in lines))
    cfg_dump = {k: v for k, v in asdict(cfg).items() if k not in ("jobs", "out")}
    (out / "run_config.json").write_text(json.dumps(cfg_dump, indent=2, sort_keys=True) + "\n")
    return path


def read_results(path: str | Path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def result_records(rows: list[dict]) -> list[tuple[str, MetricsReport, EpisodeResult, list[bool]]]:
    return [
        (r["run"], MetricsReport.from_dict(r["metrics"]), EpisodeResult.from_dict(r["result"]), r["rearrangements"])
        for r in rows
    ]
