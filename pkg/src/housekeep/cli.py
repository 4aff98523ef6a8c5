"""Command-line entry point: ``housekeep <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np

from .errors import HousekeepError, ValidationError

log = logging.getLogger("housekeep")

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging() -> None:
    level = os.environ.get("HOUSEKEEP_LOG", "error").lower()
    if level not in LOG_LEVELS:
        raise ValidationError(f"HOUSEKEEP_LOG must be one of {', '.join(LOG_LEVELS)}, got {level!r}")
    logging.basicConfig(level=LOG_LEVELS[level], format="%(levelname)s %(name)s: %(message)s")


def _out(path: str) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


# -- subcommands -------------------------------------------------------------


def cmd_synth(args) -> int:
    from .synth import synth_world, write_world

    world = synth_world(args.seed, n_scenes=args.n_scenes, n_objects=args.n_objects, agreement=args.agreement)
    paths = write_world(world, _out(args.out))
    for name, p in paths.items():
        print(f"{name}\t{p}")
    return 0


def cmd_gen(args) -> int:
    from .episodes import EPISODE_SPLITS, SplitConfig, generate_split, write_episodes
    from .preferences import load_table
    from .world import load_scenes

    scenes = load_scenes(args.scene)
    table = load_table(args.prefs)
    counts = {s: args.count for s in EPISODE_SPLITS} if args.count is not None else None
    kw = {"counts": counts} if counts else {}
    if args.max_steps is not None:
        kw["max_steps"] = args.max_steps
    config = SplitConfig.for_scenes(scenes, **kw)
    episodes = generate_split(config, scenes, table, args.seed)
    out = _out(args.out)
    for split, eps in episodes.items():
        write_episodes(eps, out / f"{split}.jsonl")
        print(f"{split}\t{len(eps)}\t{out / f'{split}.jsonl'}")
    _write_json(out / "scene_splits.json", config.scene_splits)
    return 0


def cmd_run(args) -> int:
    from .harness import RunConfig, read_results, run_batch
    from .metrics import MetricsReport, aggregate, format_table

    cfg = RunConfig(
        scenes=args.scene, episodes=args.episodes, prefs=args.prefs, out=args.out,
        ranker=args.ranker, explore=args.explore, order=args.order, ne=args.ne,
        max_steps=args.max_steps, seed=args.seed, jobs=args.jobs, embeddings=args.embeddings,
        checkpoint=args.checkpoint, scores=args.scores, noise=args.noise, threshold=args.threshold,
        label=args.label,
    )
    path = run_batch(cfg)
    rows = read_results(path)
    agg = aggregate([MetricsReport.from_dict(r["metrics"]) for r in rows])
    sys.stdout.write(format_table({cfg.run_label: agg}))
    print(f"results\t{path}")
    return 0


def cmd_train(args) -> int:
    from .plotting import plot_losses
    from .preferences import load_table
    from .ranker.embeddings import load_embeddings
    from .ranker.scoring import calibrate_threshold, eval_map
    from .ranker.training import TrainConfig, config_dict, train_cm, training_objects

    table = load_table(args.prefs)
    emb = load_embeddings(args.embeddings)
    cfg = TrainConfig(
        batch_size=args.batch_size, learning_rate=args.lr, weight_decay=args.weight_decay,
        epochs=args.epochs, temperature=args.temperature, seed=args.seed,
        hidden_dim=args.hidden, out_dim=args.hidden,
    )
    val = [o for o in table.objects if table.split_of(o) == "val-unseen"] or None
    ranker, hist = train_cm(emb, table, cfg, val_objects=val)
    calib = calibrate_threshold(ranker, table, val if val else training_objects(table))
    ranker.s_L = calib.s_L
    out = _out(args.out)
    ranker.save(out / "checkpoint.json")
    _write_json(out / "train_config.json", config_dict(cfg))
    _write_json(out / "history.json", {
        "orr_loss": hist.orr_loss, "or_loss": hist.or_loss, "validation": hist.validation,
        "best_epoch": hist.best_epoch, "s_L": calib.s_L, "f1": calib.f1,
    })
    plot_losses(hist.orr_loss, hist.or_loss, hist.validation, out / "training.png")
    scores = eval_map(ranker, table, training_objects(table))
    print(f"s_L\t{calib.s_L:.2f}\tF1\t{calib.f1:.3f}")
    print(f"train mAP\tOR\t{scores['OR']:.3f}\tORR\t{scores['ORR']:.3f}")
    print(f"checkpoint\t{out / 'checkpoint.json'}")
    return 0


def cmd_eval_ranker(args) -> int:
    from .preferences import load_table
    from .ranker.embeddings import load_embeddings
    from .ranker.scoring import ExternalScores, RandomScores, eval_map
    from .ranker.training import EmbeddingRanker

    table = load_table(args.prefs)
    models = {"random": RandomScores(args.seed)}
    if args.checkpoint:
        if not args.embeddings:
            raise ValidationError("--checkpoint needs --embeddings")
        models["embedding"] = EmbeddingRanker.load(args.checkpoint, load_embeddings(args.embeddings))
    if args.scores:
        models["external"] = ExternalScores.load(args.scores)
    splits = {"all": table.objects}
    if table.catalog:
        for name in ("seen", "val-unseen", "test-unseen"):
            objs = [o for o in table.objects if table.split_of(o) == name]
            if objs:
                splits[name] = objs
    lines = ["model,split,n_objects,OR_mAP,ORR_mAP"]
    for mname, model in models.items():
        for sname, objs in splits.items():
            s = eval_map(model, table, objs)
            lines.append(f"{mname},{sname},{len(objs)},{s['OR']:.4f},{s['ORR']:.4f}")
    text = "\n".join(lines) + "\n"
    (_out(args.out) / "map.csv").write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_agreement(args) -> int:
    from .plotting import plot_kappa_hist
    from .preferences import fleiss_kappa, filter_top_agreement, kappa_by_object, read_annotations

    records = read_annotations(args.prefs)
    sets = {"all": records}
    if args.top:
        sets[f"top{args.top}"] = filter_top_agreement(records, args.top)
    out = _out(args.out)
    lines = ["annotators,mode,kappa"]
    for name, recs in sets.items():
        for merged in (False, True):
            mode = "2-way" if merged else "3-way"
            lines.append(f"{name},{mode},{fleiss_kappa(recs, merged):.4f}")
        per_obj = kappa_by_object(recs)
        with open(out / f"kappa_by_object_{name}.csv", "w") as fh:
            fh.write("object,kappa\n")
            for obj, k in per_obj.items():
                fh.write(f"{obj},{k:.4f}\n")
        plot_kappa_hist(per_obj, out / f"kappa_hist_{name}.png", title=f"{name} annotators, 3-way")
    text = "\n".join(lines) + "\n"
    (out / "kappa.csv").write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_report(args) -> int:
    from .harness import read_results
    from .metrics import METRIC_NAMES, MetricsReport, aggregate, format_csv, format_table
    from .plotting import plot_es_at_k, plot_metric_bars

    groups: dict[str, list[dict]] = defaultdict(list)
    for path in args.results:
        for row in read_results(path):
            groups[row["run"]].append(row)
    if not groups:
        raise ValidationError("no result rows found")
    rows, curves = {}, {}
    for label, recs in groups.items():
        rows[label] = aggregate([MetricsReport.from_dict(r["metrics"]) for r in recs])
        outcomes = [r["rearrangements"] for r in recs]
        k_max = max((len(o) for o in outcomes), default=0)
        curve = {}
        for k in range(1, k_max + 1):
            hits = [all(o[:k]) for o in outcomes if len(o) >= k]
            if hits:
                curve[k] = float(np.mean(hits))
        curves[label] = curve
    out = _out(args.out)
    table = format_table(rows)
    (out / "report.txt").write_text(table)
    (out / "report.csv").write_text(format_csv(rows))
    with open(out / "es_at_k.csv", "w") as fh:
        fh.write("run,K,ES@K\n")
        for label, curve in curves.items():
            for k, v in curve.items():
                fh.write(f"{label},{k},{v:.6f}\n")
    plot_es_at_k(curves, out / "es_at_k.png")
    plot_metric_bars(rows, [m for m in METRIC_NAMES if m not in ("MC", "steps")], out / "metrics.png")
    sys.stdout.write(table)
    return 0


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    from .harness import RANKERS
    from .mapping import Strategy
    from .planner import Ordering

    p = argparse.ArgumentParser(prog="housekeep", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="write a synthetic world (scenes, preferences, embeddings)")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--n-scenes", type=int, default=3)
    s.add_argument("--n-objects", type=int, default=30)
    s.add_argument("--agreement", type=float, default=0.85)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("gen", help="generate episode splits")
    s.add_argument("--scene", nargs="+", required=True, help="scene files or directories")
    s.add_argument("--prefs", required=True, help="aggregated preference table (JSON)")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--max-steps", type=int)
    s.add_argument("--count", type=int, help="episodes per split (default 100 train, 20 others)")
    s.set_defaults(func=cmd_gen)

    s = sub.add_parser("run", help="run the agent over an episode file")
    s.add_argument("--scene", nargs="+", required=True)
    s.add_argument("--episodes", required=True)
    s.add_argument("--prefs", required=True)
    s.add_argument("--embeddings")
    s.add_argument("--checkpoint", help="embedding ranker checkpoint")
    s.add_argument("--scores", help="external score file")
    s.add_argument("--ranker", choices=RANKERS, default="oracle")
    s.add_argument("--explore", choices=[x.value for x in Strategy], default="frontier")
    s.add_argument("--order", choices=[x.value for x in Ordering], default=Ordering.DISCOVERY_TIME.value)
    s.add_argument("--ne", type=int, default=16)
    s.add_argument("--max-steps", type=int)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--noise", type=float, default=0.46, help="per-object success probability for --ranker noisy")
    s.add_argument("--threshold", type=float, help="override s_L")
    s.add_argument("--label", help="run name in reports")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("train-ranker", help="train the contrastive-matching ranker")
    s.add_argument("--prefs", required=True)
    s.add_argument("--embeddings", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--epochs", type=int, default=1000)
    s.add_argument("--batch-size", type=int, default=64)
    s.add_argument("--lr", type=float, default=0.01)
    s.add_argument("--weight-decay", type=float, default=0.2)
    s.add_argument("--temperature", type=float, default=0.07)
    s.add_argument("--hidden", type=int, default=512)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval-ranker", help="mAP of rankers per object split")
    s.add_argument("--prefs", required=True)
    s.add_argument("--embeddings")
    s.add_argument("--checkpoint")
    s.add_argument("--scores")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_eval_ranker)

    s = sub.add_parser("agreement", help="Fleiss' kappa over raw annotations")
    s.add_argument("--prefs", required=True, help="annotation CSV")
    s.add_argument("--top", type=int, default=5, help="also score the N most-agreeing annotators (0 to skip)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_agreement)

    s = sub.add_parser("report", help="aggregate result files into tables and figures")
    s.add_argument("results", nargs="+", help="results.jsonl files")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _setup_logging()
        return args.func(args)
    except HousekeepError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
