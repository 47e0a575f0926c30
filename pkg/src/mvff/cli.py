"""Command-line front end: ``mvff {train,run,sweep,gen-scene,validate}``."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import experiments as ex
from .config import SWEEP_AXES, ConfigError, ExperimentConfig, GraphConfig, SceneConfig
from .consensus import VARIANTS, reports_to_csv
from .netsim import GraphError
from .stream import SceneFormatError, save_scene

log = logging.getLogger("mvff")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON experiment config")
    p.add_argument("--scene", help="scene manifest path (default: synthetic)")
    p.add_argument("--graph", help="default|complete|ring|path|star|er:P[:SEED]|edges.json")
    p.add_argument("--req", help="system requirement X/Y/Z (fast/normal/slow)")
    p.add_argument("--consensus", choices=VARIANTS)
    p.add_argument("--period", type=int, help="adaptation period T in frames")
    p.add_argument("--alpha", type=float, help="frame similarity scale")
    p.add_argument("--window", type=int, help="coverage window w in frames")
    p.add_argument("--seed", type=int)
    p.add_argument("--checkpoints", help="directory holding fast/normal/slow.npz")
    p.add_argument("--out", type=Path, default=Path("out"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mvff", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the three pace policies")
    _common(p)
    p.add_argument("--episodes", type=int)

    p = sub.add_parser("run", help="run one collaborative experiment")
    _common(p)

    p = sub.add_parser("sweep", help="sweep one axis over several seeds")
    _common(p)
    p.add_argument("--axis", choices=SWEEP_AXES)
    p.add_argument("--values", nargs="+", help="sweep points (default: per axis)")
    p.add_argument("--seeds", type=int, nargs="+")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")

    p = sub.add_parser("gen-scene", help="write a synthetic scene to --out")
    _common(p)
    p.add_argument("--length", type=int)
    p.add_argument("--views", type=int)

    p = sub.add_parser("validate", help="check a config without running anything")
    _common(p)
    return parser


def resolve(args: argparse.Namespace) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    cfg = cfg.override(requirement=args.req, consensus=args.consensus, period=args.period,
                       alpha=args.alpha, window=args.window, seed=args.seed,
                       checkpoints=args.checkpoints)
    if args.scene:
        cfg = cfg.override(scene=SceneConfig(manifest=args.scene))
    if args.graph:
        cfg = cfg.override(graph=GraphConfig.parse(args.graph))
    extra = {}
    if getattr(args, "axis", None):
        extra["sweep_axis"] = args.axis
    if getattr(args, "values", None):
        extra["sweep_values"] = tuple(args.values)
    if getattr(args, "seeds", None):
        extra["seeds"] = tuple(args.seeds)
    if getattr(args, "episodes", None) is not None:
        extra["training"] = replace(cfg.training, episodes=args.episodes)
    if getattr(args, "length", None):
        extra["scene"] = replace(extra.get("scene", cfg.scene), length=args.length)
    if getattr(args, "views", None):
        extra["scene"] = replace(extra.get("scene", cfg.scene), n_views=args.views)
    cfg = cfg.override(**extra)
    if cfg.sweep_axis == "connectivity_p" and cfg.sweep_values:
        cfg = cfg.override(sweep_values=tuple(float(v) for v in cfg.sweep_values))
    if args.command != "gen-scene":  # a scene alone needs no requirement or graph
        cfg.validate()
    return cfg


def _write(out: Path, name: str, text: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(text)
    log.info("wrote %s", path)
    return path


def cmd_train(cfg: ExperimentConfig, out: Path) -> None:
    train, held = ex.corpus(cfg)
    log.info("training on %d scenes, %d held out", len(train), len(held))
    policies, _ = ex.train_policies(cfg, train)
    ex.save_policies(policies, out)


def cmd_run(cfg: ExperimentConfig, out: Path) -> None:
    policies = ex.load_policies(cfg)
    summary = ex.run_once(cfg, policies)
    _write(out, "run.csv", summary.to_csv(cfg.period))
    _write(out, "ledger.csv", summary.comm.to_csv())
    _write(out, "consensus.csv",
           reports_to_csv([r.report for r in summary.records if r.report is not None]))
    print(f"coverage={summary.coverage:.6f} processing_rate={summary.processing_rate:.6f} "
          f"bytes={summary.comm.bytes_total}")


def cmd_sweep(cfg: ExperimentConfig, out: Path, jobs: int) -> None:
    policies = ex.load_policies(cfg)
    rows = ex.sweep(cfg, policies, jobs)
    runs_cols = ["value", "seed", "n_edges", *ex.METRICS, "consensus_frames"]
    _write(out, "sweep_runs.csv", ex.rows_to_csv(rows, runs_cols))
    agg = ex.aggregate(rows)
    _write(out, "sweep.csv", ex.rows_to_csv(agg, ["value", "n_runs", "n_edges", *ex.METRICS]))
    _write(out, "tradeoff.csv", ex.xy_csv([a["processing_rate"] for a in agg],
                                          [a["coverage"] for a in agg]))
    if cfg.sweep_axis == "connectivity_p":
        by_edges = ex.aggregate(rows, key="n_edges")
        _write(out, "by_edges.csv", ex.rows_to_csv(by_edges, ["n_edges", "n_runs", *ex.METRICS]))
        _write(out, "coverage_vs_edges.csv", ex.xy_csv([a["n_edges"] for a in by_edges],
                                                       [a["coverage"] for a in by_edges]))


def cmd_gen_scene(cfg: ExperimentConfig, out: Path) -> None:
    scene = cfg.scene.build(cfg.seed)
    path = save_scene(scene, out)
    print(path)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = resolve(args)
        if args.command == "validate":
            cfg.n_views()
            print("config OK")
            return 0
        _write(args.out, "config.json", cfg.to_json())
        if args.command == "train":
            cmd_train(cfg, args.out)
        elif args.command == "run":
            cmd_run(cfg, args.out)
        elif args.command == "sweep":
            cmd_sweep(cfg, args.out, args.jobs)
        elif args.command == "gen-scene":
            cmd_gen_scene(cfg, args.out)
    except (ConfigError, GraphError, FileNotFoundError, SceneFormatError, ValueError) as exc:
        print(f"mvff {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
