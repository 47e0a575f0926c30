"""Training, single runs and sweeps driven by an :class:`ExperimentConfig`."""
from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .agent import QPolicy, StrategyKind, StrategySpec, train_q, training_streams
from .config import ConfigError, ExperimentConfig
from .consensus import StopRule
from .orchestrator import RunSummary, run_baseline, run_experiment
from .stream import Scene

TRAIN_SCENE_SEED = 10_000


def corpus(cfg: ExperimentConfig) -> tuple[list[Scene], list[Scene]]:
    """Synthetic training corpus split by scene into training and held-out parts."""
    if cfg.scene.manifest is not None:
        raise ConfigError("training needs a synthetic scene config, not a manifest")
    tr = cfg.training
    scenes = [cfg.scene.build(TRAIN_SCENE_SEED + k, tr.scene_length) for k in range(tr.n_scenes)]
    train_idx, held_idx = tr.split()
    return [scenes[k] for k in train_idx], [scenes[k] for k in held_idx]


def train_policies(cfg: ExperimentConfig, scenes: list[Scene] | None = None,
                   with_traces: bool = False):
    """Train one policy per pace. Returns ``(policies, traces)``."""
    if scenes is None:
        scenes = corpus(cfg)[0]
    if not training_streams(scenes):
        raise ConfigError("training set is empty")
    children = np.random.SeedSequence(cfg.seed).spawn(len(StrategyKind))
    policies, traces = {}, {}
    for child, kind in zip(children, StrategyKind):
        trace = [] if with_traces else None
        policies[kind] = train_q(scenes, StrategySpec.default(kind), cfg.training.train_config(),
                                 int(child.generate_state(1)[0]), trace=trace)
        traces[kind] = trace
    return policies, traces


def episode_reward_csv(policy: QPolicy) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["episode", "reward"])
    for k, r in enumerate(policy.episode_rewards):
        w.writerow([k, f"{r:.9f}"])
    return buf.getvalue()


def save_policies(policies: dict, directory: str | Path) -> dict[StrategyKind, Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    out = {}
    for kind, pol in policies.items():
        out[kind] = pol.save(d / f"{kind.value}.npz")
        (d / f"rewards_{kind.value}.csv").write_text(episode_reward_csv(pol))
    return out


def load_policies(cfg: ExperimentConfig) -> dict[StrategyKind, QPolicy]:
    paths = cfg.checkpoint_paths()
    missing = [str(p) for p in paths.values() if not p.exists()]
    if missing:
        raise FileNotFoundError(f"missing checkpoint(s): {', '.join(missing)}")
    return {k: QPolicy.load(p) for k, p in paths.items()}


def run_once(cfg: ExperimentConfig, policies, seed: int | None = None) -> RunSummary:
    seed = cfg.seed if seed is None else seed
    scene = cfg.scene.build(seed)
    graph = cfg.graph.build(scene.n_views, seed)
    return run_experiment(scene, graph, policies, cfg.requirement, variant=cfg.consensus,
                          period_len=cfg.period, alpha=cfg.alpha, window=cfg.window,
                          stop=StopRule())


def _point_config(cfg: ExperimentConfig, axis: str, value) -> ExperimentConfig:
    if axis == "requirement":
        return replace(cfg, requirement=str(value))
    if axis == "consensus_variant":
        return replace(cfg, consensus=str(value))
    if axis == "connectivity_p":
        return replace(cfg, graph=replace(cfg.graph, kind="erdos_renyi", p=float(value)))
    raise ConfigError(f"unknown sweep axis {axis!r}")


def _run_task(args) -> dict:
    cfg, policies, axis, value, seed = args
    pcfg = _point_config(cfg, axis, value)
    summary = run_once(pcfg, policies, seed)
    scene = pcfg.scene.build(seed)
    base = run_baseline(scene, "independent", policy=policies[StrategyKind.NORMAL],
                        period_len=cfg.period, window=cfg.window)
    graph = pcfg.graph.build(scene.n_views, seed)
    return {"value": value, "seed": seed, "n_edges": graph.n_edges,
            "coverage": summary.coverage, "processing_rate": summary.processing_rate,
            "bytes": summary.comm.bytes_total, "iterations": summary.consensus_iterations,
            "consensus_frames": summary.ledger.total(phase="consensus", what="frames"),
            "baseline_coverage": base.coverage, "baseline_rate": base.processing_rate}


def sweep(cfg: ExperimentConfig, policies, jobs: int = 1) -> list[dict]:
    """Every (point, seed) run, in deterministic order."""
    tasks = [(cfg, policies, cfg.sweep_axis, v, s)
             for v in cfg.sweep_points() for s in cfg.seeds]
    if jobs <= 1:
        return [_run_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_task, tasks))


METRICS = ("coverage", "processing_rate", "bytes", "iterations", "baseline_coverage",
           "baseline_rate")


def aggregate(rows: list[dict], key: str = "value") -> list[dict]:
    """Seed-averaged rows grouped by ``key``, in first-seen order."""
    groups: dict = {}
    for r in rows:
        groups.setdefault(r[key], []).append(r)
    out = []
    for k, rs in groups.items():
        agg = {key: k, "n_runs": len(rs)}
        for m in METRICS:
            agg[m] = float(np.mean([r[m] for r in rs]))
        if key != "n_edges":
            agg["n_edges"] = float(np.mean([r["n_edges"] for r in rs]))
        out.append(agg)
    if key == "n_edges":
        out.sort(key=lambda a: a["n_edges"])
    return out


def rows_to_csv(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([f"{r[c]:.6f}" if isinstance(r[c], float) else r[c] for c in columns])
    return buf.getvalue()


def xy_csv(xs, ys) -> str:
    """Two-column plot data."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "y"])
    for x, y in zip(xs, ys):
        w.writerow([f"{x:.6f}", f"{y:.6f}"])
    return buf.getvalue()
