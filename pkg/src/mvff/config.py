"""Experiment configuration: one JSON document, validated before any work."""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import numpy as np

from . import consensus as cons
from .agent import RewardParams, StrategyKind, TrainConfig
from .netsim import CommGraph, GraphError, erdos_renyi
from .orchestrator import SystemRequirement, default_graph
from .stream import Scene, generate_scene, load_scene, random_event_spec


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SceneConfig:
    """Either a manifest path or the parameters of a synthetic scene.

    The synthetic defaults describe the benchmark regime: fixed camera
    backgrounds, a weak event signal under heavy noise, and activity
    episodes made of short bursts spread over a few hundred frames.
    """
    manifest: str | None = None
    n_views: int = 6
    length: int = 3000
    dim: int = 16
    noise_sigma: float = 1.5
    event_weight: float = 0.3
    event_scale: float = 6.0
    density: float = 0.4
    min_len: int = 200
    max_len: int = 500
    min_views: int = 1
    max_views: int = 2
    bursts: tuple | None = (4, 12, 15, 40)

    def build(self, seed: int, length: int | None = None) -> Scene:
        if self.manifest is not None:
            return load_scene(self.manifest)
        length = length or self.length
        rng = np.random.default_rng([seed, 7])
        events = random_event_spec(
            self.n_views, length, rng, density=self.density, min_len=self.min_len,
            max_len=self.max_len, min_views=self.min_views, max_views=self.max_views,
            bursts=None if self.bursts is None else tuple(self.bursts))
        return generate_scene(self.n_views, length, self.dim, events, self.noise_sigma, seed,
                              event_weight=self.event_weight, event_scale=self.event_scale)


@dataclass(frozen=True)
class GraphConfig:
    """``kind`` is one of default, complete, ring, path, star, edges, erdos_renyi."""
    kind: str = "default"
    edges: tuple | None = None
    p: float = 0.5
    seed: int | None = None

    def build(self, n: int, seed: int = 0) -> CommGraph:
        if self.kind == "default":
            return default_graph(n)
        if self.kind in ("complete", "ring", "path", "star"):
            return getattr(CommGraph, self.kind)(n)
        if self.kind == "edges":
            return CommGraph(n, [tuple(e) for e in self.edges or ()], require_connected=True)
        if self.kind == "erdos_renyi":
            return erdos_renyi(n, self.p, seed if self.seed is None else self.seed)
        raise ConfigError(f"unknown graph kind {self.kind!r}")

    @classmethod
    def parse(cls, text: str) -> "GraphConfig":
        """Flag syntax: a kind name, ``er:P`` or ``er:P:SEED``, or a JSON edge list file."""
        if text.startswith("er:"):
            parts = text.split(":")
            seed = int(parts[2]) if len(parts) > 2 else None
            return cls("erdos_renyi", p=float(parts[1]), seed=seed)
        if text in ("default", "complete", "ring", "path", "star"):
            return cls(text)
        path = Path(text)
        if path.exists():
            return cls("edges", tuple(tuple(e) for e in json.loads(path.read_text())))
        raise ConfigError(f"cannot parse graph spec {text!r}")


@dataclass(frozen=True)
class TrainingConfig:
    n_scenes: int = 10
    train_fraction: float = 0.8
    scene_length: int = 1500
    episodes: int = TrainConfig.episodes
    gamma: float = TrainConfig.gamma
    lr: float = TrainConfig.lr
    n_states: int = TrainConfig.n_states

    def train_config(self) -> TrainConfig:
        return TrainConfig(episodes=self.episodes, gamma=self.gamma, lr=self.lr,
                           n_states=self.n_states, reward=RewardParams())

    def split(self) -> tuple[list[int], list[int]]:
        """Scene indices of the training and held-out parts."""
        n_train = int(round(self.n_scenes * self.train_fraction))
        return list(range(n_train)), list(range(n_train, self.n_scenes))


SWEEP_AXES = ("requirement", "connectivity_p", "consensus_variant")
DEFAULT_SWEEP_VALUES = {
    "requirement": ["2/2/2", "2/3/1", "3/2/1", "4/1/1", "5/0/1"],
    "connectivity_p": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
    "consensus_variant": list(cons.VARIANTS),
}


@dataclass(frozen=True)
class ExperimentConfig:
    scene: SceneConfig = SceneConfig()
    graph: GraphConfig = GraphConfig()
    requirement: str = "3/2/1"
    consensus: str = "dmvf"
    period: int = 100
    alpha: float = 0.05
    window: int = 4
    seed: int = 0
    seeds: tuple = (0, 1, 2, 3, 4)
    checkpoints: str | None = None
    training: TrainingConfig = TrainingConfig()
    sweep_axis: str = "requirement"
    sweep_values: tuple | None = None

    # ------------------------------------------------------------ I/O

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        kw = dict(data)
        for name, sub in (("scene", SceneConfig), ("graph", GraphConfig),
                          ("training", TrainingConfig)):
            if name in kw and isinstance(kw[name], dict):
                sub_known = {f.name for f in fields(sub)}
                bad = set(kw[name]) - sub_known
                if bad:
                    raise ConfigError(f"unknown {name} fields: {sorted(bad)}")
                kw[name] = sub(**_tuples(kw[name]))
        return cls(**_tuples(kw))

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ExperimentConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc

    def override(self, **flags: Any) -> "ExperimentConfig":
        """Return a copy with every non-``None`` flag applied."""
        return replace(self, **{k: v for k, v in flags.items() if v is not None})

    # ----------------------------------------------------- validation

    def validate(self) -> None:
        """Raise :class:`ConfigError` on the first violated invariant."""
        if self.period < 1:
            raise ConfigError(f"period must be >= 1, got {self.period}")
        if self.window < 0:
            raise ConfigError(f"window must be >= 0, got {self.window}")
        if self.alpha <= 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        if self.consensus not in cons.VARIANTS:
            raise ConfigError(f"consensus must be one of {cons.VARIANTS}, got {self.consensus!r}")
        if not self.seeds:
            raise ConfigError("seeds must be nonempty")
        if self.sweep_axis not in SWEEP_AXES:
            raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}")
        if not 0 < self.training.train_fraction <= 1:
            raise ConfigError("train_fraction must lie in (0, 1]")
        if not self.training.split()[0]:
            raise ConfigError("training split is empty")
        if self.training.episodes < 0:
            raise ConfigError("episodes must be >= 0")
        n = self.n_views()
        try:
            SystemRequirement.parse(self.requirement).check(n)
            if self.sweep_axis == "requirement":
                for r in self.sweep_values or ():
                    SystemRequirement.parse(r).check(n)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.graph.kind == "erdos_renyi" and not 0 < self.graph.p <= 1:
            raise ConfigError(f"edge probability must lie in (0, 1], got {self.graph.p}")
        if self.graph.kind != "erdos_renyi":
            try:
                self.graph.build(n)
            except GraphError as exc:
                raise ConfigError(f"graph: {exc}") from exc

    def n_views(self) -> int:
        if self.scene.manifest is not None:
            try:
                return int(json.loads(Path(self.scene.manifest).read_text())["n_views"])
            except (OSError, KeyError, ValueError) as exc:
                raise ConfigError(f"scene manifest {self.scene.manifest}: {exc}") from exc
        return self.scene.n_views

    def checkpoint_paths(self) -> dict[StrategyKind, Path]:
        if self.checkpoints is None:
            raise ConfigError("no checkpoint directory configured (use --checkpoints)")
        root = Path(self.checkpoints)
        return {k: root / f"{k.value}.npz" for k in StrategyKind}

    def sweep_points(self) -> list:
        return list(self.sweep_values or DEFAULT_SWEEP_VALUES[self.sweep_axis])


def _tuples(d: dict) -> dict:
    """JSON lists to tuples so frozen configs stay hashable."""
    def conv(v):
        if isinstance(v, list):
            return tuple(conv(x) for x in v)
        return v
    return {k: conv(v) for k, v in d.items()}
