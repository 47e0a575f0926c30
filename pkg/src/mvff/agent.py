"""Per-view fast-forwarding agents.

Each camera runs a skip policy: at the current frame it reads the feature,
picks how many frames to jump ahead and never looks at the frames it jumps
over. Three paces share the same machinery and differ in their maximum jump
and in how the immediate reward is scaled by the jump size.

The value function is a table over a k-means quantization of the feature
space, trained with epsilon-greedy Q-learning.
"""
from __future__ import annotations

import enum
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .stream import Scene, VideoStream


class StrategyKind(enum.Enum):
    FAST = "fast"
    NORMAL = "normal"
    SLOW = "slow"

    @property
    def letter(self) -> str:
        return self.value[0].upper()

    @classmethod
    def parse(cls, s: "str | StrategyKind") -> "StrategyKind":
        if isinstance(s, StrategyKind):
            return s
        s = str(s).lower()
        for k in cls:
            if s in (k.value, k.value[0]):
                return k
        raise ValueError(f"unknown strategy kind {s!r}")


DEFAULT_ACTION_SPACE = {StrategyKind.SLOW: 15, StrategyKind.NORMAL: 25, StrategyKind.FAST: 35}


@dataclass(frozen=True)
class StrategySpec:
    kind: StrategyKind
    action_space: int

    def __post_init__(self):
        if self.action_space < 1:
            raise ValueError(f"action space must be >= 1, got {self.action_space}")

    @classmethod
    def default(cls, kind: "StrategyKind | str") -> "StrategySpec":
        kind = StrategyKind.parse(kind)
        return cls(kind, DEFAULT_ACTION_SPACE[kind])


@dataclass(frozen=True)
class RewardParams:
    window: int = 4
    beta: float = 0.1
    # "jump": divide the skip penalty by the jump length;
    # "space": divide by the action-space size
    penalty_norm: str = "space"

    def __post_init__(self):
        if self.window < 0:
            raise ValueError(f"hit window must be >= 0, got {self.window}")


# ----------------------------------------------------------------- rewards

def skip_penalty(labels_of_skipped: Sequence[bool], beta: float = 0.1,
                 normalizer: int | None = None) -> float:
    """Important frames jumped over minus ``beta`` times unimportant ones,
    divided by ``normalizer`` (default: the jump length, giving a value in
    ``[-beta, 1]``)."""
    lab = np.asarray(labels_of_skipped, dtype=bool)
    if lab.size == 0:
        raise ValueError("skip penalty needs at least one skipped frame (actions start at 1)")
    a = lab.size
    n_imp = int(lab.sum())
    norm = a if normalizer is None else normalizer
    return (n_imp - beta * (a - n_imp)) / norm


def hit_reward(landing_index: int, truth: np.ndarray, window: int) -> float:
    """``exp(-d / window)`` for distance ``d`` to the nearest important frame
    when ``d <= window``, else 0."""
    truth = np.asarray(truth, dtype=bool)
    if not 0 <= landing_index < truth.size:
        raise IndexError(f"landing index {landing_index} outside 0..{truth.size - 1}")
    if truth[landing_index]:
        return 1.0
    if window <= 0:
        return 0.0
    lo, hi = max(0, landing_index - window), min(truth.size, landing_index + window + 1)
    near = np.flatnonzero(truth[lo:hi])
    if near.size == 0:
        return 0.0
    d = int(np.min(np.abs(near + lo - landing_index)))
    return math.exp(-d / window)


def _sigmoid(z: float) -> float:
    return 1.0 / (1.0 + math.exp(-z))


def reward(strategy: "StrategySpec | StrategyKind", sp: float, hr: float, a_k: int) -> float:
    """Immediate reward for a jump of ``a_k`` frames under a pace."""
    if isinstance(strategy, StrategySpec):
        if not 1 <= a_k <= strategy.action_space:
            raise ValueError(f"action {a_k} outside 1..{strategy.action_space}")
        kind = strategy.kind
    else:
        kind = strategy
    base = -sp + hr
    if kind is StrategyKind.NORMAL:
        return base
    if kind is StrategyKind.SLOW:
        return base * (1.0 - _sigmoid(a_k) / 2.0)
    if kind is StrategyKind.FAST:
        return base * (1.0 + _sigmoid(a_k) / 2.0)
    raise ValueError(f"unknown strategy kind {kind!r}")


def step_reward(strategy: StrategySpec, labels: np.ndarray, pos: int, a: int,
                params: RewardParams = RewardParams()) -> float:
    """Reward for jumping from ``pos`` by ``a`` on a labelled stream.

    The skipped frames are the ``a`` positions ``pos+1 .. pos+a`` (the jump
    ends on the last of them); the list is cut at the stream end. A jump
    past the end lands, for the hit reward, on the last frame.
    """
    skipped = labels[pos + 1:pos + a + 1]
    if skipped.size == 0:
        skipped = labels[pos:pos + 1]
    norm = strategy.action_space if params.penalty_norm == "space" else None
    sp = skip_penalty(skipped, params.beta, norm)
    hr = hit_reward(min(pos + a, labels.size - 1), labels, params.window)
    return reward(strategy, sp, hr, a)


# ------------------------------------------------------------------ policy

class SkipPolicy(Protocol):
    n_actions: int

    def act(self, feature: np.ndarray) -> int: ...


def _nearest(codebook: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Index of the closest codeword for each row of ``x``."""
    d = ((x * x).sum(axis=1)[:, None] - 2.0 * x @ codebook.T
         + (codebook * codebook).sum(axis=1)[None, :])
    return np.argmin(d, axis=1)


def kmeans(x: np.ndarray, k: int, rng: np.random.Generator, iters: int = 30) -> np.ndarray:
    """Lloyd's algorithm with k-means++ seeding; returns the ``(k, D)`` codebook."""
    x = np.asarray(x, dtype=np.float64)
    k = min(k, len(x))
    centers = [x[int(rng.integers(len(x)))]]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        idx = int(rng.integers(len(x))) if total <= 0 else int(rng.choice(len(x), p=d2 / total))
        centers.append(x[idx])
        d2 = np.minimum(d2, ((x - x[idx]) ** 2).sum(axis=1))
    c = np.array(centers)
    for _ in range(iters):
        assign = _nearest(c, x)
        new = c.copy()
        for j in range(k):
            members = x[assign == j]
            if len(members):
                new[j] = members.mean(axis=0)
        if np.allclose(new, c):
            break
        c = new
    return c


@dataclass
class QPolicy:
    """Greedy skip policy backed by a tabular action-value function.

    Features are standardized with ``mean``/``scale`` and mapped to the
    nearest row of ``codebook``; ``q_table[s, k]`` is the value of jumping
    ``k + 1`` frames from state ``s``.
    """
    kind: StrategyKind
    codebook: np.ndarray
    q_table: np.ndarray
    mean: np.ndarray
    scale: np.ndarray
    episode_rewards: list = field(default_factory=list)

    def __post_init__(self):
        for a in (self.codebook, self.q_table, self.mean, self.scale):
            a.setflags(write=False)

    @property
    def n_actions(self) -> int:
        return self.q_table.shape[1]

    @property
    def n_states(self) -> int:
        return self.q_table.shape[0]

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def states(self, features: np.ndarray) -> np.ndarray:
        h = (np.atleast_2d(np.asarray(features, dtype=np.float64)) - self.mean) / self.scale
        return _nearest(self.codebook, h)

    def q_values(self, features: np.ndarray) -> np.ndarray:
        return self.q_table[self.states(features)]

    def act(self, feature: np.ndarray) -> int:
        return int(np.argmax(self.q_values(feature)[0])) + 1

    def greedy_actions(self, features: np.ndarray) -> np.ndarray:
        return np.argmax(self.q_values(features), axis=1) + 1

    def save(self, path: str | os.PathLike) -> Path:
        path = Path(path)
        np.savez(path, kind=np.array(self.kind.value), codebook=self.codebook,
                 q_table=self.q_table, mean=self.mean, scale=self.scale,
                 episode_rewards=np.asarray(self.episode_rewards, dtype=np.float64))
        return path if path.suffix == ".npz" else path.with_name(path.name + ".npz")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "QPolicy":
        with np.load(path, allow_pickle=False) as z:
            return cls(StrategyKind(str(z["kind"])), z["codebook"].copy(), z["q_table"].copy(),
                       z["mean"].copy(), z["scale"].copy(), z["episode_rewards"].tolist())


class ConstantSkipPolicy:
    """Always jumps the same number of frames (uniform sampling)."""

    def __init__(self, skip: int):
        if skip < 1:
            raise ValueError("skip must be >= 1")
        self.n_actions = skip
        self.skip = skip

    def act(self, feature: np.ndarray) -> int:
        return self.skip


class RandomSkipPolicy:
    """Jumps a uniformly random number of frames in ``1..max_skip``."""

    def __init__(self, max_skip: int, seed: int = 0):
        self.n_actions = max_skip
        self._rng = np.random.default_rng(seed)

    def act(self, feature: np.ndarray) -> int:
        return int(self._rng.integers(1, self.n_actions + 1))


# ---------------------------------------------------------------- training

@dataclass(frozen=True)
class TrainConfig:
    """Q-learning hyperparameters.

    The step size of each table entry is ``max(lr, 1 / visits)``, so early
    estimates are running means and later ones track with a constant rate.
    """
    episodes: int = 3000
    gamma: float = 0.95
    lr: float = 0.05
    n_states: int = 64
    eps_start: float = 1.0
    eps_end: float = 0.1
    max_steps: int = 400
    quantizer_samples: int = 20000
    reward: RewardParams = RewardParams()


class TrainingDivergence(FloatingPointError):
    pass


def training_streams(scenes: Sequence[Scene]) -> list[VideoStream]:
    return [s for sc in scenes for s in sc.streams]


def train_q(scenes: Sequence[Scene], strategy: StrategySpec,
            config: TrainConfig = TrainConfig(), seed: int = 0,
            trace: list | None = None) -> QPolicy:
    """Q-learning over the skip MDP of every view of ``scenes``.

    The state is the quantized feature of the current frame, an action jumps
    ``1..A`` frames ahead and the episode ends when a jump leaves the stream
    (or after ``config.max_steps`` jumps). Episodes start at a random frame
    of a random view.

    If ``trace`` is a list, one ``(stream, start, actions)`` tuple per
    episode is appended to it, indexing :func:`training_streams`.
    """
    streams = training_streams(scenes)
    if not streams:
        raise ValueError("training needs at least one stream")
    rng = np.random.default_rng(seed)
    all_feats = np.concatenate([s.features for s in streams]).astype(np.float64)
    mean = all_feats.mean(axis=0)
    scale = all_feats.std(axis=0) + 1e-6
    std_feats = (all_feats - mean) / scale
    if len(std_feats) > config.quantizer_samples:
        sample = std_feats[rng.choice(len(std_feats), config.quantizer_samples, replace=False)]
    else:
        sample = std_feats
    codebook = kmeans(sample, config.n_states, rng)
    state_of = [_nearest(codebook, (s.features.astype(np.float64) - mean) / scale)
                for s in streams]

    n_act = strategy.action_space
    q = np.zeros((len(codebook), n_act))
    visits = np.zeros((len(codebook), n_act), dtype=np.int64)
    episode_rewards = []
    for ep in range(config.episodes):
        frac = ep / max(1, config.episodes - 1)
        eps = config.eps_start + (config.eps_end - config.eps_start) * frac
        k = int(rng.integers(len(streams)))
        states, labels = state_of[k], streams[k].labels
        length = len(states)
        pos = int(rng.integers(0, max(1, length - n_act)))
        total = 0.0
        start, actions = pos, []
        for _ in range(config.max_steps):
            s = states[pos]
            if rng.random() < eps:
                a_idx = int(rng.integers(n_act))
            else:
                a_idx = int(np.argmax(q[s]))
            a = a_idx + 1
            actions.append(a)
            r = step_reward(strategy, labels, pos, a, config.reward)
            total += r
            nxt = pos + a
            done = nxt >= length
            target = r if done else r + config.gamma * q[states[nxt]].max()
            visits[s, a_idx] += 1
            step = max(config.lr, 1.0 / visits[s, a_idx])
            q[s, a_idx] += step * (target - q[s, a_idx])
            if done:
                break
            pos = nxt
        episode_rewards.append(total)
        if trace is not None:
            trace.append((k, start, actions))

    if not np.all(np.isfinite(q)):
        raise TrainingDivergence("non-finite action values after training")
    return QPolicy(strategy.kind, codebook, q, mean, scale, episode_rewards)


def train_strategy_policies(scenes: Sequence[Scene], config: TrainConfig = TrainConfig(),
                            seed: int = 0,
                            specs: dict | None = None) -> dict[StrategyKind, QPolicy]:
    """Train one policy per pace; the seeds of the three runs are distinct."""
    specs = specs or {k: StrategySpec.default(k) for k in StrategyKind}
    children = np.random.SeedSequence(seed).spawn(len(StrategyKind))
    out = {}
    for child, kind in zip(children, StrategyKind):
        out[kind] = train_q(scenes, specs[kind], config, int(child.generate_state(1)[0]))
    return out

# --------------------------------------------------------------- execution

@dataclass(frozen=True)
class SelectionBuffer:
    """Frames one agent kept during one adaptation period."""
    view_id: int
    period: int
    indices: np.ndarray
    features: np.ndarray
    processed_count: int

    def __post_init__(self):
        if len(self.indices) != len(self.features):
            raise ValueError("indices and features disagree in length")
        if self.processed_count != len(self.indices):
            raise ValueError("every processed frame must be a selected frame")
        if len(self.indices) > 1 and np.any(np.diff(self.indices) <= 0):
            raise ValueError("selected indices must be strictly increasing")

    def __len__(self) -> int:
        return len(self.indices)

    @classmethod
    def from_frames(cls, view_id: int, period: int, frames, dim: int) -> "SelectionBuffer":
        frames = list(frames)
        idx = np.array([f[0] for f in frames], dtype=np.int64)
        feats = (np.array([f[1] for f in frames], dtype=np.float32)
                 if frames else np.zeros((0, dim), dtype=np.float32))
        return cls(view_id, period, idx, feats, len(frames))


def fast_forward_period(policy: SkipPolicy, strategy: StrategySpec, segment: VideoStream,
                        start_offset: int = 0, *, period: int = 0,
                        base_index: int = 0) -> tuple[SelectionBuffer, int]:
    """Run a skip policy over one adaptation period.

    Starting at ``start_offset`` (relative to the segment), read the frame,
    keep it, jump by the greedy action, and stop once a jump leaves the
    segment. Returns the buffer (global indices ``base_index + pos``) and the
    overshoot past the segment end, which is where the next period starts.
    """
    if policy.n_actions > strategy.action_space:
        raise ValueError(f"policy has {policy.n_actions} actions, "
                         f"{strategy.kind.value} allows {strategy.action_space}")
    if start_offset < 0:
        raise ValueError("start offset must be >= 0")
    length = len(segment)
    pos = start_offset
    picked = []
    while pos < length:
        picked.append(pos)
        a = policy.act(segment.features[pos])
        if not 1 <= a <= strategy.action_space:
            raise ValueError(f"policy chose {a}, outside 1..{strategy.action_space}")
        pos += a
    idx = np.asarray(picked, dtype=np.int64)
    buf = SelectionBuffer(segment.view_id, period, idx + base_index,
                          segment.features[idx].copy(), len(picked))
    return buf, pos - length
