"""Frame similarity, agent-to-agent similarity and initial importance scores."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .agent import SelectionBuffer
from .netsim import CommGraph

DEFAULT_ALPHA = 0.05
ISOLATED_SCORE = 0.5


def frame_similarity(x: np.ndarray, y: np.ndarray, alpha: float = DEFAULT_ALPHA) -> float:
    """``exp(-alpha * ||x - y||_2)``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"feature dimensions differ: {x.shape} vs {y.shape}")
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    return float(np.exp(-alpha * np.linalg.norm(x - y)))


def similarity_table(a: np.ndarray, b: np.ndarray, alpha: float = DEFAULT_ALPHA) -> np.ndarray:
    """Pairwise frame similarities, ``out[s, k] = sim(a[s], b[k])``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    dist = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
    return np.exp(-alpha * dist)


def agent_similarity(f_i: SelectionBuffer, f_j: SelectionBuffer,
                     alpha: float = DEFAULT_ALPHA) -> float:
    """How well ``f_i`` covers ``f_j``.

    Each frame of ``f_j`` is matched to its most similar frame in ``f_i``;
    the result is the mean of those best similarities. An empty buffer on
    either side gives 0.
    """
    if len(f_i) == 0 or len(f_j) == 0:
        return 0.0
    table = similarity_table(f_j.features, f_i.features, alpha)
    return float(table.max(axis=1).mean())


@dataclass(frozen=True)
class InitialScoreSet:
    """Agent ``owner``'s estimates for every member of its closed neighborhood."""
    owner: int
    scores: Mapping[int, float]
    degree: int

    def get(self, j: int) -> float:
        return self.scores.get(j, 0.0)

    def as_vector(self, n: int) -> np.ndarray:
        v = np.zeros(n)
        for j, x in self.scores.items():
            v[j] = x
        return v


def initial_scores(i: int, buffers: Mapping[int, SelectionBuffer], graph: CommGraph,
                   alpha: float = DEFAULT_ALPHA) -> InitialScoreSet:
    """Agent ``i``'s initial importance for itself and each neighbor.

    For ``j`` in the closed neighborhood ``V_i`` the score is the mean, over
    the other members ``k`` of ``V_i``, of how well ``j``'s buffer covers
    ``k``'s. An isolated agent scores itself :data:`ISOLATED_SCORE`.
    """
    members = graph.closed_neighborhood(i)
    missing = [k for k in members if k not in buffers]
    if missing:
        raise KeyError(f"agent {i} has no buffer from {missing}")
    if len(members) == 1:
        return InitialScoreSet(i, {i: ISOLATED_SCORE}, 0)
    sims = {(j, k): agent_similarity(buffers[j], buffers[k], alpha)
            for j in members for k in members if j != k}
    scores = {j: float(np.mean([sims[j, k] for k in members if k != j])) for j in members}
    return InitialScoreSet(i, scores, graph.degree(i))
