"""Agreement on per-agent importance scores.

Two families are provided. The max-consensus family (``dmvf``, ``ave``,
``one``) first forms a local score for every agent and then floods the
elementwise maximum of sparse score vectors for ``diameter(G)`` rounds,
after which every agent holds the same vector exactly. The gradient family
(``dgd``, ``extra``) treats the agents' initial estimates as data of a
separable least-squares problem and solves it with decentralized first-order
iterations over the mixing matrix of :func:`build_consensus_matrix`.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .netsim import CommGraph, GraphError, Network, ScoreVec, diameter

VARIANTS = ("dmvf", "ave", "one", "dgd", "extra")
MAX_FAMILY = ("dmvf", "ave", "one")


class ConsensusDivergence(FloatingPointError):
    pass


@dataclass
class ConsensusReport:
    """Outcome of one consensus run.

    ``final`` is the agreed score vector; ``agent_vectors`` holds every
    agent's own copy (rows). ``residual`` is the largest inter-agent
    disagreement at the stop.
    """
    variant: str
    final: np.ndarray
    iterations: int
    message_rounds: int
    residual: float
    converged: bool = True
    agent_vectors: np.ndarray | None = None

    def csv_row(self) -> list:
        return [self.variant, self.iterations, self.message_rounds, f"{self.residual:.6e}"]


def reports_to_csv(reports: Sequence[ConsensusReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["variant", "iterations", "message_rounds", "residual"])
    for r in reports:
        w.writerow(r.csv_row())
    return buf.getvalue()


# ----------------------------------------------------------- local updates

def _check_cover(i: int, keys, neighborhood) -> None:
    if neighborhood is None:
        return
    missing = sorted(set(neighborhood) - set(keys))
    if missing:
        raise KeyError(f"agent {i}: no initial score from {missing}")
    extra = sorted(set(keys) - set(neighborhood))
    if extra:
        raise KeyError(f"agent {i}: unexpected scores from non-neighbors {extra}")


def weighted_update(i: int, received: Mapping[int, float], degrees: Mapping[int, int],
                    neighborhood: Sequence[int] | None = None) -> float:
    """Degree-weighted mean of the estimates ``x0_ji`` that agent ``i``
    received; estimator ``j`` is weighted by ``1 / n_j``."""
    _check_cover(i, received, neighborhood)
    missing = sorted(set(received) - set(degrees))
    if missing:
        raise KeyError(f"agent {i}: no degree for {missing}")
    if len(received) == 1:
        return float(next(iter(received.values())))
    num = den = 0.0
    for j in sorted(received):
        if degrees[j] < 1:
            raise ValueError(f"agent {i}: neighbor {j} reports degree {degrees[j]}")
        num += received[j] / degrees[j]
        den += 1.0 / degrees[j]
    return num / den


def ave_update(i: int, received: Mapping[int, float], n_i: int,
               neighborhood: Sequence[int] | None = None) -> float:
    """Plain mean of the ``n_i + 1`` estimates of agent ``i``."""
    _check_cover(i, received, neighborhood)
    if len(received) != n_i + 1:
        raise KeyError(f"agent {i}: expected {n_i + 1} estimates, got {len(received)}")
    return float(sum(received[j] for j in sorted(received)) / (n_i + 1))


def one_update(i: int, x_ii: float) -> float:
    """Agent ``i`` keeps its own estimate of itself."""
    return float(x_ii)


# -------------------------------------------------------- max consensus

def maximal_consensus(local_vectors: np.ndarray, graph: CommGraph,
                      network: Network | None = None, rounds: int | None = None,
                      variant: str = "dmvf") -> ConsensusReport:
    """Flood elementwise maxima over ``graph``.

    ``local_vectors[i]`` is agent ``i``'s starting vector. Each round every
    agent sends its vector to all neighbors and keeps the elementwise max
    of what it holds and what it received. ``rounds`` defaults to the graph
    diameter, which is exactly enough for full agreement.
    """
    x = np.array(local_vectors, dtype=np.float64)
    if x.shape != (graph.n, graph.n):
        raise ValueError(f"expected {graph.n}x{graph.n} local vectors, got {x.shape}")
    if not graph.is_connected():
        raise GraphError("maximal consensus needs a connected communication graph")
    if rounds is None:
        rounds = diameter(graph)
    net = network if network is not None else Network(graph)
    for _ in range(rounds):
        inboxes = net.broadcast([ScoreVec(x[i].copy()) for i in range(graph.n)])
        new = x.copy()
        for i, box in enumerate(inboxes):
            for m in box:
                np.maximum(new[i], m.payload.values, out=new[i])
        x = new
    residual = float(np.abs(x - x[0]).max()) if graph.n else 0.0
    return ConsensusReport(variant, x[0].copy(), rounds, rounds, residual,
                           converged=residual == 0.0, agent_vectors=x)


def sparse_local_vectors(scores: Sequence[float]) -> np.ndarray:
    """Agent ``i`` starts from a vector holding ``scores[i]`` at position ``i``."""
    return np.diag(np.asarray(scores, dtype=np.float64))


# ----------------------------------------------------- gradient methods

def build_consensus_matrix(graph: CommGraph) -> np.ndarray:
    """Max-degree mixing matrix: ``1/(d_max+1)`` on edges, the remainder on
    the diagonal."""
    a = graph.adjacency()
    d = a.sum(axis=1)
    dmax = d.max() if graph.n else 0.0
    p = a / (dmax + 1.0)
    p[np.diag_indices_from(p)] = (dmax + 1.0 - d) / (dmax + 1.0)
    return p


@dataclass(frozen=True)
class StopRule:
    """Stop when both the step change and the inter-agent spread (sup-norm)
    fall below ``tol``, or after ``max_iter`` updates."""
    tol: float = 1e-8
    max_iter: int = 10_000


def _edge_terms(initial: np.ndarray, graph: CommGraph):
    """Mask and per-agent weights of the least-squares terms."""
    mask = graph.adjacency()
    deg = mask.sum(axis=1)
    w = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
    return mask, w


def objective(x: np.ndarray, initial: np.ndarray, graph: CommGraph) -> float:
    """Sum over agents of ``(1/n_i) * sum_{j ~ i} (x_j - x0_ij)^2``."""
    mask, w = _edge_terms(initial, graph)
    return float((w[:, None] * mask * (x[None, :] - initial) ** 2).sum())


def local_gradients(x: np.ndarray, initial: np.ndarray, graph: CommGraph) -> np.ndarray:
    """Row ``i``: gradient of agent ``i``'s term at agent ``i``'s iterate
    ``x[i]`` (``x`` is ``N x N``, one row per agent)."""
    mask, w = _edge_terms(initial, graph)
    return 2.0 * w[:, None] * mask * (x - initial)


def _initial_iterates(initial: np.ndarray, graph: CommGraph) -> np.ndarray:
    # agent i starts from its own row; entries outside V_i are already 0
    return np.array(initial, dtype=np.float64)


def _charge_round(network: Network | None, graph: CommGraph) -> None:
    # vectorized mixing equals one broadcast of every agent's vector
    if network is None:
        return
    network.ledger.record_bulk(network.period, network.phase, "ScoreVec",
                               messages=2 * graph.n_edges,
                               nbytes=2 * graph.n_edges * ScoreVec(np.zeros(graph.n)).size_bytes)
    network.rounds += 1


def _check_finite(x: np.ndarray, t: int, name: str) -> None:
    if not np.all(np.isfinite(x)):
        raise ConsensusDivergence(f"{name}: non-finite iterate at iteration {t}")


def harmonic_schedule(gamma0: float) -> Callable[[int], float]:
    return lambda t: gamma0 / (t + 1)


def dgd_solve(initial: np.ndarray, graph: CommGraph, gamma0: float = 0.5,
              schedule: Callable[[int], float] | None = None, stop: StopRule = StopRule(),
              network: Network | None = None) -> ConsensusReport:
    """Decentralized gradient descent with a diminishing stepsize.

    ``initial[i, j]`` is agent ``i``'s estimate of agent ``j``. Each agent
    starts from its own row (zero outside its neighborhood), mixes with
    its neighbors through the max-degree matrix and takes a local gradient
    step of size ``schedule(t)`` (default ``gamma0 / (t + 1)``). The result
    is the agents' average iterate.
    """
    initial = np.asarray(initial, dtype=np.float64)
    if not graph.is_connected():
        raise GraphError("dgd needs a connected communication graph")
    step = schedule or harmonic_schedule(gamma0)
    p = build_consensus_matrix(graph)
    x = _initial_iterates(initial, graph)
    converged = False
    t = 0
    while t < stop.max_iter:
        _charge_round(network, graph)
        nxt = p @ x - step(t) * local_gradients(x, initial, graph)
        t += 1
        _check_finite(nxt, t, "dgd")
        change = float(np.abs(nxt - x).max())
        x = nxt
        spread = float(np.abs(x - x.mean(axis=0)).max())
        if change < stop.tol and spread < stop.tol:
            converged = True
            break
    spread = float(np.abs(x - x.mean(axis=0)).max())
    return ConsensusReport("dgd", x.mean(axis=0), t, t, spread, converged, x)


def extra_solve(initial: np.ndarray, graph: CommGraph, alpha: float = 0.1,
                stop: StopRule = StopRule(), network: Network | None = None) -> ConsensusReport:
    """EXTRA with ``M = I + P``.

    The first update is a plain gradient-mixing step with stepsize
    ``alpha``; afterwards
    ``x+ = M x - (M/2) x_prev - alpha * (grad(x) - grad(x_prev))``.
    """
    initial = np.asarray(initial, dtype=np.float64)
    if alpha <= 0:
        raise ValueError(f"EXTRA stepsize must be positive, got {alpha}")
    if not graph.is_connected():
        raise GraphError("extra needs a connected communication graph")
    p = build_consensus_matrix(graph)
    m = np.eye(graph.n) + p
    prev = _initial_iterates(initial, graph)
    g_prev = local_gradients(prev, initial, graph)
    _charge_round(network, graph)
    x = p @ prev - alpha * g_prev
    t = 1
    _check_finite(x, t, "extra")
    converged = False
    while t < stop.max_iter:
        change = float(np.abs(x - prev).max())
        spread = float(np.abs(x - x.mean(axis=0)).max())
        if change < stop.tol and spread < stop.tol:
            converged = True
            break
        _charge_round(network, graph)
        g = local_gradients(x, initial, graph)
        nxt = m @ x - 0.5 * (m @ prev) - alpha * (g - g_prev)
        t += 1
        _check_finite(nxt, t, "extra")
        prev, x, g_prev = x, nxt, g
    else:
        change = float(np.abs(x - prev).max())
        spread = float(np.abs(x - x.mean(axis=0)).max())
        converged = change < stop.tol and spread < stop.tol
    spread = float(np.abs(x - x.mean(axis=0)).max())
    return ConsensusReport("extra", x.mean(axis=0), t, t, spread, converged, x)


def oracle_solve(initial: np.ndarray, graph: CommGraph) -> np.ndarray:
    """Exact minimizer of :func:`objective`.

    The problem separates per coordinate: ``x_j`` is the mean of the
    neighbors' estimates ``x0_ij`` weighted by ``1 / n_i``. A node without
    neighbors keeps its own estimate.
    """
    initial = np.asarray(initial, dtype=np.float64)
    mask, w = _edge_terms(initial, graph)
    weights = w[:, None] * mask
    den = weights.sum(axis=0)
    num = (weights * initial).sum(axis=0)
    own = np.diag(initial)
    return np.where(den > 0, num / np.where(den > 0, den, 1.0), own)


# ------------------------------------------------------------ dispatcher

def run_consensus(variant: str, initial: np.ndarray, graph: CommGraph,
                  received: Sequence[Mapping[int, float]] | None = None,
                  received_degrees: Sequence[Mapping[int, int]] | None = None,
                  network: Network | None = None, *, gamma0: float = 0.5,
                  extra_alpha: float = 0.1, stop: StopRule = StopRule()) -> ConsensusReport:
    """Run one consensus variant.

    ``initial[i, j]`` is agent ``i``'s estimate ``x0_ij``. ``received[i]``
    maps each ``j`` in ``V_i`` to ``x0_ji`` as delivered to agent ``i``
    (needed by ``dmvf`` and ``ave``); ``received_degrees[i]`` maps ``j`` to
    ``n_j`` (needed by ``dmvf``).
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown consensus variant {variant!r}; choose from {VARIANTS}")
    n = graph.n
    if variant in MAX_FAMILY:
        if variant == "one":
            local = [one_update(i, initial[i, i]) for i in range(n)]
        elif received is None:
            raise ValueError(f"{variant} needs the exchanged initial scores")
        elif variant == "dmvf":
            local = [weighted_update(i, received[i], received_degrees[i],
                                     graph.closed_neighborhood(i)) for i in range(n)]
        else:
            local = [ave_update(i, received[i], graph.degree(i), graph.closed_neighborhood(i))
                     for i in range(n)]
        return maximal_consensus(sparse_local_vectors(local), graph, network, variant=variant)
    if variant == "dgd":
        return dgd_solve(initial, graph, gamma0, stop=stop, network=network)
    return extra_solve(initial, graph, extra_alpha, stop=stop, network=network)
