"""Synchronous message passing between camera agents.

The network is the only channel between agents. Messages are queued in
per-agent outboxes and delivered at a barrier, one round at a time; every
delivered message is charged to a :class:`CommLedger` using a fixed byte
accounting rule so that runs can be compared on communication load.
"""
from __future__ import annotations

import csv
import io
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

# byte accounting rule
FEATURE_SCALAR_BYTES = 4
INDEX_BYTES = 8
SCORE_BYTES = 8
INT_BYTES = 8
HEADER_BYTES = 16


class GraphError(ValueError):
    """Raised for malformed or disconnected communication graphs."""


class ProtocolError(RuntimeError):
    """Raised when an agent tries to send along a non-edge."""


class CommGraph:
    """Undirected communication topology over agents ``0 .. n-1``.

    Parameters
    ----------
    n : int
        Number of agents.
    edges : iterable of (int, int)
        Unordered pairs. Duplicates are merged; self-loops are rejected.
    require_connected : bool
        Check connectivity at construction.
    """

    def __init__(self, n: int, edges: Iterable[tuple[int, int]] = (),
                 require_connected: bool = False):
        if n < 1:
            raise GraphError(f"graph needs at least one node, got n={n}")
        self.n = int(n)
        es = set()
        for i, j in edges:
            i, j = int(i), int(j)
            if i == j:
                raise GraphError(f"self-loop on node {i}")
            if not (0 <= i < n and 0 <= j < n):
                raise GraphError(f"edge ({i}, {j}) outside 0..{n - 1}")
            es.add((min(i, j), max(i, j)))
        self.edges = frozenset(es)
        nbrs: list[list[int]] = [[] for _ in range(n)]
        for i, j in self.edges:
            nbrs[i].append(j)
            nbrs[j].append(i)
        self._neighbors = tuple(tuple(sorted(x)) for x in nbrs)
        if require_connected and not self.is_connected():
            raise GraphError(f"communication graph on {n} nodes is not connected")

    @classmethod
    def complete(cls, n: int) -> "CommGraph":
        return cls(n, [(i, j) for i in range(n) for j in range(i + 1, n)])

    @classmethod
    def path(cls, n: int) -> "CommGraph":
        return cls(n, [(i, i + 1) for i in range(n - 1)])

    @classmethod
    def ring(cls, n: int) -> "CommGraph":
        if n < 3:
            return cls.path(n)
        return cls(n, [(i, (i + 1) % n) for i in range(n)])

    @classmethod
    def star(cls, n: int, center: int = 0) -> "CommGraph":
        return cls(n, [(center, j) for j in range(n) if j != center])

    def neighbors(self, i: int) -> tuple[int, ...]:
        return self._neighbors[i]

    def closed_neighborhood(self, i: int) -> tuple[int, ...]:
        """``V_i``: the neighbors of ``i`` and ``i`` itself, sorted."""
        return tuple(sorted(self._neighbors[i] + (i,)))

    def degree(self, i: int) -> int:
        return len(self._neighbors[i])

    def degrees(self) -> np.ndarray:
        return np.array([len(x) for x in self._neighbors], dtype=int)

    def has_edge(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self.edges

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        for i, j in self.edges:
            a[i, j] = a[j, i] = 1.0
        return a

    def hops_from(self, src: int) -> list[int]:
        """Breadth-first hop distances from ``src`` (-1 if unreachable)."""
        dist = [-1] * self.n
        dist[src] = 0
        queue = deque([src])
        while queue:
            u = queue.popleft()
            for v in self._neighbors[u]:
                if dist[v] < 0:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        return dist

    def is_connected(self) -> bool:
        return min(self.hops_from(0)) >= 0

    def edge_list(self) -> list[tuple[int, int]]:
        return sorted(self.edges)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, CommGraph) and (self.n, self.edges) == (other.n, other.edges)

    def __hash__(self) -> int:
        return hash((self.n, self.edges))

    def __repr__(self) -> str:
        return f"CommGraph(n={self.n}, edges={self.edge_list()})"


def diameter(graph: CommGraph) -> int:
    """Largest shortest-path hop count over all node pairs."""
    best = 0
    for s in range(graph.n):
        d = graph.hops_from(s)
        if min(d) < 0:
            raise GraphError("diameter is undefined for a disconnected graph")
        best = max(best, max(d))
    return best


def erdos_renyi(n: int, p: float, seed: int, max_tries: int = 1000) -> CommGraph:
    """Connected G(n, p) sample.

    Each of the ``n(n-1)/2`` edges is drawn independently with probability
    ``p``; disconnected draws are discarded and redrawn from the next
    substream of ``seed``.
    """
    if n < 2:
        raise GraphError(f"erdos_renyi needs n >= 2, got {n}")
    if not 0.0 < p <= 1.0:
        raise GraphError(f"edge probability must lie in (0, 1], got {p}")
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    streams = np.random.SeedSequence(seed).spawn(max_tries)
    for ss in streams:
        keep = np.random.default_rng(ss).random(len(pairs)) < p
        g = CommGraph(n, [e for e, k in zip(pairs, keep) if k])
        if g.is_connected():
            return g
    raise GraphError(
        f"no connected graph after {max_tries} draws with n={n}, p={p}; "
        "use a larger edge probability")


# ---------------------------------------------------------------- messages

@dataclass(frozen=True)
class SelectedFrames:
    """A selection buffer shipped to a neighbor."""
    buffer: object  # agent.SelectionBuffer; kept loose to avoid an import cycle

    @property
    def size_bytes(self) -> int:
        k = len(self.buffer.indices)
        d = self.buffer.features.shape[1] if k else 0
        return k * (FEATURE_SCALAR_BYTES * d + INDEX_BYTES) + HEADER_BYTES

    @property
    def n_frames(self) -> int:
        return len(self.buffer.indices)


@dataclass(frozen=True)
class InitialScore:
    """One initial importance estimate plus the sender's degree."""
    value: float
    degree: int

    @property
    def size_bytes(self) -> int:
        return SCORE_BYTES + INT_BYTES + HEADER_BYTES

    n_frames = 0


@dataclass(frozen=True)
class ScoreVec:
    """A full length-N score vector (one consensus message)."""
    values: np.ndarray

    @property
    def size_bytes(self) -> int:
        return SCORE_BYTES * len(self.values) + HEADER_BYTES

    n_frames = 0


Payload = Union[SelectedFrames, InitialScore, ScoreVec]


@dataclass(frozen=True)
class Message:
    src: int
    dst: int
    payload: Payload

    @property
    def size_bytes(self) -> int:
        return self.payload.size_bytes


# ------------------------------------------------------------------ ledger

@dataclass
class LedgerEntry:
    period: int
    phase: str
    kind: str
    messages: int = 0
    frames: int = 0
    bytes: int = 0


@dataclass
class PeriodTotals:
    period: int
    frames_sent: int = 0
    score_messages: int = 0
    bytes_total: int = 0


@dataclass
class CommLedger:
    """Byte and message counts keyed by (period, phase, payload kind)."""
    entries: dict = field(default_factory=dict)

    def record(self, period: int, phase: str, msg: Message) -> None:
        kind = type(msg.payload).__name__
        key = (period, phase, kind)
        e = self.entries.get(key)
        if e is None:
            e = self.entries[key] = LedgerEntry(period, phase, kind)
        e.messages += 1
        e.frames += msg.payload.n_frames
        e.bytes += msg.size_bytes

    def record_bulk(self, period: int, phase: str, kind: str, *, messages: int,
                    nbytes: int, frames: int = 0) -> None:
        key = (period, phase, kind)
        e = self.entries.get(key)
        if e is None:
            e = self.entries[key] = LedgerEntry(period, phase, kind)
        e.messages += messages
        e.frames += frames
        e.bytes += nbytes

    def periods(self) -> list[int]:
        return sorted({k[0] for k in self.entries})

    def period_totals(self) -> list[PeriodTotals]:
        out = {p: PeriodTotals(p) for p in self.periods()}
        for (p, _phase, kind), e in self.entries.items():
            t = out[p]
            t.frames_sent += e.frames
            if kind != "SelectedFrames":
                t.score_messages += e.messages
            t.bytes_total += e.bytes
        return [out[p] for p in sorted(out)]

    def total(self, *, phase: str | None = None, kind: str | None = None,
              what: str = "bytes") -> int:
        return sum(getattr(e, what) for (p, ph, k), e in self.entries.items()
                   if (phase is None or ph == phase) and (kind is None or k == kind))

    @property
    def frames_sent(self) -> int:
        return self.total(what="frames")

    @property
    def score_messages(self) -> int:
        return sum(e.messages for (_, _, k), e in self.entries.items() if k != "SelectedFrames")

    @property
    def bytes_total(self) -> int:
        return self.total()

    def merge(self, other: "CommLedger") -> None:
        for key, e in other.entries.items():
            mine = self.entries.get(key)
            if mine is None:
                mine = self.entries[key] = LedgerEntry(*key)
            mine.messages += e.messages
            mine.frames += e.frames
            mine.bytes += e.bytes


class Network:
    """Barrier-synchronized delivery over a :class:`CommGraph`.

    ``period`` and ``phase`` label the traffic recorded in ``ledger``.
    """

    def __init__(self, graph: CommGraph, ledger: CommLedger | None = None):
        self.graph = graph
        self.ledger = ledger if ledger is not None else CommLedger()
        self.period = 0
        self.phase = "frames"
        self.rounds = 0

    def exchange_round(self, outboxes: Sequence[Sequence[Message]]) -> list[list[Message]]:
        """Deliver one synchronous round.

        Every message is validated before any is delivered, so a protocol
        violation leaves the ledger untouched. Inboxes are sorted by sender.
        """
        if len(outboxes) != self.graph.n:
            raise ProtocolError(f"expected {self.graph.n} outboxes, got {len(outboxes)}")
        for i, box in enumerate(outboxes):
            for m in box:
                if m.src != i:
                    raise ProtocolError(f"agent {i} queued a message claiming src={m.src}")
                if not self.graph.has_edge(m.src, m.dst):
                    raise ProtocolError(f"message {m.src}->{m.dst} is not along an edge")
        inboxes: list[list[Message]] = [[] for _ in range(self.graph.n)]
        for box in outboxes:
            for m in box:
                inboxes[m.dst].append(m)
                self.ledger.record(self.period, self.phase, m)
        for box in inboxes:
            box.sort(key=lambda m: m.src)
        self.rounds += 1
        return inboxes

    def broadcast(self, payloads: Sequence[Payload | None]) -> list[list[Message]]:
        """Each agent ``i`` sends ``payloads[i]`` to all of its neighbors."""
        outboxes = [[Message(i, j, pl) for j in self.graph.neighbors(i)] if pl is not None else []
                    for i, pl in enumerate(payloads)]
        return self.exchange_round(outboxes)


# ------------------------------------------------------------ measurement

def raw_input_bytes(n_views: int, length: int, dim: int) -> int:
    """Bytes of the raw feature and label streams for a scene."""
    return length * n_views * FEATURE_SCALAR_BYTES * dim + length * n_views


@dataclass
class CommReport:
    frames_sent: int
    score_messages: int
    bytes_total: int
    raw_bytes: int
    per_period: list[PeriodTotals]

    @property
    def bytes_fraction_of_raw(self) -> float:
        return self.bytes_total / self.raw_bytes if self.raw_bytes else 0.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["period", "frames_sent", "score_messages", "bytes_total",
                    "bytes_fraction_of_raw"])
        for t in self.per_period:
            w.writerow([t.period, t.frames_sent, t.score_messages, t.bytes_total,
                        f"{t.bytes_total / self.raw_bytes:.8f}" if self.raw_bytes else "0"])
        return buf.getvalue()


def measure_communication(ledger: CommLedger, n_views: int, length: int, dim: int) -> CommReport:
    """Aggregate a run's ledger and express it relative to the raw input."""
    return CommReport(
        frames_sent=ledger.frames_sent,
        score_messages=ledger.score_messages,
        bytes_total=ledger.bytes_total,
        raw_bytes=raw_input_bytes(n_views, length, dim),
        per_period=ledger.period_totals(),
    )
