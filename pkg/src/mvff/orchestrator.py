"""The adaptation-period loop and its evaluation metrics.

Every period each agent fast-forwards its own view with its current pace,
ships the kept frames to its neighbors, scores itself and its neighbors,
agrees on a score vector with everybody else and finally picks its pace for
the next period from the score ranking and the system requirement.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import consensus as cons
from .agent import (ConstantSkipPolicy, RandomSkipPolicy, SelectionBuffer, SkipPolicy,
                    StrategyKind, StrategySpec, fast_forward_period)
from .netsim import (CommGraph, CommLedger, CommReport, InitialScore, Message, Network,
                     SelectedFrames, measure_communication)
from .scoring import DEFAULT_ALPHA, InitialScoreSet, initial_scores
from .stream import Scene

class PeriodError(RuntimeError):
    """A component failed inside an adaptation period; the cause is chained."""


PACE_ORDER = {StrategyKind.FAST: 0, StrategyKind.NORMAL: 1, StrategyKind.SLOW: 2}


@dataclass(frozen=True)
class SystemRequirement:
    """Number of agents that must run fast, normal and slow paces."""
    fast: int
    normal: int
    slow: int

    def __post_init__(self):
        if min(self.fast, self.normal, self.slow) < 0:
            raise ValueError(f"requirement counts must be >= 0: {self}")

    @property
    def n(self) -> int:
        return self.fast + self.normal + self.slow

    @classmethod
    def parse(cls, text: "str | SystemRequirement | Sequence[int]") -> "SystemRequirement":
        if isinstance(text, SystemRequirement):
            return text
        if isinstance(text, str):
            parts = text.replace(",", "/").split("/")
        else:
            parts = list(text)
        if len(parts) != 3:
            raise ValueError(f"requirement must be X/Y/Z, got {text!r}")
        return cls(*(int(p) for p in parts))

    def check(self, n: int) -> None:
        if self.n != n:
            raise ValueError(f"requirement {self} sums to {self.n}, but there are {n} agents")

    def counts(self) -> dict[StrategyKind, int]:
        return {StrategyKind.FAST: self.fast, StrategyKind.NORMAL: self.normal,
                StrategyKind.SLOW: self.slow}

    def __str__(self) -> str:
        return f"{self.fast}/{self.normal}/{self.slow}"


def select_strategies(scores: np.ndarray, req: SystemRequirement) -> list[StrategyKind]:
    """Rank agents by score (ties: lower id first); the top ``slow`` go slow,
    the next ``normal`` go normal and the rest go fast."""
    scores = np.asarray(scores, dtype=np.float64)
    req.check(len(scores))
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    out = [StrategyKind.FAST] * len(scores)
    for rank, i in enumerate(order):
        if rank < req.slow:
            out[i] = StrategyKind.SLOW
        elif rank < req.slow + req.normal:
            out[i] = StrategyKind.NORMAL
    return out


def initial_assignment(n: int, req: SystemRequirement) -> list[StrategyKind]:
    """Round-robin fast, normal, slow by agent id, skipping full quotas."""
    req.check(n)
    left = req.counts()
    cycle = [StrategyKind.FAST, StrategyKind.NORMAL, StrategyKind.SLOW]
    out = []
    k = 0
    for _ in range(n):
        while left[cycle[k % 3]] == 0:
            k += 1
        out.append(cycle[k % 3])
        left[cycle[k % 3]] -= 1
        k += 1
    return out


# ----------------------------------------------------------------- metrics

def coverage(selections: Sequence[np.ndarray], truth: np.ndarray, window: int = 4) -> float:
    """Fraction of important frames within ``window`` of any selected frame.

    Returns 1.0 when nothing is important.
    """
    truth = np.asarray(truth, dtype=bool)
    if window < 0:
        raise ValueError("window must be >= 0")
    n_imp = int(truth.sum())
    if n_imp == 0:
        return 1.0
    length = truth.size
    # difference array marks every extended interval
    delta = np.zeros(length + 1, dtype=np.int64)
    for sel in selections:
        sel = np.asarray(sel, dtype=np.int64)
        if sel.size == 0:
            continue
        np.add.at(delta, np.clip(sel - window, 0, length), 1)
        np.add.at(delta, np.clip(sel + window + 1, 0, length), -1)
    covered = np.cumsum(delta[:-1]) > 0
    return float((covered & truth).sum() / n_imp)


def processing_rate(records: Sequence["PeriodRecord"], n_agents: int, length: int) -> float:
    """Frames read by all agents over all periods, divided by ``N * L``."""
    total = sum(sum(r.processed) for r in records)
    return total / (n_agents * length)


# -------------------------------------------------------------- records

@dataclass
class PeriodRecord:
    period: int
    strategies: list
    buffers: list
    processed: list
    scores: np.ndarray | None
    next_strategies: list
    report: cons.ConsensusReport | None = None
    initial: np.ndarray | None = None


@dataclass
class RunSummary:
    coverage: float
    processing_rate: float
    records: list
    ledger: CommLedger
    comm: CommReport
    label: str = "dmvf"
    window: int = 4
    truth: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_agents(self) -> int:
        return len(self.records[0].strategies) if self.records else 0

    def selections(self, upto: int | None = None) -> list[np.ndarray]:
        recs = self.records if upto is None else self.records[:upto + 1]
        n = self.n_agents
        return [np.concatenate([r.buffers[i].indices for r in recs]) if recs else np.zeros(0, int)
                for i in range(n)]

    @property
    def consensus_iterations(self) -> float:
        its = [r.report.iterations for r in self.records if r.report is not None]
        return float(np.mean(its)) if its else 0.0

    def to_csv(self, period_len: int) -> str:
        n = self.n_agents
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["period", *[f"s{i}" for i in range(n)], *[f"p{i}" for i in range(n)],
                    "coverage_so_far"])
        for r in self.records:
            end = min((r.period + 1) * period_len, self.truth.size)
            sel = [np.asarray(s)[np.asarray(s) < end] for s in self.selections(r.period)]
            cov = coverage(sel, self.truth[:end], self.window)
            w.writerow([r.period, *[s.letter for s in r.strategies], *r.processed, f"{cov:.6f}"])
        w.writerow(["final", f"coverage={self.coverage:.6f}",
                    f"processing_rate={self.processing_rate:.6f}",
                    f"bytes={self.comm.bytes_total}"])
        return buf.getvalue()


# ------------------------------------------------------------ the loop

@dataclass
class RunState:
    """Mutable per-run state: current paces and where each agent resumes."""
    scene: Scene
    graph: CommGraph
    policies: Mapping[StrategyKind, SkipPolicy]
    specs: Mapping[StrategyKind, StrategySpec]
    requirement: SystemRequirement
    variant: str = "dmvf"
    period_len: int = 100
    alpha: float = DEFAULT_ALPHA
    strategies: list = field(default_factory=list)
    offsets: list = field(default_factory=list)
    network: Network | None = None
    gamma0: float = 0.5
    extra_alpha: float = 0.1
    stop: cons.StopRule = cons.StopRule()

    def __post_init__(self):
        n = self.scene.n_views
        if self.graph.n != n:
            raise ValueError(f"graph has {self.graph.n} nodes, scene has {n} views")
        if self.period_len < 1:
            raise ValueError("period length must be >= 1")
        if self.variant not in cons.VARIANTS:
            raise ValueError(f"unknown consensus variant {self.variant!r}")
        self.requirement.check(n)
        if not self.strategies:
            self.strategies = initial_assignment(n, self.requirement)
        if not self.offsets:
            self.offsets = [0] * n
        if self.network is None:
            self.network = Network(self.graph)

    @property
    def n_periods(self) -> int:
        return -(-self.scene.length // self.period_len)


def _exchange_buffers(net: Network, graph: CommGraph,
                      buffers: Sequence[SelectionBuffer]) -> list[dict[int, SelectionBuffer]]:
    net.phase = "frames"
    inboxes = net.broadcast([SelectedFrames(b) for b in buffers])
    known = []
    for i, box in enumerate(inboxes):
        d = {i: buffers[i]}
        d.update({m.src: m.payload.buffer for m in box})
        known.append(d)
    return known


def _exchange_initial_scores(net: Network, graph: CommGraph,
                             sets: Sequence[InitialScoreSet]):
    """Agent ``i`` sends ``x0_ij`` (and its degree) to each neighbor ``j``."""
    net.phase = "scores"
    outboxes = [[Message(i, j, InitialScore(s.get(j), s.degree)) for j in graph.neighbors(i)]
                for i, s in enumerate(sets)]
    inboxes = net.exchange_round(outboxes)
    received, degrees = [], []
    for i, box in enumerate(inboxes):
        r = {i: sets[i].get(i)}
        d = {i: sets[i].degree}
        for m in box:
            r[m.src] = m.payload.value
            d[m.src] = m.payload.degree
        received.append(r)
        degrees.append(d)
    return received, degrees


def run_period(state: RunState, t: int) -> PeriodRecord:
    """Execute adaptation period ``t`` and advance ``state`` to ``t + 1``."""
    scene, graph, net = state.scene, state.graph, state.network
    n = scene.n_views
    start = t * state.period_len
    stop = min(start + state.period_len, scene.length)
    net.period = t
    try:
        buffers, processed = [], []
        for i in range(n):
            kind = state.strategies[i]
            seg = scene.streams[i].segment(start, stop)
            buf, carry = fast_forward_period(state.policies[kind], state.specs[kind], seg,
                                             state.offsets[i], period=t, base_index=start)
            buffers.append(buf)
            processed.append(buf.processed_count)
            state.offsets[i] = carry

        if n == 1:
            scores = np.array([initial_scores(0, {0: buffers[0]}, graph, state.alpha).get(0)])
            nxt = select_strategies(scores, state.requirement)
            rec = PeriodRecord(t, list(state.strategies), buffers, processed, scores, nxt)
            state.strategies = nxt
            return rec

        known = _exchange_buffers(net, graph, buffers)
        sets = [initial_scores(i, known[i], graph, state.alpha) for i in range(n)]
        x0 = np.array([s.as_vector(n) for s in sets])
        received = degrees = None
        if state.variant in ("dmvf", "ave"):
            received, degrees = _exchange_initial_scores(net, graph, sets)
        net.phase = "consensus"
        report = cons.run_consensus(state.variant, x0, graph, received, degrees, net,
                                    gamma0=state.gamma0, extra_alpha=state.extra_alpha,
                                    stop=state.stop)
        nxt = select_strategies(report.final, state.requirement)
    except (ValueError, KeyError, RuntimeError, ArithmeticError) as exc:
        raise PeriodError(f"period {t}: {exc}") from exc
    rec = PeriodRecord(t, list(state.strategies), buffers, processed, report.final, nxt,
                       report, x0)
    state.strategies = nxt
    return rec


def _summarize(scene: Scene, records: list, ledger: CommLedger, window: int,
               label: str) -> RunSummary:
    n = scene.n_views
    sels = [np.concatenate([r.buffers[i].indices for r in records]) for i in range(n)]
    return RunSummary(
        coverage=coverage(sels, scene.global_truth, window),
        processing_rate=processing_rate(records, n, scene.length),
        records=records, ledger=ledger,
        comm=measure_communication(ledger, n, scene.length, scene.dim),
        label=label, window=window, truth=np.asarray(scene.global_truth))


def run_experiment(scene: Scene, graph: CommGraph, policies: Mapping[StrategyKind, SkipPolicy],
                   requirement: "SystemRequirement | str", *, variant: str = "dmvf",
                   period_len: int = 100, alpha: float = DEFAULT_ALPHA, window: int = 4,
                   specs: Mapping[StrategyKind, StrategySpec] | None = None,
                   gamma0: float = 0.5, extra_alpha: float = 0.1,
                   stop: cons.StopRule = cons.StopRule()) -> RunSummary:
    """Run the full collaborative loop over ``scene``."""
    specs = specs or {k: StrategySpec.default(k) for k in StrategyKind}
    state = RunState(scene, graph, policies, specs, SystemRequirement.parse(requirement),
                     variant, period_len, alpha, gamma0=gamma0, extra_alpha=extra_alpha,
                     stop=stop)
    records = [run_period(state, t) for t in range(state.n_periods)]
    return _summarize(scene, records, state.network.ledger, window, variant)


def run_independent(scene: Scene, policy_for_view, *, period_len: int = 100,
                    window: int = 4, kind: StrategyKind = StrategyKind.NORMAL,
                    spec: StrategySpec | None = None, label: str = "independent") -> RunSummary:
    """Agents fast-forward on their own with a fixed pace; nothing is sent.

    ``policy_for_view(i)`` returns the skip policy of view ``i``.
    """
    spec = spec or StrategySpec.default(kind)
    n = scene.n_views
    policies = [policy_for_view(i) for i in range(n)]
    offsets = [0] * n
    records = []
    n_periods = -(-scene.length // period_len)
    for t in range(n_periods):
        start = t * period_len
        stop = min(start + period_len, scene.length)
        bufs, processed = [], []
        for i in range(n):
            buf, offsets[i] = fast_forward_period(policies[i], spec,
                                                  scene.streams[i].segment(start, stop),
                                                  offsets[i], period=t, base_index=start)
            bufs.append(buf)
            processed.append(buf.processed_count)
        records.append(PeriodRecord(t, [kind] * n, bufs, processed, None, [kind] * n))
    return _summarize(scene, records, CommLedger(), window, label)


def run_baseline(scene: Scene, method: str, *, policy: SkipPolicy | None = None,
                 period_len: int = 100, window: int = 4, seed: int = 0,
                 skip: int | None = None) -> RunSummary:
    """No-communication reference runs.

    ``independent`` gives every view the same trained normal-pace policy;
    ``random`` jumps ``1..A_normal`` frames uniformly at random;
    ``uniform`` jumps a constant ``skip`` (default ``A_normal``).
    """
    spec = StrategySpec.default(StrategyKind.NORMAL)
    if method == "independent":
        if policy is None:
            raise ValueError("the independent baseline needs a trained normal policy")
        return run_independent(scene, lambda i: policy, period_len=period_len, window=window,
                               spec=spec, label=method)
    if method == "random":
        seeds = np.random.SeedSequence(seed).spawn(scene.n_views)
        return run_independent(scene, lambda i: RandomSkipPolicy(spec.action_space, seeds[i]),
                               period_len=period_len, window=window, spec=spec, label=method)
    if method == "uniform":
        step = skip or spec.action_space
        return run_independent(scene, lambda i: ConstantSkipPolicy(step),
                               period_len=period_len, window=window, spec=spec, label=method)
    raise ValueError(f"unknown baseline {method!r}")


def default_graph(n: int) -> CommGraph:
    """Ring plus opposite chords (for even ``n``); a stand-in for a
    view-overlap graph."""
    if n == 1:
        return CommGraph(1)
    edges = {(i, (i + 1) % n) for i in range(n)} if n > 2 else {(0, 1)}
    if n >= 6 and n % 2 == 0:
        edges |= {(i, i + n // 2) for i in range(n // 2)}
    return CommGraph(n, edges, require_connected=True)
