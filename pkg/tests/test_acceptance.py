"""End-to-end acceptance criteria. Each test prints one PASS/FAIL line."""
import json
import subprocess
import sys
import time
from collections import defaultdict
from pathlib import Path

import networkx as nx
import numpy as np
import pytest

from mvff.agent import StrategyKind
from mvff.cli import main
from mvff.consensus import (StopRule, dgd_solve, extra_solve, local_gradients, maximal_consensus,
                            oracle_solve, run_consensus, sparse_local_vectors)
from mvff.netsim import CommGraph, diameter, erdos_renyi
from mvff.orchestrator import default_graph, run_baseline, run_experiment

pytestmark = pytest.mark.acceptance

REQUIREMENTS = ["2/2/2", "2/3/1", "3/2/1", "4/1/1", "5/0/1"]
FAST, NORMAL, SLOW = StrategyKind.FAST, StrategyKind.NORMAL, StrategyKind.SLOW


def connected_graph(rng, n, p=0.4):
    while True:
        g = nx.gnp_random_graph(n, p, seed=int(rng.integers(2**31)))
        if nx.is_connected(g):
            return CommGraph(n, g.edges())


def random_instances(seed, count):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        n = int(rng.integers(3, 11))
        out.append((connected_graph(rng, n), rng.random((n, n))))
    return out


def test_consensus_oracle_equivalence(verdict):
    t0 = time.perf_counter()
    err = {"dgd": [], "extra": []}
    for g, x0 in random_instances(1, 20):
        ref = oracle_solve(x0, g)
        err["dgd"].append(np.abs(dgd_solve(x0, g).final - ref).max())
        err["extra"].append(np.abs(extra_solve(x0, g).final - ref).max())
    grad_rel = 0.0
    rng = np.random.default_rng(2)
    for g, x0 in random_instances(3, 20):
        n = g.n
        x = rng.random((n, n))
        grads = local_gradients(x, x0, g)
        adj = g.adjacency()
        h = 1e-5
        for i in range(n):
            def f_i(v):
                return float(np.sum(adj[i] * (v - x0[i]) ** 2) / g.degree(i))
            for j in range(n):
                e = np.zeros(n)
                e[j] = h
                fd = (f_i(x[i] + e) - f_i(x[i] - e)) / (2 * h)
                grad_rel = max(grad_rel, abs(grads[i, j] - fd) / max(abs(fd), 1e-12)
                               if abs(fd) > 1e-9 else abs(grads[i, j]))
    elapsed = time.perf_counter() - t0
    worst = {k: float(np.max(v)) for k, v in err.items()}
    ok = worst["dgd"] < 1e-4 and worst["extra"] < 1e-4 and grad_rel < 1e-6 and elapsed < 30
    detail = (f"max err dgd={worst['dgd']:.2e} extra={worst['extra']:.2e} (tol 1e-4), "
              f"gradient rel err={grad_rel:.1e}, {elapsed:.1f}s")
    assert verdict(1, ok, detail), detail


def test_max_consensus_exactness(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    exact = 0
    for _ in range(50):
        n = int(rng.integers(2, 11))
        g = connected_graph(rng, n, float(rng.uniform(0.2, 0.9)))
        x = rng.random(n)
        rep = maximal_consensus(sparse_local_vectors(x), g)
        exact += bool(rep.message_rounds == diameter(g)
                      and np.array_equal(rep.agent_vectors, np.tile(x, (n, 1))))
    short_fails = 0
    for n in range(3, 9):
        g = CommGraph.path(n)
        x = rng.random(n)
        rep = maximal_consensus(sparse_local_vectors(x), g, rounds=diameter(g) - 1)
        short_fails += not np.array_equal(rep.agent_vectors, np.tile(x, (n, 1)))
    elapsed = time.perf_counter() - t0
    ok = exact == 50 and short_fails >= 1 and elapsed < 10
    detail = (f"{exact}/50 exact after diameter rounds, {short_fails}/6 path graphs "
              f"disagree with one round fewer, {elapsed:.2f}s")
    assert verdict(2, ok, detail), detail


def test_iteration_ordering(verdict):
    stop = StopRule()
    wins, pairs = 0, []
    for g, x0 in random_instances(5, 20):
        d, e = dgd_solve(x0, g, stop=stop).iterations, extra_solve(x0, g, stop=stop).iterations
        wins += e <= d
        pairs.append((d, e))
    overhead = 0
    for g, x0 in random_instances(6, 20):
        received = [{j: x0[j, i] for j in g.closed_neighborhood(i)} for i in range(g.n)]
        degrees = [{j: g.degree(j) for j in g.closed_neighborhood(i)} for i in range(g.n)]
        for v in ("dmvf", "ave", "one"):
            rounds = run_consensus(v, x0, g, received, degrees).message_rounds
            overhead = max(overhead, rounds - diameter(g))
    ok = wins >= 18 and overhead <= 1
    dgd_mean = np.mean([p[0] for p in pairs])
    extra_mean = np.mean([p[1] for p in pairs])
    detail = (f"extra<=dgd on {wins}/20 (mean iterations {extra_mean:.1f} vs {dgd_mean:.1f}), "
              f"max-consensus rounds exceed diameter by at most {overhead}")
    assert verdict(3, ok, detail), detail


def test_requirement_conservation_and_tradeoff(verdict, bench_config, policy_sets):
    scene = bench_config.scene.build(0)
    graph = default_graph(scene.n_views)
    t0 = time.perf_counter()
    rates, conserved = {}, True
    for req in REQUIREMENTS:
        want = [int(c) for c in req.split("/")]
        vals = []
        for pol in policy_sets:
            r = run_experiment(scene, graph, pol, req)
            for rec in r.records:
                for s in (rec.strategies, rec.next_strategies):
                    conserved &= [s.count(FAST), s.count(NORMAL), s.count(SLOW)] == want
            vals.append(r.processing_rate)
        rates[req] = float(np.mean(vals))
    elapsed = time.perf_counter() - t0
    seq = [rates[r] for r in REQUIREMENTS]
    monotone = all(a > b for a, b in zip(seq, seq[1:]))
    ok = conserved and monotone and elapsed < 120
    detail = ("rates " + ", ".join(f"{r}={rates[r]:.4f}" for r in REQUIREMENTS)
              + f"; conserved={conserved}; {elapsed:.1f}s")
    assert verdict(4, ok, detail), detail


def test_collaboration_benefit(verdict, bench_config, policy_sets):
    graph = default_graph(bench_config.scene.n_views)
    gaps, dm_cov, dm_rate, b_cov, b_rate = [], [], [], [], []
    for k in range(5):
        scene = bench_config.scene.build(100 + k)
        for pol in policy_sets:
            d = run_experiment(scene, graph, pol, "3/2/1")
            b = run_baseline(scene, "independent", policy=pol[NORMAL])
            dm_cov.append(d.coverage)
            dm_rate.append(d.processing_rate)
            b_cov.append(b.coverage)
            b_rate.append(b.processing_rate)
            gaps.append(d.coverage - b.coverage)
    gap = float(np.mean(gaps))
    se = float(np.std(gaps, ddof=1) / np.sqrt(len(gaps)))
    ok = np.mean(dm_cov) >= np.mean(b_cov) and np.mean(dm_rate) <= np.mean(b_rate) and gap > se
    detail = (f"coverage dmvf={np.mean(dm_cov):.4f} baseline={np.mean(b_cov):.4f} "
              f"gap={gap:+.4f} (se {se:.4f}); rate dmvf={np.mean(dm_rate):.4f} "
              f"baseline={np.mean(b_rate):.4f}")
    assert verdict(5, ok, detail), detail


def test_connectivity_robustness(verdict, bench_config, policy_sets):
    scene = bench_config.scene.build(0)
    p_grid = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]
    baseline = [run_baseline(scene, "independent", policy=pol[NORMAL]).coverage
                for pol in policy_sets]
    by_edges = defaultdict(lambda: {"cov": [], "base": [], "bytes": [], "frame_bytes": []})
    frame_payloads = 0
    for p in p_grid:
        for s, pol in enumerate(policy_sets):
            g = erdos_renyi(scene.n_views, p, seed=1000 * s + int(round(100 * p)))
            r = run_experiment(scene, g, pol, "3/2/1")
            cell = by_edges[g.n_edges]
            cell["cov"].append(r.coverage)
            cell["base"].append(baseline[s])
            cell["bytes"].append(r.comm.bytes_total)
            cell["frame_bytes"].append(r.ledger.total(phase="frames", what="bytes"))
            frame_payloads += r.ledger.total(phase="consensus", what="frames")
    edges = sorted(by_edges)
    cov_ok = [np.mean(by_edges[e]["cov"]) >= np.mean(by_edges[e]["base"]) for e in edges]
    mean_bytes = [np.mean(by_edges[e]["bytes"]) for e in edges]
    monotone = all(a <= b for a, b in zip(mean_bytes, mean_bytes[1:]))
    frame_bytes = [np.mean(by_edges[e]["frame_bytes"]) for e in edges]
    frames_monotone = all(a <= b for a, b in zip(frame_bytes, frame_bytes[1:]))
    worst_drop = max([a - b for a, b in zip(mean_bytes, mean_bytes[1:])] + [0.0])
    ok = len(edges) >= 10 and all(cov_ok) and monotone and frame_payloads == 0
    losing = [e for e, good in zip(edges, cov_ok) if not good]
    detail = (f"{len(edges)} edge counts; dmvf below baseline at edges {losing}; "
              f"total bytes monotone={monotone} (largest drop {worst_drop:.0f} B), "
              f"frame-exchange bytes monotone={frames_monotone}; "
              f"consensus frame payloads={frame_payloads}")
    assert verdict(6, ok, detail), detail


def test_formula_suite(verdict):
    root = Path(__file__).resolve().parent
    t0 = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-m", "formula",
                           "-p", "no:cacheprovider", str(root)],
                          capture_output=True, text=True, cwd=root.parent)
    elapsed = time.perf_counter() - t0
    summary = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr
    ok = proc.returncode == 0 and elapsed < 5
    detail = f"{summary.strip('= ')}; wall {elapsed:.2f}s"
    assert verdict(7, ok, detail), detail


def test_determinism(verdict, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "scene": {"length": 500},
        "training": {"n_scenes": 2, "train_fraction": 0.5, "scene_length": 500,
                     "episodes": 40, "n_states": 8},
        "seeds": [0, 1, 2],
    }))

    def cli(*args):
        assert main([*args, "--config", str(cfg)]) == 0

    for k in (1, 2):
        cli("train", "--out", str(tmp_path / f"ckpt{k}"))
    ckpt = str(tmp_path / "ckpt1")
    for k in (1, 2):
        cli("run", "--checkpoints", ckpt, "--out", str(tmp_path / f"run{k}"))
        cli("run", "--checkpoints", ckpt, "--consensus", "extra", "--out", str(tmp_path / f"ex{k}"))
    for jobs in ("1", "2"):
        for axis in ("requirement", "connectivity_p"):
            cli("sweep", "--checkpoints", ckpt, "--axis", axis, "--jobs", jobs,
                "--out", str(tmp_path / f"sw_{axis}_{jobs}"))
    pairs = [("ckpt1", "ckpt2"), ("run1", "run2"), ("ex1", "ex2"),
             ("sw_requirement_1", "sw_requirement_2"),
             ("sw_connectivity_p_1", "sw_connectivity_p_2")]
    compared, differing = 0, []
    for a, b in pairs:
        for f in sorted((tmp_path / a).glob("*.csv")):
            compared += 1
            if f.read_bytes() != (tmp_path / b / f.name).read_bytes():
                differing.append(f"{a}/{f.name}")
    ok = compared > 0 and not differing
    detail = f"{compared} CSV files compared across reruns and --jobs 1/2, differing: {differing}"
    assert verdict(8, ok, detail), detail
