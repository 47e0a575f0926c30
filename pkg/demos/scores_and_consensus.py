# coding: utf-8

# # Importance scores and consensus on a small ring
#
# Six agents each keep a few frames from their own view. We score how well
# every buffer covers its neighbors' buffers, then let the agents agree on
# one score vector with each consensus variant.

import numpy as np

from mvff import CommGraph, SelectionBuffer, diameter, initial_scores, oracle_solve, run_consensus

rng = np.random.default_rng(3)
graph = CommGraph.ring(6)
print("edges:", graph.edge_list(), "diameter:", diameter(graph))


# Neighbors 0 and 1 see a shared event (frames near the same point in feature
# space). The others hold unrelated background frames.

event = rng.standard_normal(16) * 4
buffers = {}
for i in range(6):
    k = 4
    frames = rng.standard_normal((k, 16)) * 4
    if i in (0, 1):
        frames[:2] = event + rng.standard_normal((2, 16)) * 0.5
    buffers[i] = SelectionBuffer(i, 0, np.arange(k) * 10, frames.astype(np.float32), k)


# Each agent scores itself and its two neighbors. Rows are the scoring
# agent, columns the scored one; non-neighbors stay at zero.

x0 = np.zeros((6, 6))
for i in range(6):
    x0[i] = initial_scores(i, buffers, graph).as_vector(6)
np.set_printoptions(precision=3, suppress=True)
print(x0)


# The max-consensus variants first combine what an agent hears about itself
# and then flood maxima for diameter(G) rounds. DGD and EXTRA iterate on the
# separable least-squares objective instead.

received = [{j: x0[j, i] for j in graph.closed_neighborhood(i)} for i in range(6)]
degrees = [{j: graph.degree(j) for j in graph.closed_neighborhood(i)} for i in range(6)]
for variant in ("dmvf", "ave", "one", "dgd", "extra"):
    rep = run_consensus(variant, x0, graph, received, degrees)
    print(f"{variant:6s} rounds={rep.message_rounds:5d}  scores={rep.final}")

print("oracle       ", oracle_solve(x0, graph))


# Ranking the agreed scores decides who slows down: the top agent gets the
# slow pace, the bottom three run fast under a 3/2/1 requirement.

from mvff import SystemRequirement, select_strategies

rep = run_consensus("dmvf", x0, graph, received, degrees)
print([s.value for s in select_strategies(rep.final, SystemRequirement.parse("3/2/1"))])
