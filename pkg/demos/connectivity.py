# coding: utf-8

# # Communication cost against graph density
#
# Sweep the Erdos-Renyi edge probability with fixed constant-stride
# policies so the only thing changing is the graph.

import numpy as np

from mvff import ConstantSkipPolicy, StrategyKind, erdos_renyi, run_experiment
from mvff.config import SceneConfig

scene = SceneConfig(length=1500).build(0)
policies = {StrategyKind.FAST: ConstantSkipPolicy(20), StrategyKind.NORMAL: ConstantSkipPolicy(12),
            StrategyKind.SLOW: ConstantSkipPolicy(6)}

rows = []
for p in np.linspace(0.2, 1.0, 5):
    for seed in range(3):
        g = erdos_renyi(scene.n_views, p, seed=seed)
        r = run_experiment(scene, g, policies, "3/2/1")
        rows.append((g.n_edges, r.comm.bytes_total, r.ledger.total(phase="frames", what="bytes"),
                     r.ledger.total(phase="consensus", what="bytes"), r.coverage))


# Frame exchange grows with every edge. Consensus traffic also depends on
# the diameter, which shrinks as the graph fills in.

rows.sort()
print("edges   total   frames  consensus  coverage")
for e, total, frames, cons, cov in rows:
    print(f"{e:5d} {total:8d} {frames:8d} {cons:9d}  {cov:.4f}")
