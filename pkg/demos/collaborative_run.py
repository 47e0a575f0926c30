# coding: utf-8

# # One collaborative run against the independent baseline
#
# Train the three pace policies briefly, run the agents on a synthetic
# six-view scene, and compare with every view fast-forwarding on its own.

import numpy as np

from mvff import ExperimentConfig, StrategyKind, run_baseline, run_experiment
from mvff import experiments as ex
from mvff.config import TrainingConfig

cfg = ExperimentConfig(training=TrainingConfig(n_scenes=4, episodes=600))
train, held = ex.corpus(cfg)
policies, _ = ex.train_policies(cfg, train)
for kind, pol in policies.items():
    tail = np.mean(pol.episode_rewards[-100:])
    print(f"{kind.value:6s} mean reward over the last 100 episodes: {tail:.3f}")


# The evaluation scene is drawn from a different seed than the training
# corpus.

scene = cfg.scene.build(100)
graph = cfg.graph.build(scene.n_views)
print(f"{scene.n_views} views, {scene.length} frames, "
      f"{int(scene.global_truth.sum())} globally important")

run = run_experiment(scene, graph, policies, "3/2/1")
base = run_baseline(scene, "independent", policy=policies[StrategyKind.NORMAL])


# Who ran slow in the first few periods, and which agents read the most
# frames.

for rec in run.records[:5]:
    print(rec.period, "".join(s.value[0].upper() for s in rec.strategies), rec.processed)

print(f"dmvf        coverage={run.coverage:.4f} rate={run.processing_rate:.4f} "
      f"bytes={run.comm.bytes_total}")
print(f"independent coverage={base.coverage:.4f} rate={base.processing_rate:.4f}")


# Tighter requirements push more agents to the fast pace.

for req in ("2/2/2", "3/2/1", "5/0/1"):
    r = run_experiment(scene, graph, policies, req)
    print(req, round(r.coverage, 4), round(r.processing_rate, 4))
