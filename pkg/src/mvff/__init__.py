"""Consensus-based distributed fast-forwarding of multi-view video streams."""
from .agent import (ConstantSkipPolicy, QPolicy, RandomSkipPolicy, RewardParams,
                    SelectionBuffer, StrategyKind, StrategySpec, TrainConfig,
                    fast_forward_period, hit_reward, reward, skip_penalty, train_q,
                    train_strategy_policies)
from .config import ConfigError, ExperimentConfig, GraphConfig, SceneConfig
from .consensus import (ConsensusReport, StopRule, build_consensus_matrix, dgd_solve,
                        extra_solve, maximal_consensus, oracle_solve, run_consensus)
from .netsim import CommGraph, CommLedger, Network, diameter, erdos_renyi
from .orchestrator import (RunSummary, SystemRequirement, coverage, processing_rate,
                           run_baseline, run_experiment, run_independent, select_strategies)
from .scoring import agent_similarity, frame_similarity, initial_scores
from .stream import Scene, VideoStream, generate_scene, load_scene, save_scene

__version__ = "0.1.0"
