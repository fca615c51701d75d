"""Budget-constrained testing allocation across outbreak clusters."""

__version__ = "0.1.0"

from .allocator import CandidateAction, q_rank_allocate
from .belief import BeliefRecord, posterior, quarantine_decision, \
    quarantine_threshold
from .config import CostParams, EpiParams, SystemConfig, desk_epi, \
    load_config, save_config
from .controllers import BinSearchM, FixedM, PpoConfig, PpoController, \
    bin_search_multiplier, ppo_train
from .engine import HeuristicPolicy, QRankingPolicy, SystemRuntime
from .harness import ExperimentSpec, ResultRow, bench_latency, \
    run_experiment, sweep_monotonicity
from .objective import RewardBreakdown, active_cost, cluster_reward, \
    lagrangian_value
from .value import AnalyticQ, LearnedQ, TrainConfig, delta_q, td_train

__all__ = [
    "AnalyticQ",
    "BeliefRecord",
    "BinSearchM",
    "CandidateAction",
    "CostParams",
    "EpiParams",
    "ExperimentSpec",
    "FixedM",
    "HeuristicPolicy",
    "LearnedQ",
    "PpoConfig",
    "PpoController",
    "QRankingPolicy",
    "ResultRow",
    "RewardBreakdown",
    "SystemConfig",
    "SystemRuntime",
    "TrainConfig",
    "active_cost",
    "bench_latency",
    "bin_search_multiplier",
    "cluster_reward",
    "delta_q",
    "desk_epi",
    "lagrangian_value",
    "load_config",
    "posterior",
    "ppo_train",
    "q_rank_allocate",
    "quarantine_decision",
    "quarantine_threshold",
    "run_experiment",
    "save_config",
    "sweep_monotonicity",
    "td_train",
    "__version__",
]
