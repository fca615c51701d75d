"""Experiment orchestration: runs, aggregation, persistence, benchmarks.

Outputs per experiment (all plain text, diffable):

  results.csv      one aggregate row (std across seeds, not episodes)
  per_seed.csv     one row per seed
  latency.csv      wall-time sidecar, kept out of the deterministic files
  summary.json     structured echo of the spec plus the aggregate row
  trajectories_seed<k>.csv   per-individual per-day records

Trajectory column order is engine.TRAJECTORY_COLUMNS prefixed by
(seed, episode); floats are serialized with repr() so replays diff
bit-exactly.
"""

from __future__ import annotations

import csv
import json
import os
import statistics
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .baselines import HEURISTIC_KINDS
from .config import ASYNCHRONOUS, CostParams, EpiParams, SystemConfig, desk_epi
from .controllers import BinSearchM, FixedM, PpoConfig, PpoController, \
    GlobalPolicyNet, load_controller
from .engine import TRAJECTORY_COLUMNS, HeuristicPolicy, QRankingPolicy, \
    SystemRuntime
from .objective import cluster_reward
from .errors import CheckpointMismatchError, ParameterError
from .value import AnalyticQ, LearnedQ, QNetwork, SingleClusterEnv, \
    TrainConfig, delta_q, load_checkpoint

OUTPUT_ROOT_ENV = "OUTBREAK_ALLOC_OUT"

QR_POLICIES = ("fixed_m_qr", "bin_m_qr", "hier_ppo_qr")
ALL_POLICIES = HEURISTIC_KINDS + QR_POLICIES


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "results"))


@dataclass(frozen=True)
class ExperimentSpec:
    policy: str = "thres_avg_rand"
    mode: str = ASYNCHRONOUS
    n_clusters: int = 5
    budget: int = 5
    alpha2: float = 0.1
    alpha3_true: float = 0.05
    episodes: int = 20
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    fixed_m: float = 1.0
    value_backend: str = "analytic"
    value_checkpoint: str | None = None
    controller_checkpoint: str | None = None
    stagger_window: int = 20
    cluster_size_max: int = 10
    dump_trajectories: bool = True
    output_dir: str | None = None

    def __post_init__(self) -> None:
        if self.policy not in ALL_POLICIES:
            raise ParameterError(f"unknown policy {self.policy!r}")
        if len(self.seeds) < 1:
            raise ParameterError("at least one seed required")
        if self.budget < 0:
            raise ParameterError("budget must be non-negative")
        if self.value_backend not in ("analytic", "learned"):
            raise ParameterError(f"unknown backend {self.value_backend!r}")


@dataclass(frozen=True)
class ResultRow:
    policy: str
    mode: str
    n_clusters: int
    budget: int
    alpha2: float
    alpha3_true: float
    episodes: int
    n_seeds: int
    mean_return: float
    std_return: float
    mean_s1: float
    mean_s2: float
    mean_s3: float
    mean_tests_per_step: float

    ORDER = ("policy", "mode", "n_clusters", "budget", "alpha2",
             "alpha3_true", "episodes", "n_seeds", "mean_return",
             "std_return", "mean_s1", "mean_s2", "mean_s3",
             "mean_tests_per_step")

    def csv_values(self) -> list[str]:
        out = []
        for name in self.ORDER:
            v = getattr(self, name)
            out.append(repr(v) if isinstance(v, float) else str(v))
        return out


def system_config(spec: ExperimentSpec, seed: int,
                  epi: EpiParams | None = None) -> SystemConfig:
    if epi is None:
        epi = desk_epi(cluster_size_max=spec.cluster_size_max)
    costs = CostParams(alpha2=spec.alpha2, alpha3_true=spec.alpha3_true,
                       budget=spec.budget)
    return SystemConfig(epi=epi, costs=costs, mode=spec.mode,
                        n_clusters=spec.n_clusters,
                        stagger_window=spec.stagger_window, seed=seed)


def build_estimator(spec: ExperimentSpec, epi: EpiParams):
    if spec.value_backend == "analytic":
        return AnalyticQ(epi, spec.alpha2)
    if spec.value_checkpoint is None:
        raise ParameterError("learned backend requires value_checkpoint")
    estimator = load_checkpoint(spec.value_checkpoint)
    trained_alpha2 = estimator.metadata.get("alpha2")
    if trained_alpha2 is not None and trained_alpha2 != spec.alpha2:
        raise CheckpointMismatchError(
            f"checkpoint was trained at alpha2={trained_alpha2}, "
            f"experiment requests alpha2={spec.alpha2}")
    return estimator


def build_policy(spec: ExperimentSpec, costs: CostParams, epi: EpiParams,
                 estimator=None, controller=None):
    if spec.policy in HEURISTIC_KINDS:
        return HeuristicPolicy(spec.policy, costs)
    if estimator is None:
        estimator = build_estimator(spec, epi)
    if spec.policy == "fixed_m_qr":
        controller = controller or FixedM(spec.fixed_m, costs)
    elif spec.policy == "bin_m_qr":
        controller = controller or BinSearchM(costs)
    else:
        if controller is None:
            if spec.controller_checkpoint is None:
                raise ParameterError(
                    "hier_ppo_qr requires controller_checkpoint")
            controller = load_controller(spec.controller_checkpoint)
    return QRankingPolicy(controller, estimator, costs)


@dataclass
class SeedOutcome:
    seed: int
    mean_return: float
    mean_s1: float
    mean_s2: float
    mean_s3: float
    tests_per_step: float
    decision_seconds: list[float] = field(default_factory=list)
    rows: list[tuple] = field(default_factory=list)
    # (seed, episode, cluster, n, s1_norm, s2_norm, s3_norm, reward)
    cluster_rows: list[tuple] = field(default_factory=list)


def run_seed(spec: ExperimentSpec, seed: int, estimator=None,
             controller=None, record_rows: bool | None = None) -> SeedOutcome:
    config = system_config(spec, seed)
    policy = build_policy(spec, config.costs, config.epi, estimator,
                          controller)
    record = spec.dump_trajectories if record_rows is None else record_rows
    returns, s1s, s2s, s3s, tps = [], [], [], [], []
    seconds: list[float] = []
    rows: list[tuple] = []
    cluster_rows: list[tuple] = []
    for episode in range(spec.episodes):
        runtime = SystemRuntime(config, policy, episode, record_rows=record)
        result = runtime.run_episode()
        returns.append(result.mean_return)
        for cid, n, s1, s2, s3 in result.cluster_totals:
            b = cluster_reward(s1, s2, s3, n, config.costs)
            cluster_rows.append((seed, episode, cid, n, b.s1_norm, b.s2_norm,
                                 b.s3_norm, b.reward))
        per_capita = [(s1 / n, s2 / n, s3 / n)
                      for _, n, s1, s2, s3 in result.cluster_totals]
        s1s.append(float(np.mean([x[0] for x in per_capita])))
        s2s.append(float(np.mean([x[1] for x in per_capita])))
        s3s.append(float(np.mean([x[2] for x in per_capita])))
        tps.append(result.tests_per_step)
        seconds.extend(m.decision_seconds for m in result.step_metrics)
        if record:
            rows.extend((seed, episode, *row) for row in result.rows)
    return SeedOutcome(
        seed=seed,
        mean_return=float(np.mean(returns)),
        mean_s1=float(np.mean(s1s)),
        mean_s2=float(np.mean(s2s)),
        mean_s3=float(np.mean(s3s)),
        tests_per_step=float(np.mean(tps)),
        decision_seconds=seconds,
        rows=rows,
        cluster_rows=cluster_rows,
    )


def run_experiment(spec: ExperimentSpec, estimator=None, controller=None,
                   write: bool = True) -> ResultRow:
    """Episodes x seeds under common random numbers; deterministic outputs."""
    outcomes = [
        run_seed(spec, seed, estimator, controller) for seed in spec.seeds
    ]
    per_seed_returns = [o.mean_return for o in outcomes]
    row = ResultRow(
        policy=spec.policy, mode=spec.mode, n_clusters=spec.n_clusters,
        budget=spec.budget, alpha2=spec.alpha2,
        alpha3_true=spec.alpha3_true, episodes=spec.episodes,
        n_seeds=len(spec.seeds),
        mean_return=float(np.mean(per_seed_returns)),
        std_return=float(np.std(per_seed_returns))
        if len(outcomes) > 1 else 0.0,
        mean_s1=float(np.mean([o.mean_s1 for o in outcomes])),
        mean_s2=float(np.mean([o.mean_s2 for o in outcomes])),
        mean_s3=float(np.mean([o.mean_s3 for o in outcomes])),
        mean_tests_per_step=float(np.mean([o.tests_per_step
                                           for o in outcomes])),
    )
    if write:
        out_dir = Path(spec.output_dir) if spec.output_dir \
            else output_root() / f"{spec.policy}_{spec.mode}"
        write_outputs(spec, row, outcomes, out_dir)
    return row


def write_outputs(spec: ExperimentSpec, row: ResultRow,
                  outcomes: list[SeedOutcome], out_dir: Path) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "results.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ResultRow.ORDER)
        writer.writerow(row.csv_values())
    with open(out_dir / "per_seed.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seed", "mean_return", "mean_s1", "mean_s2",
                         "mean_s3", "tests_per_step"])
        for o in outcomes:
            writer.writerow([o.seed, repr(o.mean_return), repr(o.mean_s1),
                             repr(o.mean_s2), repr(o.mean_s3),
                             repr(o.tests_per_step)])
    with open(out_dir / "latency.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seed", "mean_decision_seconds",
                         "std_decision_seconds", "steps"])
        for o in outcomes:
            mean = statistics.fmean(o.decision_seconds) \
                if o.decision_seconds else 0.0
            std = statistics.pstdev(o.decision_seconds) \
                if len(o.decision_seconds) > 1 else 0.0
            writer.writerow([o.seed, f"{mean:.9f}", f"{std:.9f}",
                             len(o.decision_seconds)])
    with open(out_dir / "cluster_episodes.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seed", "episode", "cluster", "n", "s1_norm",
                         "s2_norm", "s3_norm", "reward"])
        for o in outcomes:
            for rec in o.cluster_rows:
                writer.writerow([*rec[:4], *(repr(v) for v in rec[4:])])
    summary = {
        "schema_version": 1,
        "spec": asdict(spec),
        "result": {name: getattr(row, name) for name in ResultRow.ORDER},
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    if spec.dump_trajectories:
        for o in outcomes:
            write_trajectories(o.rows, out_dir / f"trajectories_seed{o.seed}.csv")


def write_trajectories(rows: list[tuple], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seed", "episode", *TRAJECTORY_COLUMNS])
        writer.writerows(rows)


def audit_trajectories(path: Path, alpha2: float, alpha3: float) -> dict:
    """Recompute per-cluster rewards from dumped increments (Eq audit)."""
    per_cluster: dict[tuple, dict] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for rec in reader:
            key = (int(rec["seed"]), int(rec["episode"]), int(rec["cluster"]))
            slot = per_cluster.setdefault(
                key, {"s1": 0, "s2": 0, "s3": 0, "individuals": set()})
            slot["s1"] += int(rec["s1_inc"])
            slot["s2"] += int(rec["s2_inc"])
            slot["s3"] += int(rec["s3_inc"])
            slot["individuals"].add(int(rec["individual"]))
    rewards = {}
    for key, slot in per_cluster.items():
        n = len(slot["individuals"])
        rewards[key] = -(slot["s1"] + alpha2 * slot["s2"]
                         + alpha3 * slot["s3"]) / n
    return rewards


# ---------------------------------------------------------------------------
# Runtime benchmarking
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LatencyRow:
    n_clusters: int
    budget: int
    bin_mean_ms: float
    bin_std_ms: float
    ppo_mean_ms: float
    ppo_std_ms: float
    speedup: float
    bin_evaluations_mean: float
    ppo_evaluations_mean: float


def _policy_decision_times(config: SystemConfig, policy,
                           episodes: int) -> tuple[list[float], list[int]]:
    times: list[float] = []
    evals: list[int] = []
    for episode in range(episodes):
        runtime = SystemRuntime(config, policy, episode)
        while not runtime.state.finished():
            metrics = runtime.step_day()
            if metrics.active_clusters:
                times.append(metrics.decision_seconds)
                evals.append(metrics.controller_evaluations)
    return times, evals


def bench_latency(cluster_grid=(10, 20, 40), budget_factors=(2,),
                  episodes: int = 2, estimator=None,
                  controller: PpoController | None = None,
                  seed: int = 0) -> list[LatencyRow]:
    """Decision-time comparison at fixed cluster size 20, learned backend."""
    epi = desk_epi(cluster_size_min=20, cluster_size_max=20)
    if estimator is None:
        import torch

        torch.manual_seed(seed)
        estimator = LearnedQ(QNetwork(), TrainConfig(), {"alpha2": 0.1})
    rows = []
    for n_clusters in cluster_grid:
        for factor in budget_factors:
            budget = factor * n_clusters
            costs = CostParams(budget=budget)
            config = SystemConfig(
                epi=epi, costs=costs, mode=ASYNCHRONOUS,
                n_clusters=n_clusters, n_max=max(40, n_clusters), seed=seed)
            if controller is None:
                import torch

                torch.manual_seed(seed)
                ppo = PpoController(
                    GlobalPolicyNet(config.n_max), PpoConfig())
            else:
                ppo = controller
            bin_policy = QRankingPolicy(BinSearchM(costs), estimator, costs)
            ppo_policy = QRankingPolicy(ppo, estimator, costs)
            bin_times, bin_evals = _policy_decision_times(
                config, bin_policy, episodes)
            ppo_times, ppo_evals = _policy_decision_times(
                config, ppo_policy, episodes)
            bin_mean = statistics.fmean(bin_times)
            ppo_mean = statistics.fmean(ppo_times)
            rows.append(LatencyRow(
                n_clusters=n_clusters, budget=budget,
                bin_mean_ms=1e3 * bin_mean,
                bin_std_ms=1e3 * statistics.pstdev(bin_times),
                ppo_mean_ms=1e3 * ppo_mean,
                ppo_std_ms=1e3 * statistics.pstdev(ppo_times),
                speedup=bin_mean / ppo_mean if ppo_mean > 0 else float("inf"),
                bin_evaluations_mean=statistics.fmean(bin_evals),
                ppo_evaluations_mean=statistics.fmean(ppo_evals),
            ))
    return rows


def write_latency_table(rows: list[LatencyRow], path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n_clusters", "budget", "bin_mean_ms", "bin_std_ms",
                         "ppo_mean_ms", "ppo_std_ms", "speedup",
                         "bin_evaluations_mean", "ppo_evaluations_mean"])
        for r in rows:
            writer.writerow([r.n_clusters, r.budget, f"{r.bin_mean_ms:.4f}",
                             f"{r.bin_std_ms:.4f}", f"{r.ppo_mean_ms:.4f}",
                             f"{r.ppo_std_ms:.4f}", f"{r.speedup:.2f}",
                             f"{r.bin_evaluations_mean:.2f}",
                             f"{r.ppo_evaluations_mean:.2f}"])


# ---------------------------------------------------------------------------
# Tests-vs-cost monotonicity sweep
# ---------------------------------------------------------------------------

def greedy_tests_per_step(estimator, epi: EpiParams, alpha2: float,
                          alpha3: float, episodes: int, seed: int,
                          size: int | None = None) -> float:
    """Mean executed tests per decision day under unbudgeted dq > 0 testing."""
    total_tests = 0
    total_days = 0
    for episode in range(episodes):
        env = SingleClusterEnv(epi, alpha2, alpha3, seed, episode, size=size)
        while not env.done():
            obs, records = env.observe()
            dq = delta_q(estimator, obs, records=records,
                         local_day=env.local_day)
            actions = dq > 0.0
            env.step(actions)
            total_tests += int(actions.sum())
            total_days += 1
    return total_tests / total_days if total_days else 0.0


def sweep_monotonicity(estimator, alpha3_grid, episodes: int,
                       sizes=(3, 6, 10), alpha2: float = 0.1,
                       seed: int = 0, epi: EpiParams | None = None) -> list[dict]:
    """Plot-ready (size, alpha3, tests_per_step) rows."""
    if epi is None:
        epi = desk_epi(within_cluster_transmission=True)
    rows = []
    for size in sizes:
        for alpha3 in alpha3_grid:
            rate = greedy_tests_per_step(
                estimator, epi, alpha2, float(alpha3), episodes, seed,
                size=size)
            rows.append({"cluster_size": size, "alpha3": float(alpha3),
                         "tests_per_step": rate})
    return rows


def write_sweep(rows: list[dict], path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["cluster_size", "alpha3", "tests_per_step"])
        writer.writeheader()
        writer.writerows(rows)
