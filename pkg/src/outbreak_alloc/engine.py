"""Per-day execution loop tying the simulator to policies.

Day pipeline (one timestep of one episode):

  1. activate clusters scheduled for today; create their belief filters
  2. advance every active cluster's filter to its decision-time information
     set (symptoms through yesterday, results reportable today)
  3. the policy decides: a multiplier (for ranking policies) and the joint
     test/quarantine actions, under the hard budget
  4. step the simulator; collect per-individual cost increments
  5. record metrics and optional per-individual trajectory rows

The controller decision is wall-clocked in isolation (step 3's multiplier
choice only) for the runtime comparisons; environment stepping and the
shared execution layer are excluded.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .allocator import CandidateAction, q_rank_allocate
from .baselines import HEURISTIC_KINDS, heuristic_allocate, symptom_quarantine
from .belief import BeliefRecord, ClusterBeliefFilter, build_hypothesis_table, \
    quarantine_decision
from .config import CostParams, SystemConfig
from .controllers import DecisionContext
from .errors import ParameterError
from .objective import cluster_reward
from .observations import build_global, build_local
from .sim import MultiClusterState, new_system, step_system
from .value import ALPHA3_SLOT, delta_q


@dataclass
class StepMetrics:
    day: int
    multiplier: float
    alpha3_active: float
    candidates: int     # pooled candidates (all individuals scored)
    demand: int         # positive-value candidates before capping
    executed: int
    budget: int
    active_clusters: int
    controller_evaluations: int
    decision_seconds: float
    reward_sum: float


@dataclass
class EpisodeResult:
    episode: int
    seed: int
    cluster_totals: list[tuple[int, int, int, int, int]]  # id, N, S1, S2, S3
    mean_return: float
    step_metrics: list[StepMetrics]
    rows: list[tuple] = field(default_factory=list)

    @property
    def total_tests(self) -> int:
        return sum(s3 for _, _, _, _, s3 in self.cluster_totals)

    @property
    def tests_per_step(self) -> float:
        steps = len(self.step_metrics)
        return self.total_tests / steps if steps else 0.0


# Trajectory dump column order (kept stable; bump the schema on change).
TRAJECTORY_SCHEMA_VERSION = 1
TRAJECTORY_COLUMNS = (
    ["day", "cluster", "individual",
     "infected", "infection_day", "onset_day", "will_symptomatic",
     "quarantined", "symptom_obs", "tested", "report_code", "q_now"]
    + [f"obs_{i}" for i in range(16)]
    + ["action_test", "action_quarantine", "s1_inc", "s2_inc", "s3_inc",
       "multiplier", "alpha3_active"]
)


class QRankingPolicy:
    """Controller-modulated marginal-value ranking with hard budget."""

    def __init__(self, controller, estimator, costs: CostParams):
        self.controller = controller
        self.estimator = estimator
        self.costs = costs
        self.quarantine_rule = "threshold"

    @property
    def kind(self) -> str:
        return f"{self.controller.kind}_qr"

    def decide(self, runtime: "SystemRuntime", m_override: float | None = None):
        state = runtime.state
        eligible = state.decision_clusters()
        base_obs = {
            c.id: runtime.local_obs(c, alpha3_active=0.0) for c in eligible
        }

        def demand_at(m: float) -> int:
            alpha = m * self.costs.alpha3_true
            count = 0
            for c in eligible:
                dq = self._delta_q(c, base_obs[c.id], alpha, runtime)
                count += int(np.sum(dq > 0.0))
            return count

        needs_obs = getattr(self.controller, "kind", "") == "hier_ppo"
        global_obs = runtime.global_obs() if needs_obs else None
        ctx = DecisionContext(global_obs=global_obs, budget=state.budget,
                              demand_at=demand_at)
        if m_override is not None:
            m = m_override
            evaluations = 0
            decision_seconds = 0.0
        else:
            t0 = time.perf_counter()
            m = self.controller.decide(ctx)
            decision_seconds = time.perf_counter() - t0
            evaluations = self.controller.last_evaluations

        alpha = m * self.costs.alpha3_true
        candidates = []
        delta_by_cluster = {}
        for c in eligible:
            dq = self._delta_q(c, base_obs[c.id], alpha, runtime)
            delta_by_cluster[c.id] = dq
            for i in range(c.size):
                candidates.append(CandidateAction(c.id, i, float(dq[i])))
        selected = q_rank_allocate(candidates, state.budget)
        demand = sum(int(np.sum(dq > 0)) for dq in delta_by_cluster.values())

        joint = {}
        for c in eligible:
            tests = np.array([(c.id, i) in selected for i in range(c.size)])
            q_now = runtime.filters[c.id].q_now()
            quars = np.array([
                quarantine_decision(float(q), self.costs.alpha2) for q in q_now
            ])
            joint[c.id] = (tests, quars)
        diag = {
            "multiplier": m, "alpha3_active": alpha, "demand": demand,
            "candidates": len(candidates), "evaluations": evaluations,
            "decision_seconds": decision_seconds,
        }
        return joint, diag

    def _delta_q(self, cluster, base_obs: np.ndarray, alpha: float,
                 runtime: "SystemRuntime") -> np.ndarray:
        obs = base_obs.copy()
        obs[:, ALPHA3_SLOT] = alpha
        local_day = runtime.state.day - cluster.activation_day
        return delta_q(self.estimator, obs,
                       records=runtime.records[cluster.id],
                       local_day=local_day)


class HeuristicPolicy:
    """Quota-based random testing with symptom or threshold quarantine."""

    def __init__(self, kind: str, costs: CostParams):
        if kind not in HEURISTIC_KINDS:
            raise ParameterError(f"unknown heuristic kind {kind!r}")
        self.kind = kind
        self.costs = costs
        self.quarantine_rule = "symptom" if kind == "symp_avg_rand" \
            else "threshold"

    def decide(self, runtime: "SystemRuntime", m_override: float | None = None):
        state = runtime.state
        eligible = state.decision_clusters()
        t0 = time.perf_counter()
        tests_by_cluster = heuristic_allocate(
            self.kind, eligible, state.budget, state.rng_root, state.day)
        decision_seconds = time.perf_counter() - t0
        joint = {}
        executed = 0
        for c in eligible:
            tests = tests_by_cluster[c.id]
            executed += int(tests.sum())
            local_day = state.day - c.activation_day
            if self.quarantine_rule == "symptom":
                quars = symptom_quarantine(c, local_day, state.config.epi)
            else:
                q_now = runtime.filters[c.id].q_now()
                quars = np.array([
                    quarantine_decision(float(q), self.costs.alpha2)
                    for q in q_now
                ])
            joint[c.id] = (tests, quars)
        diag = {
            "multiplier": 1.0, "alpha3_active": self.costs.alpha3_true,
            "demand": executed, "candidates": 0, "evaluations": 0,
            "decision_seconds": decision_seconds,
        }
        return joint, diag


class SystemRuntime:
    """One episode of one system under one policy, with belief tracking."""

    def __init__(self, config: SystemConfig, policy, episode: int = 0,
                 budget: int | None = None, record_rows: bool = False):
        self.config = config
        self.policy = policy
        self.episode = episode
        self.record_rows = record_rows
        self.state: MultiClusterState = new_system(config, episode, budget)
        self.table = build_hypothesis_table(config.epi)
        self.filters: dict[int, ClusterBeliefFilter] = {}
        self.records: dict[int, list[BeliefRecord]] = {}
        self.rows: list[tuple] = []
        self.step_metrics: list[StepMetrics] = []
        self._prepared = False

    # -- day phases --------------------------------------------------------

    def prepare_day(self) -> None:
        """Activate arrivals and advance decision-time beliefs."""
        if self._prepared:
            return
        t = self.state.day
        for cid, act_day in self.state.activation_schedule:
            if act_day == t:
                self.state.clusters[cid].active = True
        for cluster in self.state.active_clusters():
            if cluster.id not in self.filters:
                self.filters[cluster.id] = ClusterBeliefFilter(
                    self.table, cluster.size, self.config.epi)
            local_day = t - cluster.activation_day
            self.filters[cluster.id].advance_to(cluster, local_day)
            self.records[cluster.id] = self.filters[cluster.id].records()
        self._prepared = True

    def execute_day(self, m_override: float | None = None,
                    budget_override: int | None = None) -> StepMetrics:
        self.prepare_day()
        state = self.state
        if budget_override is not None:
            state.budget = budget_override
        joint, diag = self.policy.decide(self, m_override=m_override)
        executed = sum(int(tests.sum()) for tests, _ in joint.values())
        state, increments = step_system(
            state, joint, demand=diag["demand"], multiplier=diag["multiplier"])
        reward_sum = 0.0
        for cid, (ds1, ds2, ds3) in increments:
            n = state.clusters[cid].size
            reward_sum += cluster_reward(ds1, ds2, ds3, n,
                                         self.config.costs).reward
        metrics = StepMetrics(
            day=state.day - 1,
            multiplier=diag["multiplier"],
            alpha3_active=diag["alpha3_active"],
            candidates=diag["candidates"],
            demand=diag["demand"],
            executed=executed,
            budget=state.budget,
            active_clusters=len(increments),
            controller_evaluations=diag["evaluations"],
            decision_seconds=diag["decision_seconds"],
            reward_sum=reward_sum,
        )
        self.step_metrics.append(metrics)
        if self.record_rows:
            self._record_rows(joint, diag)
        self._prepared = False
        return metrics

    def step_day(self) -> StepMetrics:
        self.prepare_day()
        return self.execute_day()

    def run_episode(self) -> EpisodeResult:
        while not self.state.finished():
            self.step_day()
        return self.result()

    # -- observation helpers -----------------------------------------------

    def local_obs(self, cluster, alpha3_active: float) -> np.ndarray:
        local_day = self.state.day - cluster.activation_day
        records = self.records[cluster.id]
        return np.stack([
            build_local(ind, rec, alpha3_active, local_day, self.config.epi)
            for ind, rec in zip(cluster.individuals, records)
        ])

    def global_obs(self) -> np.ndarray:
        return build_global(self.state, self.records,
                            nominal_budget=self.config.costs.budget)

    # -- results -----------------------------------------------------------

    def result(self) -> EpisodeResult:
        totals = [
            (c.id, c.size, c.s1_days, c.s2_days, c.s3_tests)
            for c in self.state.clusters
        ]
        returns = [
            cluster_reward(s1, s2, s3, n, self.config.costs).reward
            for _, n, s1, s2, s3 in totals
        ]
        return EpisodeResult(
            episode=self.episode,
            seed=self.config.seed,
            cluster_totals=totals,
            mean_return=float(np.mean(returns)) if returns else 0.0,
            step_metrics=self.step_metrics,
            rows=self.rows,
        )

    def _record_rows(self, joint, diag) -> None:
        # Rows describe the day just simulated (state.day was advanced).
        epi = self.config.epi
        day = self.state.day - 1
        for cluster in self.state.clusters:
            local_day = day - cluster.activation_day
            if not (0 <= local_day < cluster.local_day):
                continue
            if cluster.id in joint:
                tests, quars = joint[cluster.id]
            else:
                tests = np.zeros(cluster.size, dtype=bool)
                quars = np.zeros(cluster.size, dtype=bool)
            records = self.records.get(cluster.id)
            if records is not None:
                obs = np.stack([
                    build_local(ind, rec, diag["alpha3_active"], local_day, epi)
                    for ind, rec in zip(cluster.individuals, records)
                ])
            else:
                obs = np.zeros((cluster.size, 16))
            for i, ind in enumerate(cluster.individuals):
                infectious = ind.infectious_on(local_day, epi)
                infected_by_day = (ind.infected
                                   and ind.infection_day <= local_day)
                s1_inc = int(infectious and not ind.quarantined)
                s2_inc = int(ind.quarantined and not infected_by_day)
                s3_inc = int(ind.tested[local_day])
                q_now = records[i].q_now if records else float("nan")
                self.rows.append((
                    day, cluster.id, i,
                    int(ind.infected),
                    -1 if ind.infection_day is None else ind.infection_day,
                    -1 if ind.onset_day is None else ind.onset_day,
                    int(ind.will_be_symptomatic),
                    int(ind.quarantined),
                    int(ind.symptom_observed[local_day]),
                    int(ind.tested[local_day]),
                    ind.reported_result(local_day - epi.result_delay_days,
                                        local_day, epi),
                    repr(q_now),
                    *[repr(float(v)) for v in obs[i]],
                    int(tests[i]), int(quars[i]),
                    s1_inc, s2_inc, s3_inc,
                    repr(diag["multiplier"]), repr(diag["alpha3_active"]),
                ))


class ControllerTrainingEnv:
    """Adapter exposing observe()/step(m) over a SystemRuntime for PPO."""

    def __init__(self, config: SystemConfig, estimator, episode: int,
                 budget: int | None = None):
        from .controllers import FixedM

        policy = QRankingPolicy(FixedM(1.0, config.costs), estimator,
                                config.costs)
        self.runtime = SystemRuntime(config, policy, episode, budget)

    def observe(self) -> np.ndarray:
        self.runtime.prepare_day()
        return self.runtime.global_obs()

    def step(self, m: float) -> tuple[float, bool]:
        metrics = self.runtime.execute_day(m_override=m)
        return metrics.reward_sum, self.runtime.state.finished()
