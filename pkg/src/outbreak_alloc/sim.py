"""Individual-level stochastic outbreak simulator with asynchronous clusters.

A cluster is the cohort of close contacts of one confirmed index case. Each
contact may be infected at exposure (cluster activation); infected contacts
draw a lognormal incubation time and a symptomatic status. Afterwards the
cluster evolves day by day:

  symptom emission -> testing (delayed, noisy reporting) -> cost counters
  -> optional fully-mixed within-cluster transmission

Interventions (quarantine, tests) feed back into dynamics and observability:
quarantined members neither transmit nor acquire infection, and test
outcomes depend on current infectiousness.

All randomness is counter-based (see :mod:`outbreak_alloc.rng`), keyed by
``(seed, cluster, individual, day, channel)``. Time inside a cluster is
expressed in local days (0 = activation); the multi-cluster layer maps
absolute to local time.

Cost counters per cluster:
  S1  infectious person-days outside quarantine (within the infectious window)
  S2  quarantine person-days spent on never-infected contacts
  S3  tests administered
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import ASYNCHRONOUS, SYNCHRONOUS, EpiParams, SystemConfig
from .errors import BudgetViolationError, ParameterError, StateError
from .rng import Channel, hash_fields, normal, u01

NO_RESULT = -1  # sentinel in test-outcome histories


@dataclass
class IndividualState:
    """Latent disease trajectory and observation history of one contact.

    Day indices are cluster-local. History lists grow one entry per
    simulated day; ``test_outcomes[d]`` is the outcome of the test taken on
    day d (NO_RESULT if untested), which becomes reportable at day
    ``d + result_delay_days``.
    """

    infected: bool = False
    infection_day: int | None = None
    onset_day: int | None = None
    will_be_symptomatic: bool = False
    quarantined: bool = False
    quarantine_start_day: int | None = None
    symptom_observed: list[bool] = field(default_factory=list)
    tested: list[bool] = field(default_factory=list)
    test_outcomes: list[int] = field(default_factory=list)

    def infectious_on(self, day: int, epi: EpiParams) -> bool:
        if not self.infected or self.onset_day is None:
            return False
        if day < self.infection_day:
            return False
        lo = self.onset_day - epi.infectious_pre_onset_days
        hi = self.onset_day + epi.infectious_post_onset_days
        return lo <= day < hi

    def true_symptom_on(self, day: int, epi: EpiParams) -> bool:
        if not (self.infected and self.will_be_symptomatic):
            return False
        return self.onset_day <= day < self.onset_day + epi.infectious_post_onset_days

    def pending_results(self, day: int, epi: EpiParams) -> list[tuple[int, int]]:
        """(available_day, outcome) pairs for tests not yet reportable at day."""
        out = []
        for d, taken in enumerate(self.tested):
            avail = d + epi.result_delay_days
            if taken and avail > day:
                out.append((avail, self.test_outcomes[d]))
        return out

    def reported_result(self, test_day: int, now: int, epi: EpiParams) -> int:
        """Outcome of the test taken on test_day if reportable by now."""
        if test_day < 0 or test_day >= len(self.tested) or not self.tested[test_day]:
            return NO_RESULT
        if test_day + epi.result_delay_days > now:
            return NO_RESULT
        return self.test_outcomes[test_day]


@dataclass
class ClusterState:
    """One cohort of contacts plus its accounting counters."""

    id: int
    size: int
    activation_day: int
    index_high_transmissive: bool
    individuals: list[IndividualState]
    s1_days: int = 0
    s2_days: int = 0
    s3_tests: int = 0
    active: bool = False
    local_day: int = 0  # next local day to simulate

    def finished(self, epi: EpiParams) -> bool:
        return self.local_day >= epi.episode_days


def draw_onset_offset(seed: int, cluster_id: int, individual: int,
                      infection_day: int, epi: EpiParams) -> int:
    """Integer days from infection to symptom onset, round-to-nearest."""
    mu, sigma = epi.lognormal_mu_sigma
    z = normal(seed, cluster_id, individual, infection_day, Channel.INCUBATION)
    return int(np.floor(np.exp(mu + sigma * z) + 0.5))


def _infect(ind: IndividualState, seed: int, cluster_id: int, individual: int,
            infection_day: int, epi: EpiParams) -> None:
    ind.infected = True
    ind.infection_day = infection_day
    ind.onset_day = infection_day + draw_onset_offset(
        seed, cluster_id, individual, infection_day, epi)
    ind.will_be_symptomatic = (
        u01(seed, cluster_id, individual, infection_day, Channel.SYMPTOMATIC)
        < epi.p_symptomatic_given_infected
    )


def spawn_cluster(seed: int, cluster_id: int, activation_day: int,
                  epi: EpiParams, size: int) -> ClusterState:
    """Create a cluster with exposure infections already resolved.

    The index case itself is not simulated; it only determines the exposure
    pressure on its contacts via the high-transmissive flag.
    """
    if not epi.cluster_size_min <= size <= epi.cluster_size_max:
        raise ParameterError(
            f"cluster size {size} outside "
            f"[{epi.cluster_size_min}, {epi.cluster_size_max}]")
    high = u01(seed, cluster_id, -1, 0, Channel.HIGH_TRANSMISSIVE) \
        < epi.p_high_transmissive_index
    p_exp = epi.exposure_prob(high)
    individuals = []
    for i in range(size):
        ind = IndividualState()
        if u01(seed, cluster_id, i, 0, Channel.EXPOSURE) < p_exp:
            _infect(ind, seed, cluster_id, i, 0, epi)
        individuals.append(ind)
    return ClusterState(
        id=cluster_id,
        size=size,
        activation_day=activation_day,
        index_high_transmissive=high,
        individuals=individuals,
    )


def step_cluster(cluster: ClusterState, epi: EpiParams, seed: int,
                 test_actions: np.ndarray,
                 quarantine_actions: np.ndarray) -> tuple[int, int, int]:
    """Advance one local day; returns the (dS1, dS2, dS3) increments.

    Action arrays are booleans of length N and apply for the day being
    simulated. Quarantine is re-evaluated daily: passing False releases.
    """
    if not cluster.active:
        raise StateError(f"cluster {cluster.id} is not active")
    n = cluster.size
    if len(test_actions) != n or len(quarantine_actions) != n:
        raise ParameterError("action arrays must have one entry per individual")
    day = cluster.local_day
    cid = cluster.id

    for i, ind in enumerate(cluster.individuals):
        want_q = bool(quarantine_actions[i])
        if want_q and not ind.quarantined:
            ind.quarantine_start_day = day
        elif not want_q and ind.quarantined:
            ind.quarantine_start_day = None
        ind.quarantined = want_q

    # Symptom emission: deterministic within the symptomatic window, plus an
    # independent daily false-symptom channel for everyone else.
    for i, ind in enumerate(cluster.individuals):
        if ind.true_symptom_on(day, epi):
            obs = True
        else:
            obs = u01(seed, cid, i, day, Channel.FALSE_SYMPTOM) \
                < epi.p_false_symptom_per_day
        ind.symptom_observed.append(obs)

    ds3 = 0
    for i, ind in enumerate(cluster.individuals):
        if test_actions[i]:
            u = u01(seed, cid, i, day, Channel.TEST_OUTCOME)
            p_pos = epi.test_sensitivity if ind.infectious_on(day, epi) \
                else 1.0 - epi.test_specificity
            ind.tested.append(True)
            ind.test_outcomes.append(1 if u < p_pos else 0)
            ds3 += 1
        else:
            ind.tested.append(False)
            ind.test_outcomes.append(NO_RESULT)

    ds1 = 0
    ds2 = 0
    for ind in cluster.individuals:
        if ind.infectious_on(day, epi) and not ind.quarantined:
            ds1 += 1
        if ind.quarantined and not ind.infected:
            ds2 += 1

    # Fully-mixed transmission from today's free infectious members; new
    # infections take effect tomorrow.
    if epi.within_cluster_transmission:
        k = sum(
            1 for ind in cluster.individuals
            if ind.infectious_on(day, epi) and not ind.quarantined
        )
        if k > 0:
            p_inf = 1.0 - (1.0 - epi.base_transmission_prob) ** k
            for i, ind in enumerate(cluster.individuals):
                if ind.infected or ind.quarantined:
                    continue
                if u01(seed, cid, i, day, Channel.TRANSMISSION) < p_inf:
                    _infect(ind, seed, cid, i, day + 1, epi)

    cluster.s1_days += ds1
    cluster.s2_days += ds2
    cluster.s3_tests += ds3
    cluster.local_day += 1
    return ds1, ds2, ds3


def make_schedule(mode: str, n_clusters: int, n_max: int, stagger_window: int,
                  seed: int) -> list[tuple[int, int]]:
    """(cluster_id, activation_day) pairs; async draws uniform in the window."""
    if n_clusters > n_max:
        raise ParameterError(f"n_clusters {n_clusters} exceeds n_max {n_max}")
    if mode == SYNCHRONOUS or stagger_window == 0:
        return [(cid, 0) for cid in range(n_clusters)]
    if mode != ASYNCHRONOUS:
        raise ParameterError(f"unknown mode {mode!r}")
    schedule = []
    for cid in range(n_clusters):
        day = int(u01(seed, cid, Channel.SCHEDULE) * (stagger_window + 1))
        schedule.append((cid, min(day, stagger_window)))
    return schedule


def draw_cluster_size(seed: int, cluster_id: int, epi: EpiParams) -> int:
    lo, hi = epi.cluster_size_min, epi.cluster_size_max
    u = u01(seed, cluster_id, Channel.CLUSTER_SIZE)
    return lo + min(int(u * (hi - lo + 1)), hi - lo)


@dataclass
class MultiClusterState:
    """The full system: clusters, arrival schedule, budget, price history."""

    config: SystemConfig
    clusters: list[ClusterState]
    activation_schedule: list[tuple[int, int]]
    rng_root: int = 0
    day: int = 0
    budget: int = 0
    last_demand: int = 0
    last_multiplier: float = 1.0
    last_shortage: bool = False
    total_steps: int = 0

    def active_clusters(self) -> list[ClusterState]:
        return [c for c in self.clusters if c.active]

    def decision_clusters(self) -> list[ClusterState]:
        """Active clusters past their tracing delay, eligible for actions."""
        start = self.config.epi.decision_start_day
        return [c for c in self.clusters if c.active and c.local_day >= start]

    def finished(self) -> bool:
        if self.day < self.config.horizon_days:
            return False
        return all(not c.active for c in self.clusters)


def new_system(config: SystemConfig, episode: int = 0,
               budget: int | None = None) -> MultiClusterState:
    """Build the day-0 system; cluster latent draws are keyed by episode.

    ``episode`` offsets the RNG root so repeated episodes under one config
    are independent while remaining replayable.
    """
    seed = episode_seed(config.seed, episode)
    schedule = make_schedule(config.mode, config.n_clusters, config.n_max,
                             config.stagger_window, seed)
    clusters = [
        spawn_cluster(seed, cid, act_day, config.epi,
                      draw_cluster_size(seed, cid, config.epi))
        for cid, act_day in schedule
    ]
    return MultiClusterState(
        config=config,
        clusters=clusters,
        activation_schedule=schedule,
        rng_root=seed,
        budget=config.costs.budget if budget is None else budget,
    )


def episode_seed(config_seed: int, episode: int) -> int:
    return hash_fields(config_seed, episode, Channel.EPISODE)


def step_system(
    state: MultiClusterState,
    joint_actions: dict[int, tuple[np.ndarray, np.ndarray]],
    demand: int | None = None,
    multiplier: float | None = None,
) -> tuple[MultiClusterState, list[tuple[int, tuple[int, int, int]]]]:
    """Advance the system one day under per-cluster (test, quarantine) actions.

    Clusters activating today and clusters inside their tracing delay may be
    omitted from ``joint_actions``; they step with no interventions. The
    per-timestep budget is enforced as a hard invariant: the allocator must
    guarantee it, so a violation here raises.

    Returns the mutated state and per-cluster (dS1, dS2, dS3) increments.
    """
    seed = state.rng_root
    epi = state.config.epi
    t = state.day

    for cid, act_day in state.activation_schedule:
        if act_day == t:
            state.clusters[cid].active = True

    total_tests = 0
    for cid in sorted(joint_actions):
        total_tests += int(np.sum(joint_actions[cid][0]))
    if total_tests > state.budget:
        raise BudgetViolationError(
            f"day {t}: {total_tests} tests exceed budget {state.budget}")

    increments = []
    for cluster in state.clusters:
        if not cluster.active:
            continue
        if cluster.id in joint_actions:
            tests, quars = joint_actions[cluster.id]
        else:
            tests = np.zeros(cluster.size, dtype=bool)
            quars = np.zeros(cluster.size, dtype=bool)
        inc = step_cluster(cluster, epi, seed, tests, quars)
        increments.append((cluster.id, inc))
        if cluster.finished(epi):
            cluster.active = False

    if demand is not None:
        state.last_demand = demand
        state.last_shortage = demand > state.budget
    if multiplier is not None:
        state.last_multiplier = multiplier
    state.day += 1
    state.total_steps += 1
    return state, increments
