"""Deterministic observation vectors for the local and global policies.

Local (per contact, 16 dims):
  [0:3]   filtered P(infected) at local days t-3..t-1
  [3:6]   predicted P(infectious) at local days t+1..t+3
  [6:9]   symptom flags observed on days t-3..t-1
  [9:12]  tested flags for days t-3..t-1
  [12:15] result codes of the tests taken on days t-3..t-1
          (-1 missing/pending, 0 negative, +1 positive)
  [15]    currently active per-test cost

Global (8 + 17 * n_max dims): a system block followed by one 17-dim block
per cluster slot, ordered by cluster id, zero for inactive slots:
  system: [t/horizon, active fraction, active pop / max pop, B/B_nominal,
           B per active individual, prev demand / B, prev multiplier,
           shortage flag]
  cluster: [size/size_max, age/episode, tests pc (3d), symptom prev pc (3d),
            positives pc (3d), cost feature, mean/max recent q,
            mean/max future q, active flag]

History windows are the last three fully observed local days; slots before
cluster activation carry the -1 missing sentinel (counts) or the prior
(beliefs). Every feature is clipped to [-1, 4]; clips are counted and
logged since they indicate a config outside the calibrated envelope.
"""

from __future__ import annotations

import logging

import numpy as np

from .belief import PAST_WINDOW, BeliefRecord
from .config import EpiParams, SystemConfig
from .errors import CapacityError
from .sim import ClusterState, IndividualState, MultiClusterState

logger = logging.getLogger(__name__)

LOCAL_DIM = 16
GLOBAL_DIM = 8
CLUSTER_DIM = 17

FEATURE_LO = -1.0
FEATURE_HI = 4.0

MISSING = -1.0

_clip_count = 0


def _clip(vec: np.ndarray, what: str) -> np.ndarray:
    global _clip_count
    bad = (vec < FEATURE_LO) | (vec > FEATURE_HI)
    n = int(bad.sum())
    if n:
        _clip_count += n
        # First occurrence is loud; the rest stay countable at debug level
        # (large randomized budgets legitimately saturate the budget-per-
        # individual feature).
        level = logging.WARNING if _clip_count == n else logging.DEBUG
        logger.log(level, "clipped %d out-of-range %s features (total %d)",
                   n, what, _clip_count)
        vec = np.clip(vec, FEATURE_LO, FEATURE_HI)
    return vec


def clip_count() -> int:
    return _clip_count


def build_local(ind: IndividualState, record: BeliefRecord,
                alpha3_active: float, day: int, epi: EpiParams) -> np.ndarray:
    """16-dim observation for one contact at decision time of local ``day``."""
    obs = np.zeros(LOCAL_DIM)
    obs[0:3] = record.q_past
    obs[3:6] = record.q_future
    for j in range(PAST_WINDOW):
        d = day - PAST_WINDOW + j
        if 0 <= d < len(ind.symptom_observed):
            obs[6 + j] = 1.0 if ind.symptom_observed[d] else 0.0
        if 0 <= d < len(ind.tested):
            obs[9 + j] = 1.0 if ind.tested[d] else 0.0
            obs[12 + j] = float(ind.reported_result(d, day, epi))
        else:
            obs[12 + j] = MISSING
    obs[15] = alpha3_active
    return _clip(obs, "local")


def _window_days(local_day: int) -> list[int]:
    return [local_day - PAST_WINDOW + j for j in range(PAST_WINDOW)]


def _cluster_block(cluster: ClusterState, records: list[BeliefRecord],
                   applied_cost: float, t: int, epi: EpiParams) -> np.ndarray:
    block = np.zeros(CLUSTER_DIM)
    n = cluster.size
    local = t - cluster.activation_day
    block[0] = n / epi.cluster_size_max
    block[1] = local / epi.episode_days

    tests_recent = 0
    for j, d in enumerate(_window_days(local)):
        if d < 0:
            block[2 + j] = MISSING
            block[5 + j] = MISSING
            block[8 + j] = MISSING
            continue
        tests = sum(1 for ind in cluster.individuals
                    if d < len(ind.tested) and ind.tested[d])
        sympt = sum(1 for ind in cluster.individuals
                    if d < len(ind.symptom_observed) and ind.symptom_observed[d])
        pos = sum(1 for ind in cluster.individuals
                  if ind.reported_result(d, local, epi) == 1)
        block[2 + j] = tests / n
        block[5 + j] = sympt / n
        block[8 + j] = pos / n
        tests_recent += tests

    block[11] = applied_cost * tests_recent / n

    q_recent = np.concatenate([r.q_past for r in records])
    q_future = np.concatenate([r.q_future for r in records])
    block[12] = q_recent.mean()
    block[13] = q_recent.max()
    block[14] = q_future.mean()
    block[15] = q_future.max()
    block[16] = 1.0
    return block


def build_global(state: MultiClusterState,
                 records_by_cluster: dict[int, list[BeliefRecord]],
                 nominal_budget: int) -> np.ndarray:
    """Fixed-size controller observation (8 + 17 * n_max entries)."""
    config: SystemConfig = state.config
    epi = config.epi
    n_max = config.n_max
    active = state.active_clusters()
    if len(active) > n_max:
        raise CapacityError(f"{len(active)} active clusters exceed n_max {n_max}")

    t = state.day
    active_pop = sum(c.size for c in active)
    g = np.zeros(GLOBAL_DIM)
    g[0] = t / config.horizon_days
    g[1] = len(active) / config.n_clusters
    g[2] = active_pop / config.max_population
    g[3] = state.budget / nominal_budget if nominal_budget > 0 else 0.0
    g[4] = state.budget / active_pop if active_pop > 0 else 0.0
    g[5] = state.last_demand / state.budget if state.budget > 0 else 0.0
    g[6] = state.last_multiplier
    g[7] = 1.0 if state.last_shortage else 0.0

    applied_cost = state.last_multiplier * config.costs.alpha3_true
    blocks = np.zeros((n_max, CLUSTER_DIM))
    for cluster in active:
        blocks[cluster.id] = _cluster_block(
            cluster, records_by_cluster[cluster.id], applied_cost, t, epi)
    return _clip(np.concatenate([g, blocks.reshape(-1)]), "global")


def global_dim(n_max: int) -> int:
    return GLOBAL_DIM + CLUSTER_DIM * n_max
