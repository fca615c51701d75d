"""Heuristic allocation policies used as controlled comparisons.

All three split the global budget into per-cluster quotas and pick test
subjects uniformly at random inside each cluster:

  symp_avg_rand   equal split, symptom-based quarantine
  thres_avg_rand  equal split, threshold quarantine
  thres_size_rand largest-remainder proportional split, threshold quarantine

Equal splits assign floor(B/C) everywhere with the remainder going to the
lowest cluster ids; quotas are capped at cluster size without
redistribution, so the budget can go partly unused.
"""

from __future__ import annotations

import numpy as np

from .config import EpiParams
from .errors import ParameterError
from .rng import Channel, permutation
from .sim import ClusterState

HEURISTIC_KINDS = ("symp_avg_rand", "thres_avg_rand", "thres_size_rand")

# Symptom-based quarantine: release after this many symptom-free days; a
# positive report holds quarantine for the infectious-window length.
SYMPTOM_FREE_WINDOW = 3
POSITIVE_HOLD_DAYS = 7


def split_budget(kind: str, sizes: list[tuple[int, int]],
                 budget: int) -> dict[int, int]:
    """Per-cluster quotas; ``sizes`` is (cluster_id, size) for active clusters."""
    if kind not in HEURISTIC_KINDS:
        raise ParameterError(f"unknown heuristic kind {kind!r}")
    if budget < 0:
        raise ParameterError("budget must be non-negative")
    if not sizes:
        return {}
    ordered = sorted(sizes)
    if kind in ("symp_avg_rand", "thres_avg_rand"):
        base, remainder = divmod(budget, len(ordered))
        return {
            cid: base + (1 if rank < remainder else 0)
            for rank, (cid, _) in enumerate(ordered)
        }
    total = sum(n for _, n in ordered)
    shares = [(cid, budget * n / total) for cid, n in ordered]
    quotas = {cid: int(share) for cid, share in shares}
    leftover = budget - sum(quotas.values())
    by_remainder = sorted(shares, key=lambda x: (-(x[1] - int(x[1])), x[0]))
    for cid, _ in by_remainder[:leftover]:
        quotas[cid] += 1
    return quotas


def heuristic_allocate(kind: str, clusters: list[ClusterState], budget: int,
                       seed: int, day: int) -> dict[int, np.ndarray]:
    """Test assignment per cluster; never exceeds the budget."""
    sizes = [(c.id, c.size) for c in clusters]
    quotas = split_budget(kind, sizes, budget)
    actions: dict[int, np.ndarray] = {}
    for cluster in clusters:
        n = cluster.size
        take = min(quotas.get(cluster.id, 0), n)
        tests = np.zeros(n, dtype=bool)
        if take > 0:
            order = permutation(n, seed, cluster.id, day, Channel.SELECTION)
            tests[order[:take]] = True
        actions[cluster.id] = tests
    return actions


def symptom_quarantine(cluster: ClusterState, local_day: int,
                       epi: EpiParams) -> np.ndarray:
    """Isolate on recent observed symptoms or a recent positive report."""
    flags = np.zeros(cluster.size, dtype=bool)
    for i, ind in enumerate(cluster.individuals):
        recent_symptom = any(
            0 <= d < len(ind.symptom_observed) and ind.symptom_observed[d]
            for d in range(local_day - SYMPTOM_FREE_WINDOW, local_day)
        )
        recent_positive = any(
            ind.reported_result(d, local_day, epi) == 1
            for d in range(local_day - POSITIVE_HOLD_DAYS, local_day)
        )
        flags[i] = recent_symptom or recent_positive
    return flags
