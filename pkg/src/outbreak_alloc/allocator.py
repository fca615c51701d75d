"""Deterministic global ranking layer enforcing the per-timestep budget.

Pools candidate tests from every active cluster, keeps only positive
marginal values, and executes the top ``min(B, #positive)`` of them. This
is the sole component allowed to authorize tests, which makes the hard
budget feasible by construction. Marginal values in one call must all be
conditioned on the same active test cost so they are comparable.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ParameterError


@dataclass(frozen=True)
class CandidateAction:
    cluster_id: int
    individual_id: int
    delta_q: float


def q_rank_allocate(candidates: list[CandidateAction],
                    budget: int) -> set[tuple[int, int]]:
    """Select the individuals to test; everyone else is no-test.

    Filters to delta_q > 0 (zeros are never tested), sorts descending with a
    deterministic (cluster_id, individual_id) tie-break, and takes the top
    min(budget, count). Leftover budget stays unused.
    """
    if budget < 0:
        raise ParameterError("budget must be non-negative")
    seen: set[tuple[int, int]] = set()
    for c in candidates:
        key = (c.cluster_id, c.individual_id)
        if key in seen:
            raise ParameterError(f"duplicate candidate for {key}")
        seen.add(key)
    positive = [c for c in candidates if c.delta_q > 0.0]
    positive.sort(key=lambda c: (-c.delta_q, c.cluster_id, c.individual_id))
    k = min(budget, len(positive))
    return {(c.cluster_id, c.individual_id) for c in positive[:k]}
