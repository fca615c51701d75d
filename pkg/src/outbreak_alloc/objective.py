"""Reward accounting and the relaxed budget objective.

The per-cluster objective is -(S1 + a2*S2 + a3_true*S3)/N: infectious days
outside quarantine, unnecessary quarantine days, and tests, normalized by
cluster size. Environment rewards always use the true per-test cost; the
multiplier-scaled active cost exists only inside policies' heads.
"""

from __future__ import annotations

from dataclasses import dataclass

from .config import CostParams
from .errors import ParameterError


@dataclass(frozen=True)
class RewardBreakdown:
    s1_norm: float
    s2_norm: float
    s3_norm: float
    reward: float


def cluster_reward(s1: float, s2: float, s3: float, n: int,
                   costs: CostParams) -> RewardBreakdown:
    """Per-capita component breakdown and the scalar reward."""
    if n < 1:
        raise ParameterError("cluster size must be at least 1")
    if min(s1, s2, s3) < 0:
        raise ParameterError("counters must be non-negative")
    s1n, s2n, s3n = s1 / n, s2 / n, s3 / n
    reward = -(s1n + costs.alpha2 * s2n + costs.alpha3_true * s3n)
    return RewardBreakdown(s1_norm=s1n, s2_norm=s2n, s3_norm=s3n, reward=reward)


def recompose_reward(s1_norm: float, s2_norm: float, s3_norm: float,
                     alpha2: float, alpha3: float) -> float:
    """Reward from already-normalized components (published-table audit)."""
    return -(s1_norm + alpha2 * s2_norm + alpha3 * s3_norm)


def lagrangian_value(trajectory, lam: float, costs: CostParams,
                     budget: int | None = None) -> float:
    """Discounted relaxed objective sum_t g^t sum_n (R_n - lam*C_n) + lam*B/(1-g).

    ``trajectory`` is an iterable of timesteps, each a list of per-cluster
    (reward, tests) pairs. C_n counts tests, matching the budget constraint's
    units. gamma = 1 makes the constant term undefined and is rejected.
    """
    if costs.gamma >= 1.0:
        raise ParameterError("lagrangian_value requires gamma < 1")
    b = costs.budget if budget is None else budget
    total = lam * b / (1.0 - costs.gamma)
    discount = 1.0
    for step in trajectory:
        total += discount * sum(r - lam * c for r, c in step)
        discount *= costs.gamma
    return total


def active_cost(m: float, alpha3_true: float) -> float:
    """Perceived per-test cost a3_active = m * a3_true."""
    if m < 0:
        raise ParameterError("multiplier must be non-negative")
    return m * alpha3_true
