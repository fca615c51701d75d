"""Global multiplier controllers: Fixed-M, Bin-M search, and learned PPO.

Each controller emits one scalar multiplier per timestep; the perceived
per-test cost handed to local policies is ``m_t * alpha3_true``. Controllers
never enforce feasibility themselves; the ranking layer does. They differ
only in how much work one decision costs, which the ``last_evaluations``
counter instruments:

  Fixed-M   0 model evaluations
  Bin-M     <= max_evals demand evaluations (binary search on the monotone
            demand curve, engaged only when demand at m=1 overflows B)
  PPO       exactly 1 policy forward
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable

import numpy as np
import torch
import torch.nn as nn

from .config import CostParams
from .errors import CheckpointMismatchError, ParameterError, TrainingDivergedError
from .observations import CLUSTER_DIM, GLOBAL_DIM
from .value import CHECKPOINT_VERSION

BIN_SEARCH_MAX_EVALS = 30


@dataclass
class DecisionContext:
    """Everything a controller may consult for one timestep's decision."""

    global_obs: np.ndarray
    budget: int
    demand_at: Callable[[float], int]  # unconstrained demand at multiplier m


class FixedM:
    """Emits a constant multiplier every timestep."""

    kind = "fixed_m"

    def __init__(self, m: float, costs: CostParams):
        if not costs.m_min <= m <= costs.m_max:
            raise ParameterError(
                f"m={m} outside [{costs.m_min}, {costs.m_max}]")
        self.m = m
        self.costs = costs
        self.last_evaluations = 0

    def decide(self, ctx: DecisionContext) -> float:
        self.last_evaluations = 0
        return self.m


def fixed_m(m: float, costs: CostParams) -> FixedM:
    return FixedM(m, costs)


def bin_search_multiplier(demand_at: Callable[[float], int], budget: int,
                          m_min: float, m_max: float,
                          max_evals: int = BIN_SEARCH_MAX_EVALS) -> tuple[float, int]:
    """Smallest grid-refined m with demand(m) <= budget, assuming demand is
    non-increasing in m. Returns (m, evaluations used).

    Engages only when demand at the true cost (m=1) overflows the budget;
    otherwise returns 1 immediately. Returns m_max if even full suppression
    cannot fit (the ranking layer still guarantees feasibility).
    """
    if budget == 0:
        return m_max, 0
    evals = 1
    if demand_at(1.0) <= budget:
        return 1.0, evals
    evals += 1
    if demand_at(m_max) > budget:
        return m_max, evals
    lo, hi = 1.0, m_max  # demand(lo) > B, demand(hi) <= B
    resolution = (m_max - m_min) / 2.0 ** 30
    while evals < max_evals and hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        evals += 1
        if demand_at(mid) <= budget:
            hi = mid
        else:
            lo = mid
    return hi, evals


class BinSearchM:
    """Reactive price coordination: search m until demand fits the budget."""

    kind = "bin_m"

    def __init__(self, costs: CostParams, max_evals: int = BIN_SEARCH_MAX_EVALS):
        self.costs = costs
        self.max_evals = max_evals
        self.last_evaluations = 0

    def decide(self, ctx: DecisionContext) -> float:
        m, evals = bin_search_multiplier(
            ctx.demand_at, ctx.budget, self.costs.m_min, self.costs.m_max,
            self.max_evals)
        self.last_evaluations = evals
        return m


# ---------------------------------------------------------------------------
# PPO controller
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PpoConfig:
    n_parallel_envs: int = 4
    rollout_len: int = 256
    epochs: int = 4
    minibatch: int = 256
    gamma: float = 0.99
    gae_lambda: float = 0.90
    learning_rate: float = 3e-5
    weight_decay: float = 1e-4
    clip_coef: float = 0.10
    value_coef: float = 0.50
    entropy_coef: float = 0.001
    kl_stop: float = 0.15
    grad_clip_norm: float = 0.5
    m_min: float = 0.25
    m_max: float = 4.0
    hidden_dim: int = 64
    total_steps: int = 50_000
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.m_min < self.m_max:
            raise ParameterError("m_min must be below m_max")
        if self.clip_coef <= 0:
            raise ParameterError("clip coefficient must be positive")
        if not 0.0 < self.gamma < 1.0:
            raise ParameterError("gamma must lie in (0, 1)")


class GlobalPolicyNet(nn.Module):
    """Actor-critic over the pooled global observation.

    Cluster blocks are embedded individually and mean-pooled over the
    activity mask, so the policy is permutation-invariant in cluster slots
    and indifferent to padding.
    """

    def __init__(self, n_max: int, hidden_dim: int = 64):
        super().__init__()
        self.n_max = n_max
        self.cluster_embed = nn.Linear(CLUSTER_DIM, hidden_dim)
        self.global_embed = nn.Linear(GLOBAL_DIM, hidden_dim)
        self.trunk = nn.Sequential(
            nn.Linear(2 * hidden_dim, hidden_dim), nn.ReLU(),
            nn.Linear(hidden_dim, hidden_dim), nn.ReLU(),
        )
        self.actor_mean = nn.Linear(hidden_dim, 1)
        self.actor_log_std = nn.Parameter(torch.zeros(1))
        self.critic = nn.Linear(hidden_dim, 1)

    def forward(self, obs: torch.Tensor):
        g = obs[:, :GLOBAL_DIM]
        blocks = obs[:, GLOBAL_DIM:].view(-1, self.n_max, CLUSTER_DIM)
        mask = blocks[..., -1:]
        embedded = torch.relu(self.cluster_embed(blocks)) * mask
        denom = mask.sum(dim=1).clamp(min=1.0)
        pooled = embedded.sum(dim=1) / denom
        h = self.trunk(torch.cat(
            [torch.relu(self.global_embed(g)), pooled], dim=1))
        return (self.actor_mean(h).squeeze(-1),
                self.actor_log_std.expand(obs.shape[0]),
                self.critic(h).squeeze(-1))


def raw_action_to_multiplier(u, m_min: float, m_max: float):
    """Sigmoid squash and linear rescale into (m_min, m_max)."""
    if isinstance(u, torch.Tensor):
        return m_min + torch.sigmoid(u) * (m_max - m_min)
    return m_min + (m_max - m_min) / (1.0 + math.exp(-u))


class PpoController:
    kind = "hier_ppo"

    def __init__(self, net: GlobalPolicyNet, config: PpoConfig):
        self.net = net
        self.config = config
        self.last_evaluations = 0

    def decide(self, ctx: DecisionContext) -> float:
        """Deterministic evaluation: the Gaussian mean, one forward pass."""
        with torch.no_grad():
            obs = torch.as_tensor(ctx.global_obs, dtype=torch.float32).view(1, -1)
            mean, _, _ = self.net(obs)
        self.last_evaluations = 1
        return float(raw_action_to_multiplier(
            mean.item(), self.config.m_min, self.config.m_max))


def decide(controller, ctx: DecisionContext) -> float:
    """One multiplier per timestep from any controller kind."""
    return controller.decide(ctx)


def clipped_surrogate_loss(ratios: torch.Tensor, advantages: torch.Tensor,
                           clip_coef: float) -> torch.Tensor:
    """Negated clipped PPO objective, -E[min(rA, clip(r)A)]."""
    unclipped = ratios * advantages
    clipped = torch.clamp(ratios, 1.0 - clip_coef, 1.0 + clip_coef) * advantages
    return -torch.min(unclipped, clipped).mean()


class RunningMoments:
    """Streaming mean/variance (Chan parallel update) for advantages."""

    def __init__(self):
        self.count = 0.0
        self.mean = 0.0
        self.m2 = 0.0

    def update(self, batch: np.ndarray) -> None:
        n = batch.size
        if n == 0:
            return
        b_mean = float(batch.mean())
        b_var = float(batch.var())
        delta = b_mean - self.mean
        total = self.count + n
        self.mean += delta * n / total
        self.m2 += b_var * n + delta ** 2 * self.count * n / total
        self.count = total

    @property
    def std(self) -> float:
        if self.count < 2:
            return 1.0
        return math.sqrt(max(self.m2 / self.count, 1e-8))


def gae_advantages(rewards: np.ndarray, values: np.ndarray, dones: np.ndarray,
                   last_values: np.ndarray, gamma: float,
                   lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimation over a (T, E) rollout block."""
    steps, n_envs = rewards.shape
    adv = np.zeros((steps, n_envs))
    last_gae = np.zeros(n_envs)
    next_values = last_values
    for t in reversed(range(steps)):
        non_terminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_values * non_terminal - values[t]
        last_gae = delta + gamma * lam * non_terminal * last_gae
        adv[t] = last_gae
        next_values = values[t]
    return adv, adv + values


def ppo_train(config: PpoConfig, env_factory, n_max: int,
              progress: bool = False) -> PpoController:
    """Train the multiplier policy on full multi-cluster rollouts.

    ``env_factory(env_index, episode)`` must return an environment exposing
    ``observe() -> global_obs`` and ``step(m) -> (reward, done)``; the
    factory should randomize budgets across episodes so the policy is robust
    across resource regimes.
    """
    torch.set_num_threads(1)
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    net = GlobalPolicyNet(n_max, config.hidden_dim)
    optim = torch.optim.AdamW(net.parameters(), lr=config.learning_rate,
                              weight_decay=config.weight_decay)
    moments = RunningMoments()

    n_envs = config.n_parallel_envs
    episodes = list(range(n_envs))
    envs = [env_factory(i, episodes[i]) for i in range(n_envs)]
    obs = np.stack([e.observe() for e in envs])
    next_episode = n_envs

    obs_dim = obs.shape[1]
    steps_done = 0
    while steps_done < config.total_steps:
        horizon = config.rollout_len
        roll_obs = np.zeros((horizon, n_envs, obs_dim), dtype=np.float32)
        roll_actions = np.zeros((horizon, n_envs), dtype=np.float32)
        roll_logprob = np.zeros((horizon, n_envs), dtype=np.float32)
        roll_rewards = np.zeros((horizon, n_envs), dtype=np.float32)
        roll_dones = np.zeros((horizon, n_envs), dtype=np.float32)
        roll_values = np.zeros((horizon, n_envs), dtype=np.float32)

        for t in range(horizon):
            with torch.no_grad():
                t_obs = torch.as_tensor(obs, dtype=torch.float32)
                mean, log_std, value = net(t_obs)
                std = log_std.exp()
                noise = torch.as_tensor(
                    rng.standard_normal(n_envs), dtype=torch.float32)
                u = mean + std * noise
                logprob = (-0.5 * ((u - mean) / std) ** 2
                           - log_std - 0.5 * math.log(2 * math.pi))
            roll_obs[t] = obs
            roll_actions[t] = u.numpy()
            roll_logprob[t] = logprob.numpy()
            roll_values[t] = value.numpy()
            for i, env in enumerate(envs):
                m = float(raw_action_to_multiplier(
                    float(u[i]), config.m_min, config.m_max))
                reward, done = env.step(m)
                roll_rewards[t, i] = reward
                roll_dones[t, i] = float(done)
                if done:
                    envs[i] = env_factory(i, next_episode)
                    next_episode += 1
            obs = np.stack([e.observe() for e in envs])
        steps_done += horizon * n_envs

        with torch.no_grad():
            _, _, last_values = net(torch.as_tensor(obs, dtype=torch.float32))
        adv, returns = gae_advantages(
            roll_rewards, roll_values, roll_dones, last_values.numpy(),
            config.gamma, config.gae_lambda)
        moments.update(adv)
        adv_norm = (adv - moments.mean) / moments.std

        flat_obs = torch.as_tensor(roll_obs.reshape(-1, obs_dim))
        flat_actions = torch.as_tensor(roll_actions.reshape(-1))
        flat_logprob = torch.as_tensor(roll_logprob.reshape(-1))
        flat_adv = torch.as_tensor(adv_norm.reshape(-1), dtype=torch.float32)
        flat_returns = torch.as_tensor(returns.reshape(-1), dtype=torch.float32)
        batch = flat_obs.shape[0]

        stop = False
        for _ in range(config.epochs):
            if stop:
                break
            perm = rng.permutation(batch)
            for start in range(0, batch, config.minibatch):
                idx = torch.as_tensor(perm[start:start + config.minibatch])
                mean, log_std, value = net(flat_obs[idx])
                std = log_std.exp()
                logprob = (-0.5 * ((flat_actions[idx] - mean) / std) ** 2
                           - log_std - 0.5 * math.log(2 * math.pi))
                log_ratio = logprob - flat_logprob[idx]
                ratio = log_ratio.exp()
                with torch.no_grad():
                    approx_kl = ((ratio - 1.0) - log_ratio).mean().item()
                if approx_kl > config.kl_stop:
                    stop = True
                    break
                entropy = (0.5 * (1.0 + math.log(2 * math.pi)) + log_std).mean()
                loss_pi = clipped_surrogate_loss(ratio, flat_adv[idx],
                                                 config.clip_coef)
                loss_v = nn.functional.mse_loss(value, flat_returns[idx])
                loss = loss_pi + config.value_coef * loss_v \
                    - config.entropy_coef * entropy
                if not torch.isfinite(loss):
                    raise TrainingDivergedError(
                        f"non-finite PPO loss at {steps_done} steps")
                optim.zero_grad()
                loss.backward()
                nn.utils.clip_grad_norm_(net.parameters(), config.grad_clip_norm)
                optim.step()
        if progress:
            print(f"  ppo_train {steps_done}/{config.total_steps} steps, "
                  f"mean reward {roll_rewards.mean():.4f}")

    return PpoController(net, config)


def save_controller(controller: PpoController, path: str | Path) -> None:
    torch.save({
        "format_version": CHECKPOINT_VERSION,
        "backend": "ppo",
        "state_dict": controller.net.state_dict(),
        "ppo_config": asdict(controller.config),
        "n_max": controller.net.n_max,
        "torch_rng_state": torch.get_rng_state(),
    }, path)


def load_controller(path: str | Path) -> PpoController:
    payload = torch.load(path, weights_only=False)
    if payload.get("format_version") != CHECKPOINT_VERSION:
        raise CheckpointMismatchError(
            f"checkpoint format {payload.get('format_version')!r} unsupported")
    if payload.get("backend") != "ppo":
        raise CheckpointMismatchError(
            f"not a controller checkpoint: {payload.get('backend')!r}")
    config = PpoConfig(**payload["ppo_config"])
    net = GlobalPolicyNet(payload["n_max"], config.hidden_dim)
    net.load_state_dict(payload["state_dict"])
    return PpoController(net, config)
