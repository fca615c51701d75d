"""Cost-conditioned marginal value of testing, Q(obs, {no-test, test}).

Two interchangeable backends:

* ``AnalyticQ`` scores a test by its value of information: a one-step
  lookahead over the two test-outcome branches of the exact Bayesian
  posterior, followed by a threshold-quarantine rollforward with no further
  observations. The per-day cost surrogate is min(a2*(1-q), P(infectious)),
  the expected avoidable S1/S2 cost under per-day optimal thresholding.
  Being a minimum of linear functionals of the belief it is concave, so the
  information value is non-negative and the active test cost enters exactly
  linearly: dQ(a3) = dQ(0) - a3. The analytic backend is defined on the
  belief state itself; the flat 16-dim observation is only a sufficient
  input for the learned backend.

* ``LearnedQ`` is a small feed-forward net on the 16-dim observation,
  trained by double-Q temporal-difference learning on single-cluster
  episodes with the per-test cost resampled each episode and fed through
  observation slot 15. A hinge gradient penalty pushes dQ/da3 at the taken
  action below a negative target, enforcing cost-monotone testing behavior.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from .belief import BeliefRecord, ClusterBeliefFilter, build_hypothesis_table, \
    quarantine_decision
from .config import EpiParams
from .errors import CheckpointMismatchError, ParameterError, TrainingDivergedError
from .observations import LOCAL_DIM, build_local
from .sim import draw_cluster_size, episode_seed, spawn_cluster, step_cluster

ALPHA3_SLOT = 15
CHECKPOINT_VERSION = 1


# ---------------------------------------------------------------------------
# Analytic backend
# ---------------------------------------------------------------------------

class AnalyticQ:
    """Belief-based value-of-information scorer (no learned parameters)."""

    backend = "analytic"

    def __init__(self, epi: EpiParams, alpha2: float):
        self.epi = epi
        self.alpha2 = alpha2
        self.table = build_hypothesis_table(epi)

    def q_pairs_from_weights(self, weights: np.ndarray, local_day: int,
                             alpha3_active: float) -> np.ndarray:
        """(N, 2) array of (Q_no-test, Q_test) for normalized belief rows."""
        epi = self.epi
        t = local_day
        horizon = epi.episode_days
        reveal = t + epi.result_delay_days
        w = np.atleast_2d(weights)
        n = w.shape[0]

        lik_pos = np.where(self.table.infectious[:, t],
                           epi.test_sensitivity, 1.0 - epi.test_specificity)
        p_pos = w @ lik_pos
        with np.errstate(invalid="ignore", divide="ignore"):
            w_pos = np.where(p_pos[:, None] > 0,
                             w * lik_pos / np.maximum(p_pos, 1e-300)[:, None], 0.0)
            w_neg = np.where(p_pos[:, None] < 1,
                             w * (1.0 - lik_pos)
                             / np.maximum(1.0 - p_pos, 1e-300)[:, None], 0.0)

        if reveal >= horizon:
            base = np.zeros(n)
            branch = np.zeros(n)
        else:
            window = self.table.infectious[:, reveal:horizon]
            base = self._cost_stream(w, window).sum(axis=1)
            cost_pos = self._cost_stream(w_pos, window).sum(axis=1)
            cost_neg = self._cost_stream(w_neg, window).sum(axis=1)
            branch = p_pos * cost_pos + (1.0 - p_pos) * cost_neg

        info_value = np.maximum(base - branch, 0.0)
        q_no = -base
        q_test = q_no + info_value - alpha3_active
        return np.stack([q_no, q_test], axis=1)

    def _cost_stream(self, w: np.ndarray, window: np.ndarray) -> np.ndarray:
        """Expected daily S-cost under per-day optimal thresholding."""
        q_inf = 1.0 - w[:, 0]
        rho = w @ window
        return np.minimum(self.alpha2 * (1.0 - q_inf)[:, None], rho)

    def q_pairs(self, obs: np.ndarray,
                records: list[BeliefRecord] | None = None,
                local_day: int | None = None) -> np.ndarray:
        if records is None or local_day is None:
            raise ParameterError(
                "the analytic backend scores belief states; pass the "
                "records and local_day the observations were built from")
        weights = np.stack([r.weights for r in records])
        obs = np.atleast_2d(obs)
        return self.q_pairs_from_weights(weights, local_day,
                                         float(obs[0, ALPHA3_SLOT]))


def delta_q(estimator, obs: np.ndarray,
            records: list[BeliefRecord] | None = None,
            local_day: int | None = None) -> np.ndarray:
    """Marginal benefit Q(test) - Q(no-test) for a batch of observations."""
    pairs = estimator.q_pairs(np.atleast_2d(obs), records=records,
                              local_day=local_day)
    return pairs[:, 1] - pairs[:, 0]


# ---------------------------------------------------------------------------
# Learned backend
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for TD training of the learned backend."""

    replay_capacity: int = 200_000
    batch_size: int = 512
    warmup_steps: int = 10_000
    base_lr: float = 3e-4
    grad_clip_norm: float = 1.0
    epsilon_start: float = 1.0
    epsilon_end: float = 0.1
    epsilon_fraction: float = 0.3
    target_update_period: int = 2000
    lambda_gp: float = 1.0
    g_target: float = -1.0
    alpha3_low: float = 0.0
    alpha3_high: float = 0.1
    alpha3_fixed: float | None = None  # pin a3 (fixed-cost baseline estimator)
    alpha2: float = 0.1
    gamma: float = 0.99
    total_steps: int = 200_000
    train_every: int = 4
    hidden_dim: int = 64
    seed: int = 0

    def __post_init__(self) -> None:
        if self.g_target >= 0:
            raise ParameterError("g_target must be negative")
        if self.epsilon_end > self.epsilon_start:
            raise ParameterError("epsilon_end must not exceed epsilon_start")
        if self.replay_capacity < self.batch_size:
            raise ParameterError("replay capacity must cover one batch")


def epsilon_at(step: int, config: TrainConfig) -> float:
    """Linear anneal from start to end over the first epsilon_fraction."""
    span = config.epsilon_fraction * config.total_steps
    frac = min(1.0, step / span) if span > 0 else 1.0
    return config.epsilon_start + frac * (config.epsilon_end - config.epsilon_start)


class QNetwork(nn.Module):
    # Smooth activations keep dQ/d(alpha3) continuous, which the hinge
    # gradient penalty differentiates through.
    def __init__(self, hidden_dim: int = 64):
        super().__init__()
        self.layers = nn.Sequential(
            nn.Linear(LOCAL_DIM, hidden_dim), nn.SiLU(),
            nn.Linear(hidden_dim, hidden_dim), nn.SiLU(),
            nn.Linear(hidden_dim, 2),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.layers(x)


class LearnedQ:
    """Evaluates the trained network; the 16-dim observation is sufficient."""

    backend = "learned"

    def __init__(self, net: QNetwork, config: TrainConfig, metadata: dict):
        self.net = net
        self.config = config
        self.metadata = metadata

    def q_pairs(self, obs: np.ndarray, records=None, local_day=None) -> np.ndarray:
        with torch.no_grad():
            x = torch.as_tensor(np.atleast_2d(obs), dtype=torch.float32)
            return self.net(x).numpy().astype(np.float64)


def alpha3_partial(net: QNetwork, obs: torch.Tensor, actions: torch.Tensor,
                   method: str = "autograd", fd_step: float = 1e-4) -> torch.Tensor:
    """dQ(obs, a)/d(alpha3 slot) per row, exactly or by central differences."""
    if method == "autograd":
        x = obs.clone().requires_grad_(True)
        q = net(x).gather(1, actions.view(-1, 1)).squeeze(1)
        (grad,) = torch.autograd.grad(q.sum(), x, create_graph=True)
        return grad[:, ALPHA3_SLOT]
    if method == "fd":
        with torch.no_grad():
            hi = obs.clone()
            lo = obs.clone()
            hi[:, ALPHA3_SLOT] += fd_step
            lo[:, ALPHA3_SLOT] -= fd_step
            q_hi = net(hi).gather(1, actions.view(-1, 1)).squeeze(1)
            q_lo = net(lo).gather(1, actions.view(-1, 1)).squeeze(1)
        return (q_hi - q_lo) / (2.0 * fd_step)
    raise ParameterError(f"unknown method {method!r}")


def grad_penalty(net: QNetwork, obs: torch.Tensor, actions: torch.Tensor,
                 g_target: float) -> torch.Tensor:
    """Mean squared hinge on the alpha3-partial at the taken actions."""
    partial = alpha3_partial(net, obs, actions, method="autograd")
    return torch.clamp(partial - g_target, min=0.0).pow(2).mean()


# ---------------------------------------------------------------------------
# Single-cluster training environment
# ---------------------------------------------------------------------------

class SingleClusterEnv:
    """One cluster, threshold quarantine, unbudgeted per-individual testing.

    Used for DQN training and for the tests-vs-cost monotonicity sweeps.
    Rewards use the episode's own per-test cost (the regime being learned).
    """

    def __init__(self, epi: EpiParams, alpha2: float, alpha3: float,
                 seed: int, episode: int, size: int | None = None):
        self.epi = epi
        self.alpha2 = alpha2
        self.alpha3 = alpha3
        self.seed = episode_seed(seed, episode)
        if size is None:
            size = draw_cluster_size(self.seed, 0, epi)
        self.cluster = spawn_cluster(self.seed, 0, 0, epi, size)
        self.cluster.active = True
        self.filter = ClusterBeliefFilter(
            build_hypothesis_table(epi), size, epi)
        self.size = size
        # Burn through the tracing delay with no interventions.
        none = np.zeros(size, dtype=bool)
        for _ in range(epi.decision_start_day):
            step_cluster(self.cluster, epi, self.seed, none, none)

    @property
    def local_day(self) -> int:
        return self.cluster.local_day

    def done(self) -> bool:
        return self.cluster.finished(self.epi)

    def observe(self) -> tuple[np.ndarray, list[BeliefRecord]]:
        t = self.local_day
        self.filter.advance_to(self.cluster, t)
        records = self.filter.records()
        obs = np.stack([
            build_local(ind, rec, self.alpha3, t, self.epi)
            for ind, rec in zip(self.cluster.individuals, records)
        ])
        return obs, records

    def step(self, test_actions: np.ndarray) -> float:
        q_now = self.filter.q_now()
        quars = np.array([
            quarantine_decision(float(q), self.alpha2) for q in q_now
        ])
        ds1, ds2, ds3 = step_cluster(self.cluster, self.epi, self.seed,
                                     test_actions, quars)
        return -(ds1 + self.alpha2 * ds2 + self.alpha3 * ds3) / self.size


# ---------------------------------------------------------------------------
# TD training
# ---------------------------------------------------------------------------

class ReplayBuffer:
    def __init__(self, capacity: int):
        self.capacity = capacity
        self.obs = np.zeros((capacity, LOCAL_DIM), dtype=np.float32)
        self.action = np.zeros(capacity, dtype=np.int64)
        self.reward = np.zeros(capacity, dtype=np.float32)
        self.next_obs = np.zeros((capacity, LOCAL_DIM), dtype=np.float32)
        self.done = np.zeros(capacity, dtype=np.float32)
        self.pos = 0
        self.full = False

    def __len__(self) -> int:
        return self.capacity if self.full else self.pos

    def add(self, obs, action, reward, next_obs, done) -> None:
        i = self.pos
        self.obs[i] = obs
        self.action[i] = action
        self.reward[i] = reward
        self.next_obs[i] = next_obs
        self.done[i] = done
        self.pos += 1
        if self.pos == self.capacity:
            self.pos = 0
            self.full = True

    def sample(self, rng: np.random.Generator, batch_size: int):
        idx = rng.integers(0, len(self), size=batch_size)
        return (self.obs[idx], self.action[idx], self.reward[idx],
                self.next_obs[idx], self.done[idx])


def _cosine_lr(step: int, config: TrainConfig) -> float:
    if step < config.warmup_steps:
        return config.base_lr * (step + 1) / config.warmup_steps
    span = max(1, config.total_steps - config.warmup_steps)
    frac = min(1.0, (step - config.warmup_steps) / span)
    return config.base_lr * 0.5 * (1.0 + math.cos(math.pi * frac))


def td_train(config: TrainConfig, epi: EpiParams,
             progress: bool = False) -> LearnedQ:
    """Train the generalized (or fixed-cost) estimator; deterministic by seed.

    One environment step = one simulated cluster-day; every contact
    contributes a transition with the shared per-capita day reward.
    """
    torch.set_num_threads(1)
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    net = QNetwork(config.hidden_dim)
    target = QNetwork(config.hidden_dim)
    target.load_state_dict(net.state_dict())
    optim = torch.optim.Adam(net.parameters(), lr=config.base_lr)
    buffer = ReplayBuffer(config.replay_capacity)

    def sample_alpha3() -> float:
        if config.alpha3_fixed is not None:
            return config.alpha3_fixed
        return float(rng.uniform(config.alpha3_low, config.alpha3_high))

    episode = 0
    env = SingleClusterEnv(epi, config.alpha2, sample_alpha3(),
                           config.seed, episode)
    obs, _ = env.observe()

    for step in range(config.total_steps):
        eps = epsilon_at(step, config)
        n = env.size
        explore = rng.random(n) < eps
        random_actions = rng.integers(0, 2, size=n)
        with torch.no_grad():
            q = net(torch.as_tensor(obs, dtype=torch.float32)).numpy()
        greedy = q.argmax(axis=1)
        actions = np.where(explore, random_actions, greedy)

        reward = env.step(actions.astype(bool))
        done = env.done()
        if done:
            next_obs = np.zeros_like(obs)
        else:
            next_obs, _ = env.observe()
        for i in range(n):
            buffer.add(obs[i], actions[i], reward, next_obs[i], float(done))
        if done:
            episode += 1
            env = SingleClusterEnv(epi, config.alpha2, sample_alpha3(),
                                   config.seed, episode)
            obs, _ = env.observe()
        else:
            obs = next_obs

        if len(buffer) >= config.batch_size and step % config.train_every == 0:
            for group in optim.param_groups:
                group["lr"] = _cosine_lr(step, config)
            b_obs, b_act, b_rew, b_next, b_done = buffer.sample(
                rng, config.batch_size)
            t_obs = torch.as_tensor(b_obs)
            t_next = torch.as_tensor(b_next)
            with torch.no_grad():
                next_greedy = net(t_next).argmax(dim=1, keepdim=True)
                next_q = target(t_next).gather(1, next_greedy).squeeze(1)
                td_target = torch.as_tensor(b_rew) + config.gamma \
                    * (1.0 - torch.as_tensor(b_done)) * next_q
            q_taken = net(t_obs).gather(
                1, torch.as_tensor(b_act).view(-1, 1)).squeeze(1)
            loss_td = nn.functional.mse_loss(q_taken, td_target)
            loss = loss_td
            if config.lambda_gp > 0:
                loss = loss + config.lambda_gp * grad_penalty(
                    net, t_obs, torch.as_tensor(b_act), config.g_target)
            if not torch.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at step {step}: td={loss_td.item()}")
            optim.zero_grad()
            loss.backward()
            nn.utils.clip_grad_norm_(net.parameters(), config.grad_clip_norm)
            optim.step()
            if progress and step % 20_000 == 0:
                print(f"  td_train step {step}: loss {loss.item():.5f}")

        if step % config.target_update_period == 0:
            target.load_state_dict(net.state_dict())

    metadata = {
        "alpha2": config.alpha2,
        "alpha3_low": config.alpha3_low,
        "alpha3_high": config.alpha3_high,
        "alpha3_fixed": config.alpha3_fixed,
        "episodes": episode,
    }
    return LearnedQ(net, config, metadata)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(estimator: LearnedQ, path: str | Path) -> None:
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "backend": estimator.backend,
        "state_dict": estimator.net.state_dict(),
        "train_config": asdict(estimator.config),
        "metadata": estimator.metadata,
        "torch_rng_state": torch.get_rng_state(),
    }
    torch.save(payload, path)


def load_checkpoint(path: str | Path) -> LearnedQ:
    payload = torch.load(path, weights_only=False)
    version = payload.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointMismatchError(
            f"checkpoint format {version!r} unsupported")
    if payload.get("backend") != "learned":
        raise CheckpointMismatchError(
            f"not a value-estimator checkpoint: {payload.get('backend')!r}")
    config = TrainConfig(**payload["train_config"])
    net = QNetwork(config.hidden_dim)
    net.load_state_dict(payload["state_dict"])
    return LearnedQ(net, config, payload["metadata"])
