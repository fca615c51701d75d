import itertools
import math

import numpy as np
import pytest
import torch

from outbreak_alloc.belief import ClusterBeliefFilter, build_hypothesis_table
from outbreak_alloc.config import EpiParams, desk_epi
from outbreak_alloc.errors import ParameterError
from outbreak_alloc.rng import Channel, u01
from outbreak_alloc.sim import spawn_cluster, step_cluster
from outbreak_alloc.value import (
    AnalyticQ, LearnedQ, QNetwork, SingleClusterEnv, TrainConfig,
    alpha3_partial, delta_q, epsilon_at, grad_penalty, load_checkpoint,
    save_checkpoint, td_train,
)


# ---------------------------------------------------------------------------
# Analytic backend
# ---------------------------------------------------------------------------

def _filtered_records(epi, seed=0, size=5, days=4, test_prob=0.4):
    cluster = spawn_cluster(seed, 0, 0, epi, size)
    cluster.active = True
    for day in range(days):
        tests = np.array([
            u01(seed, 500, i, day, Channel.SELECTION) < test_prob
            for i in range(size)
        ])
        step_cluster(cluster, epi, seed, tests, np.zeros(size, dtype=bool))
    filt = ClusterBeliefFilter(build_hypothesis_table(epi), size, epi)
    filt.advance_to(cluster, days)
    return cluster, filt


def test_certainly_uninfected_delta_q_is_minus_cost():
    epi = desk_epi(within_cluster_transmission=False)
    est = AnalyticQ(epi, alpha2=0.1)
    weights = np.zeros((1, est.table.size))
    weights[0, 0] = 1.0  # all mass on "never infected"
    for alpha in (0.0, 0.02, 0.1):
        pairs = est.q_pairs_from_weights(weights, 4, alpha)
        assert pairs[0, 1] - pairs[0, 0] == pytest.approx(-alpha, abs=1e-15)


def test_free_information_never_hurts():
    epi = desk_epi(within_cluster_transmission=False)
    est = AnalyticQ(epi, alpha2=0.1)
    for seed in range(15):
        _, filt = _filtered_records(epi, seed=seed, days=5)
        pairs = est.q_pairs_from_weights(filt.normalized_weights(), 5, 0.0)
        dq = pairs[:, 1] - pairs[:, 0]
        assert np.all(dq >= 0.0)


def test_cost_shift_identity():
    epi = desk_epi(within_cluster_transmission=False)
    est = AnalyticQ(epi, alpha2=0.1)
    _, filt = _filtered_records(epi, seed=3, days=6)
    w = filt.normalized_weights()
    base = est.q_pairs_from_weights(w, 6, 0.0)
    for alpha in (0.01, 0.05, 0.2):
        shifted = est.q_pairs_from_weights(w, 6, alpha)
        np.testing.assert_allclose(
            shifted[:, 1] - shifted[:, 0],
            base[:, 1] - base[:, 0] - alpha, atol=1e-12)


def test_last_day_test_is_pure_cost():
    # A result delivered after the episode ends carries no value.
    epi = desk_epi(within_cluster_transmission=False)
    est = AnalyticQ(epi, alpha2=0.1)
    _, filt = _filtered_records(epi, seed=1, days=4)
    pairs = est.q_pairs_from_weights(
        filt.normalized_weights(), epi.episode_days - 1, 0.05)
    np.testing.assert_allclose(pairs[:, 1] - pairs[:, 0], -0.05, atol=1e-12)


def test_analytic_requires_belief_context():
    est = AnalyticQ(desk_epi(), alpha2=0.1)
    with pytest.raises(ParameterError):
        est.q_pairs(np.zeros(16))


# ---------------------------------------------------------------------------
# Exhaustive single-test oracle on a toy cluster.
#
# Independent of the belief/value modules: enumerates latent hypotheses,
# future symptom realizations, and the test outcome, replaying the
# daily threshold-quarantine rule exactly, to find which single test most
# improves the expected objective. The analytic ranking must agree.
# ---------------------------------------------------------------------------

def _phi(x):
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


class ToyOracle:
    def __init__(self, epi: EpiParams, alpha2: float, horizon: int):
        self.epi = epi
        self.alpha2 = alpha2
        self.horizon = horizon
        m = epi.incubation_mean_days
        s = epi.incubation_std_days
        sigma2 = math.log(1 + (s / m) ** 2)
        self.mu = math.log(m) - sigma2 / 2
        self.sigma = math.sqrt(sigma2)
        self.p_exp = (epi.p_high_transmissive_index
                      * min(1.0, epi.base_transmission_prob
                            * epi.infectiousness_multiplier)
                      + (1 - epi.p_high_transmissive_index)
                      * epi.base_transmission_prob)
        self.hyps = self._enumerate_hypotheses()
        self._q_cache = {}

    def _pmf(self, k):
        hi = _phi((math.log(k + 0.5) - self.mu) / self.sigma)
        lo = _phi((math.log(k - 0.5) - self.mu) / self.sigma) if k else 0.0
        return hi - lo

    def _enumerate_hypotheses(self):
        epi = self.epi
        hyps = [(1 - self.p_exp, False, None, False)]
        for k in range(120):
            for sym in (True, False):
                w = self.p_exp * self._pmf(k) * (
                    epi.p_symptomatic_given_infected if sym
                    else 1 - epi.p_symptomatic_given_infected)
                hyps.append((w, True, k, sym))
        return hyps

    def infectious(self, h, d):
        _, infected, k, _ = h
        if not infected:
            return False
        return max(0, k - self.epi.infectious_pre_onset_days) <= d \
            < k + self.epi.infectious_post_onset_days

    def in_symptom_window(self, h, d):
        _, infected, k, sym = h
        return infected and sym and k <= d < k + self.epi.infectious_post_onset_days

    def _likelihood(self, h, symptoms, reports):
        epi = self.epi
        lik = 1.0
        for d, obs in enumerate(symptoms):
            if self.in_symptom_window(h, d):
                lik *= 1.0 if obs else 0.0
            else:
                lik *= epi.p_false_symptom_per_day if obs \
                    else 1 - epi.p_false_symptom_per_day
        for d, outcome in reports:
            p_pos = epi.test_sensitivity if self.infectious(h, d) \
                else 1 - epi.test_specificity
            lik *= p_pos if outcome == 1 else 1 - p_pos
        return lik

    def q_infected(self, symptoms, reports):
        key = (tuple(symptoms), tuple(sorted(reports)))
        if key not in self._q_cache:
            weights = [w * self._likelihood(h, symptoms, reports)
                       for h in self.hyps
                       for w in (h[0],)]
            total = sum(weights)
            infected_mass = sum(
                wt for wt, h in zip(weights, self.hyps) if h[1])
            self._q_cache[key] = infected_mass / total
        return self._q_cache[key]

    def expected_cost(self, symptoms_hist, reports_hist, t, do_test):
        """Exact expected S1 + a2*S2 from day t to the horizon."""
        epi = self.epi
        tau = self.alpha2 / (1 + self.alpha2)
        delay = epi.result_delay_days
        post_weights = [
            (h, h[0] * self._likelihood(h, symptoms_hist, reports_hist))
            for h in self.hyps
        ]
        total_mass = sum(w for _, w in post_weights)
        expected = 0.0
        future_days = list(range(t, self.horizon - 1))  # symptom branch days
        for h, w_h in post_weights:
            if w_h == 0.0:
                continue
            outcome_branches = [(None, 1.0)]
            if do_test:
                p_pos = epi.test_sensitivity if self.infectious(h, t) \
                    else 1 - epi.test_specificity
                outcome_branches = [(1, p_pos), (0, 1 - p_pos)]
            day_options = []
            for d in future_days:
                if self.in_symptom_window(h, d):
                    day_options.append(((1, 1.0),))
                else:
                    day_options.append(((1, epi.p_false_symptom_per_day),
                                        (0, 1 - epi.p_false_symptom_per_day)))
            for pattern in itertools.product(*day_options):
                p_pattern = 1.0
                future_syms = []
                for (bit, p) in pattern:
                    p_pattern *= p
                    future_syms.append(bit)
                for outcome, p_out in outcome_branches:
                    cost = 0.0
                    for d in range(t, self.horizon):
                        syms_visible = list(symptoms_hist[:t]) \
                            + future_syms[:d - t]
                        reports_visible = list(reports_hist)
                        if do_test and outcome is not None \
                                and t + delay <= d:
                            reports_visible.append((t, outcome))
                        q = self.q_infected(syms_visible, reports_visible)
                        quar = q > tau
                        if self.infectious(h, d) and not quar:
                            cost += 1.0
                        if quar and not h[1]:
                            cost += self.alpha2
                    expected += w_h * p_pattern * p_out * cost
        return expected / total_mass


def test_analytic_ranking_agrees_with_exhaustive_policy_evaluation():
    epi = desk_epi(within_cluster_transmission=False, episode_days=8)
    alpha2 = 0.1
    t = 3
    agreements = 0
    for seed in (2, 5, 11):
        size = 4
        cluster = spawn_cluster(seed, 0, 0, epi, size)
        cluster.active = True
        for day in range(t):
            tests = np.array([
                u01(seed, 900, i, day, Channel.SELECTION) < 0.5
                for i in range(size)
            ])
            step_cluster(cluster, epi, seed, tests,
                         np.zeros(size, dtype=bool))
        filt = ClusterBeliefFilter(build_hypothesis_table(epi), size, epi)
        filt.advance_to(cluster, t)
        est = AnalyticQ(epi, alpha2)
        pairs = est.q_pairs_from_weights(filt.normalized_weights(), t, 0.0)
        analytic = pairs[:, 1] - pairs[:, 0]

        oracle = ToyOracle(epi, alpha2, epi.episode_days)
        values = []
        for ind in cluster.individuals:
            reports = [(d, ind.test_outcomes[d])
                       for d in range(t) if ind.tested[d]
                       if d + epi.result_delay_days <= t]
            base = oracle.expected_cost(ind.symptom_observed, reports, t,
                                        do_test=False)
            tested = oracle.expected_cost(ind.symptom_observed, reports, t,
                                          do_test=True)
            values.append(base - tested)
        values = np.array(values)
        assert int(np.argmax(analytic)) == int(np.argmax(values))
        agreements += 1
    assert agreements == 3


# ---------------------------------------------------------------------------
# Learned backend machinery
# ---------------------------------------------------------------------------

def test_epsilon_schedule_paper_points():
    config = TrainConfig(total_steps=100_000)
    assert epsilon_at(0, config) == pytest.approx(1.0)
    assert epsilon_at(15_000, config) == pytest.approx(0.55)
    assert epsilon_at(30_000, config) == pytest.approx(0.1)
    assert epsilon_at(99_999, config) == pytest.approx(0.1)


def test_train_config_validation():
    with pytest.raises(ParameterError):
        TrainConfig(g_target=0.5)
    with pytest.raises(ParameterError):
        TrainConfig(epsilon_start=0.05, epsilon_end=0.1)
    with pytest.raises(ParameterError):
        TrainConfig(replay_capacity=10, batch_size=64)


def test_grad_penalty_hinge_arithmetic():
    # Linear net: dQ/d(alpha3 slot) is just the weight on slot 15.
    net = torch.nn.Linear(16, 2, bias=False)
    with torch.no_grad():
        net.weight.zero_()
        net.weight[0, 15] = -1.0   # exactly at the target
        net.weight[1, 15] = -0.4   # target + 0.6
    obs = torch.randn(8, 16)
    actions0 = torch.zeros(8, dtype=torch.int64)
    actions1 = torch.ones(8, dtype=torch.int64)
    assert grad_penalty(net, obs, actions0, -1.0).item() == pytest.approx(0.0)
    assert grad_penalty(net, obs, actions1, -1.0).item() == \
        pytest.approx(0.36, abs=1e-6)


def test_alpha3_partial_autograd_matches_finite_differences():
    # Double precision keeps the central-difference quotient meaningful.
    torch.manual_seed(0)
    net = QNetwork().double()
    obs = torch.rand(100, 16, dtype=torch.float64)
    actions = torch.randint(0, 2, (100,))
    exact = alpha3_partial(net, obs, actions, method="autograd").detach()
    fd = alpha3_partial(net, obs, actions, method="fd")
    np.testing.assert_allclose(exact.numpy(), fd.numpy(), rtol=1e-4,
                               atol=1e-8)


def test_null_environment_trains_to_zero_q():
    epi = desk_epi(base_transmission_prob=0.0,
                   p_false_symptom_per_day=0.0,
                   within_cluster_transmission=False)
    config = TrainConfig(total_steps=6000, replay_capacity=5000,
                         batch_size=128, warmup_steps=100, base_lr=1e-3,
                         target_update_period=500, lambda_gp=0.0,
                         alpha2=0.0, alpha3_low=0.0, alpha3_high=0.0,
                         epsilon_fraction=0.5, train_every=1, gamma=0.9,
                         seed=1)
    est = td_train(config, epi)
    probe = np.zeros((64, 16), dtype=np.float32)
    probe[:, 15] = np.linspace(0, 0.1, 64)
    q = est.q_pairs(probe)
    assert np.abs(q).max() < 0.05


def test_td_train_deterministic_and_checkpoint_round_trip(tmp_path):
    epi = desk_epi(cluster_size_max=5)
    config = TrainConfig(total_steps=600, replay_capacity=2000,
                         batch_size=64, warmup_steps=50,
                         target_update_period=200, seed=7)
    a = td_train(config, epi)
    b = td_train(config, epi)
    for pa, pb in zip(a.net.parameters(), b.net.parameters()):
        assert torch.equal(pa, pb)

    path = tmp_path / "value.ckpt"
    save_checkpoint(a, path)
    loaded = load_checkpoint(path)
    assert loaded.config == a.config
    for pa, pl in zip(a.net.parameters(), loaded.net.parameters()):
        assert torch.equal(pa, pl)
    obs = np.random.default_rng(0).random((5, 16)).astype(np.float32)
    np.testing.assert_array_equal(a.q_pairs(obs), loaded.q_pairs(obs))


def test_single_cluster_env_runs_episode():
    epi = desk_epi()
    env = SingleClusterEnv(epi, alpha2=0.1, alpha3=0.05, seed=3, episode=0)
    assert env.local_day == epi.decision_start_day
    total = 0.0
    while not env.done():
        obs, records = env.observe()
        assert obs.shape == (env.size, 16)
        total += env.step(np.zeros(env.size, dtype=bool))
    assert env.local_day == epi.episode_days
    assert math.isfinite(total)


def test_delta_q_learned_backend_shape():
    net = QNetwork()
    est = LearnedQ(net, TrainConfig(), {})
    obs = np.random.default_rng(1).random((7, 16))
    dq = delta_q(est, obs)
    assert dq.shape == (7,)
    assert np.all(np.isfinite(dq))
