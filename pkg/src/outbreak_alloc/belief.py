"""Per-individual infection beliefs and the threshold quarantine rule.

The filter is an exact Bayesian posterior under the exposure-only generative
model: a contact is infected at cluster activation with the marginal exposure
probability, draws an integer onset offset from the discretized incubation
distribution, and is symptomatic with fixed probability. Observations are the
daily symptom flags (certain inside the symptomatic window, false-positive
rate outside) and reported test outcomes (sensitivity / specificity applied
to infectiousness on the test day).

The latent space is finite, so the posterior is a reweighted mixture over
hypotheses ``{not infected} | {infected, onset offset k, symptomatic s}``
with a tail bucket for onsets too late to matter within the horizon. With
within-cluster transmission enabled the model is a deliberate per-individual
approximation (late secondary infections and cross-contact correlations are
ignored); with transmission disabled it is exact, which is what the
enumeration-oracle tests check.

Decision-time convention: the belief used on local day t conditions on
symptoms from days 0..t-1 and on test results reportable by day t.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import EpiParams
from .errors import ParameterError

# Days of belief/prediction history carried in observations.
PAST_WINDOW = 3
FUTURE_WINDOW = 3


@dataclass(frozen=True)
class HypothesisTable:
    """Finite latent hypothesis space shared by every contact of a cluster.

    Row 0 is "never infected"; rows 1.. are (onset offset, symptomatic)
    pairs, with the final two rows the beyond-horizon tail. Day tables cover
    local days 0..n_days-1 (episode plus the future prediction window).
    """

    prior: np.ndarray       # (H,)
    infected: np.ndarray    # (H,) bool
    infectious: np.ndarray  # (H, n_days) bool
    symptomatic: np.ndarray  # (H, n_days) bool
    n_days: int

    @property
    def size(self) -> int:
        return self.prior.shape[0]


def build_hypothesis_table(epi: EpiParams,
                           prior_infection: float | None = None) -> HypothesisTable:
    """Hypotheses for a contact exposed on local day 0."""
    p_inf = epi.prior_infection_prob if prior_infection is None else prior_infection
    p_sym = epi.p_symptomatic_given_infected
    n_days = epi.episode_days + FUTURE_WINDOW
    pre = epi.infectious_pre_onset_days
    post = epi.infectious_post_onset_days
    # Offsets beyond max_offset cannot be infectious or symptomatic in-horizon.
    max_offset = n_days + pre - 1
    pmf = epi.incubation_pmf(max_offset)
    tail = max(0.0, 1.0 - float(pmf.sum()))

    rows_prior = [1.0 - p_inf]
    rows_infected = [False]
    rows_inf_window: list[tuple[int, int]] = [(0, 0)]  # empty window for h0
    rows_sym_window: list[tuple[int, int]] = [(0, 0)]
    for k in range(max_offset + 1):
        for sym in (True, False):
            rows_prior.append(p_inf * pmf[k] * (p_sym if sym else 1.0 - p_sym))
            rows_infected.append(True)
            rows_inf_window.append((max(0, k - pre), k + post))
            rows_sym_window.append((k, k + post) if sym else (0, 0))
    for sym in (True, False):
        rows_prior.append(p_inf * tail * (p_sym if sym else 1.0 - p_sym))
        rows_infected.append(True)
        rows_inf_window.append((0, 0))
        rows_sym_window.append((0, 0))

    h = len(rows_prior)
    days = np.arange(n_days)
    infectious = np.zeros((h, n_days), dtype=bool)
    symptomatic = np.zeros((h, n_days), dtype=bool)
    for r, ((ilo, ihi), (slo, shi)) in enumerate(zip(rows_inf_window, rows_sym_window)):
        infectious[r] = (days >= ilo) & (days < ihi)
        symptomatic[r] = (days >= slo) & (days < shi)
    return HypothesisTable(
        prior=np.array(rows_prior),
        infected=np.array(rows_infected),
        infectious=infectious,
        symptomatic=symptomatic,
        n_days=n_days,
    )


def symptom_likelihood(table: HypothesisTable, epi: EpiParams, day: int,
                       observed: bool) -> np.ndarray:
    """P(symptom flag | hypothesis) for one day."""
    in_window = table.symptomatic[:, day]
    if observed:
        return np.where(in_window, 1.0, epi.p_false_symptom_per_day)
    return np.where(in_window, 0.0, 1.0 - epi.p_false_symptom_per_day)


def test_likelihood(table: HypothesisTable, epi: EpiParams, test_day: int,
                    outcome: int) -> np.ndarray:
    """P(test outcome | hypothesis); outcome 1 positive, 0 negative."""
    infectious = table.infectious[:, test_day]
    if outcome == 1:
        return np.where(infectious, epi.test_sensitivity,
                        1.0 - epi.test_specificity)
    return np.where(infectious, 1.0 - epi.test_sensitivity,
                    epi.test_specificity)


@dataclass(frozen=True)
class BeliefRecord:
    """Posterior summary for one contact at one decision time."""

    q_past: np.ndarray   # filtered P(infected) at days t-3..t-1
    q_now: float
    q_future: np.ndarray  # P(infectious) at days t+1..t+3
    weights: np.ndarray   # normalized posterior over hypotheses


def _q_infected(weights: np.ndarray) -> float:
    return float(1.0 - weights[0])


def _record(table: HypothesisTable, weights_raw: np.ndarray, day: int,
            q_history: list[float]) -> BeliefRecord:
    w = weights_raw / weights_raw.sum()
    q_now = _q_infected(w)
    prior_q = _q_infected(table.prior / table.prior.sum())
    q_past = np.array([
        q_history[d] if 0 <= d < len(q_history) else prior_q
        for d in range(day - PAST_WINDOW, day)
    ])
    horizon = np.arange(day + 1, day + 1 + FUTURE_WINDOW)
    horizon = np.clip(horizon, 0, table.n_days - 1)
    q_future = w @ table.infectious[:, horizon]
    return BeliefRecord(q_past=q_past, q_now=q_now,
                        q_future=np.asarray(q_future, dtype=float), weights=w)


def posterior(symptoms, reports, day: int, epi: EpiParams,
              table: HypothesisTable | None = None,
              prior_infection: float | None = None) -> BeliefRecord:
    """Decision-time belief at local ``day`` from raw observation history.

    ``symptoms`` lists the flags for days 0..len-1 (only days < ``day`` are
    visible and consumed); ``reports`` is an iterable of (test_day, outcome)
    pairs, consumed once reportable (test_day + result delay <= day).
    Empty history returns the prior.
    """
    if table is None:
        table = build_hypothesis_table(epi, prior_infection)
    delay = epi.result_delay_days
    by_reveal_day: dict[int, list[tuple[int, int]]] = {}
    for test_day, outcome in reports:
        by_reveal_day.setdefault(test_day + delay, []).append((test_day, outcome))

    w = table.prior.copy()
    q_history: list[float] = []
    for tau in range(day + 1):
        for test_day, outcome in by_reveal_day.get(tau, []):
            w = w * test_likelihood(table, epi, test_day, outcome)
        if tau == day:
            return _record(table, w, day, q_history)
        q_history.append(_q_infected(w / w.sum()))
        if tau < len(symptoms):
            w = w * symptom_likelihood(table, epi, tau, bool(symptoms[tau]))
    raise AssertionError("unreachable")


class ClusterBeliefFilter:
    """Incremental decision-time beliefs for every contact of one cluster.

    Consumes the cluster's own observation histories as local time advances;
    equivalent to calling :func:`posterior` per contact per day but shares
    the per-day likelihood updates across contacts.
    """

    def __init__(self, table: HypothesisTable, size: int, epi: EpiParams):
        self.table = table
        self.epi = epi
        self.size = size
        self.weights = np.tile(table.prior, (size, 1))
        self.q_history: list[np.ndarray] = []  # per decision day, (N,)
        self._days_done = 0     # symptom days folded in / q_history length
        self._reports_done = 0  # reveal days folded in, exclusive

    def _apply_reports_through(self, cluster, tau: int) -> None:
        delay = self.epi.result_delay_days
        while self._reports_done <= tau:
            test_day = self._reports_done - delay
            if test_day >= 0:
                for i, ind in enumerate(cluster.individuals):
                    if test_day < len(ind.tested) and ind.tested[test_day]:
                        self.weights[i] *= test_likelihood(
                            self.table, self.epi, test_day,
                            ind.test_outcomes[test_day])
            self._reports_done += 1

    def advance_to(self, cluster, t: int) -> None:
        """Fold in everything visible at decision time of local day t."""
        while self._days_done < t:
            tau = self._days_done
            self._apply_reports_through(cluster, tau)
            totals = self.weights.sum(axis=1)
            self.q_history.append(1.0 - self.weights[:, 0] / totals)
            for i, ind in enumerate(cluster.individuals):
                if tau < len(ind.symptom_observed):
                    self.weights[i] *= symptom_likelihood(
                        self.table, self.epi, tau, ind.symptom_observed[tau])
            self._days_done += 1
        self._apply_reports_through(cluster, t)

    def q_now(self) -> np.ndarray:
        totals = self.weights.sum(axis=1)
        return 1.0 - self.weights[:, 0] / totals

    def normalized_weights(self) -> np.ndarray:
        return self.weights / self.weights.sum(axis=1, keepdims=True)

    def records(self) -> list[BeliefRecord]:
        t = self._days_done
        table = self.table
        w = self.weights / self.weights.sum(axis=1, keepdims=True)
        prior_q = _q_infected(table.prior / table.prior.sum())
        q_past = np.empty((self.size, PAST_WINDOW))
        for j, d in enumerate(range(t - PAST_WINDOW, t)):
            q_past[:, j] = self.q_history[d] \
                if 0 <= d < len(self.q_history) else prior_q
        horizon = np.clip(np.arange(t + 1, t + 1 + FUTURE_WINDOW),
                          0, table.n_days - 1)
        q_future = w @ table.infectious[:, horizon]
        return [
            BeliefRecord(q_past=q_past[i], q_now=float(1.0 - w[i, 0]),
                         q_future=q_future[i], weights=w[i])
            for i in range(self.size)
        ]


def quarantine_threshold(alpha2: float) -> float:
    """Belief level above which quarantine is the lower-cost action."""
    if alpha2 < 0:
        raise ParameterError("alpha2 must be non-negative")
    return alpha2 / (1.0 + alpha2)


def quarantine_decision(q_now: float, alpha2: float) -> bool:
    """True iff quarantine; the rule is independent of test allocation."""
    return q_now > quarantine_threshold(alpha2)
