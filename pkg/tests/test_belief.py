import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import oracle_posterior, simulate_history as _simulate_history
from outbreak_alloc.belief import (
    ClusterBeliefFilter, build_hypothesis_table, posterior,
    quarantine_decision, quarantine_threshold,
)
from outbreak_alloc.config import EpiParams, desk_epi
from outbreak_alloc.errors import ParameterError


def test_filter_matches_enumeration_oracle():
    epi = desk_epi(within_cluster_transmission=False)
    table = build_hypothesis_table(epi)
    horizon = 6
    checked = 0
    for seed in range(12):
        cluster = _simulate_history(epi, seed, 3, horizon)
        for day in range(1, horizon + 1):
            for ind in cluster.individuals:
                reports = [(d, ind.test_outcomes[d])
                           for d in range(min(day, len(ind.tested)))
                           if ind.tested[d]]
                rec = posterior(ind.symptom_observed[:day], reports, day,
                                epi, table=table)
                q_ref, qf_ref = oracle_posterior(
                    epi, ind.symptom_observed, reports, day, table.n_days)
                assert rec.q_now == pytest.approx(q_ref, abs=1e-9)
                np.testing.assert_allclose(rec.q_future, qf_ref, atol=1e-9)
                checked += 1
    assert checked >= 100


def test_incremental_filter_matches_pure_posterior():
    epi = desk_epi(within_cluster_transmission=False)
    table = build_hypothesis_table(epi)
    cluster = _simulate_history(epi, 3, 3, 8)
    filt = ClusterBeliefFilter(table, 3, epi)
    for day in range(9):
        filt.advance_to(cluster, day)
        records = filt.records()
        for i, ind in enumerate(cluster.individuals):
            reports = [(d, ind.test_outcomes[d])
                       for d in range(min(day, len(ind.tested)))
                       if ind.tested[d]]
            rec = posterior(ind.symptom_observed[:day], reports, day, epi,
                            table=table)
            assert records[i].q_now == pytest.approx(rec.q_now, abs=1e-12)
            np.testing.assert_allclose(records[i].q_past, rec.q_past,
                                       atol=1e-12)
            np.testing.assert_allclose(records[i].q_future, rec.q_future,
                                       atol=1e-12)


def test_empty_history_returns_prior():
    epi = EpiParams()
    rec = posterior([], [], 0, epi)
    assert rec.q_now == pytest.approx(epi.prior_infection_prob, abs=1e-12)
    np.testing.assert_allclose(rec.q_past,
                               np.full(3, epi.prior_infection_prob),
                               atol=1e-12)


def test_positive_bayes_factor_on_infectious_hypotheses():
    # A reported positive multiplies posterior odds of "infectious on the
    # test day" by sensitivity/(1-specificity) = 0.71/0.01 = 71.
    epi = EpiParams()
    table = build_hypothesis_table(epi)
    before = posterior([], [], 2, epi, table=table)
    after = posterior([], [(1, 1)], 2, epi, table=table)
    inf_day1 = table.infectious[:, 1]

    def odds(rec):
        p = rec.weights[inf_day1].sum()
        return p / (1.0 - p)

    factor = epi.test_sensitivity / (1.0 - epi.test_specificity)
    assert factor == pytest.approx(71.0)
    assert odds(after) / odds(before) == pytest.approx(71.0, rel=1e-9)


def test_positive_raises_negative_lowers_q():
    epi = EpiParams()
    table = build_hypothesis_table(epi)
    for day in range(1, 10):
        for prior_reports in ([], [(0, 1)], [(0, 0)]):
            base = posterior([], prior_reports, day, epi, table=table)
            up = posterior([], prior_reports + [(day - 1, 1)], day, epi,
                           table=table)
            down = posterior([], prior_reports + [(day - 1, 0)], day, epi,
                             table=table)
            assert up.q_now >= base.q_now - 1e-12
            assert down.q_now <= base.q_now + 1e-12


def test_calibration_under_generative_model():
    # Under exposure-only dynamics the filter is exact, so in every belief
    # bin the realized infected fraction must sit inside the binomial band.
    epi = desk_epi(within_cluster_transmission=False)
    table = build_hypothesis_table(epi)
    pairs = []  # (q_now, infected)
    for seed in range(1500):
        cluster = _simulate_history(epi, seed, 8, 6)
        filt = ClusterBeliefFilter(table, 8, epi)
        filt.advance_to(cluster, 6)
        for q, ind in zip(filt.q_now(), cluster.individuals):
            pairs.append((float(q), ind.infected))
    assert len(pairs) >= 10_000
    qs = np.array([q for q, _ in pairs])
    inf = np.array([i for _, i in pairs], dtype=float)
    for lo in np.arange(0.0, 1.0, 0.05):
        mask = (qs >= lo) & (qs < lo + 0.05)
        n = int(mask.sum())
        if n < 30:
            continue
        p = float(qs[mask].mean())
        band = 2.576 * math.sqrt(max(p * (1 - p), 1e-9) / n)
        assert abs(float(inf[mask].mean()) - p) <= band + 1.0 / n


def test_threshold_formula():
    assert quarantine_threshold(0.1) == pytest.approx(1 / 11)
    assert quarantine_decision(0.10, 0.1) is True
    assert quarantine_decision(0.09, 0.1) is False
    assert quarantine_decision(1e-9, 0.0) is True
    assert quarantine_decision(0.0, 0.0) is False
    with pytest.raises(ParameterError):
        quarantine_decision(0.5, -0.2)


def test_threshold_minimizes_two_branch_cost():
    # Oracle: expected one-step cost is alpha2*(1-q) if quarantined else q.
    for q in np.arange(0.0, 1.0001, 0.01):
        for alpha2 in (0.0, 0.05, 0.1, 0.3, 1.0, 5.0):
            decision = quarantine_decision(float(q), alpha2)
            cost = alpha2 * (1 - q) if decision else q
            assert cost <= min(alpha2 * (1 - q), q) + 1e-15


@given(st.floats(min_value=0.0, max_value=1.0),
       st.floats(min_value=0.0, max_value=10.0))
def test_threshold_optimality_property(q, alpha2):
    decision = quarantine_decision(q, alpha2)
    chosen = alpha2 * (1 - q) if decision else q
    assert chosen <= min(alpha2 * (1 - q), q) + 1e-12
