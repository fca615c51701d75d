"""Dataclass configs for the simulator, costs, and system layout.

Default epidemiological values follow the SARS-CoV-2 parameter set used
throughout: lognormal incubation (mean 1.57 d, sd 0.65 d of the distribution
itself), a 7-day infectious window spanning 2 days before to 5 days after
symptom onset, imperfect tests (sensitivity 0.71, specificity 0.99), a
small fraction (0.109) of highly transmissive index cases amplifying the
0.03 per-contact transmission probability by 24.4, 30-day cluster episodes
with decisions starting on day 3, and a 1-day test reporting delay.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParameterError

CONFIG_SCHEMA_VERSION = 1

SYNCHRONOUS = "synchronous"
ASYNCHRONOUS = "asynchronous"


def _check_prob(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise ParameterError(f"{name} must lie in [0, 1], got {value}")


@dataclass(frozen=True)
class EpiParams:
    """Per-cluster disease, observation, and testing parameters."""

    incubation_mean_days: float = 1.57
    incubation_std_days: float = 0.65
    infectious_pre_onset_days: int = 2
    infectious_post_onset_days: int = 5
    base_transmission_prob: float = 0.03
    p_symptomatic_given_infected: float = 0.8
    p_false_symptom_per_day: float = 0.01
    p_high_transmissive_index: float = 0.109
    infectiousness_multiplier: float = 24.4
    test_sensitivity: float = 0.71
    test_specificity: float = 0.99
    tracing_delay_days: int = 3
    result_delay_days: int = 1
    cluster_size_min: int = 2
    cluster_size_max: int = 40
    episode_days: int = 30
    decision_start_day: int = 3
    # Fully-mixed daily transmission among non-quarantined members; set False
    # for exposure-only dynamics (the belief filter's exact generative model).
    within_cluster_transmission: bool = True

    def __post_init__(self) -> None:
        for name in (
            "base_transmission_prob",
            "p_symptomatic_given_infected",
            "p_false_symptom_per_day",
            "p_high_transmissive_index",
            "test_sensitivity",
            "test_specificity",
        ):
            _check_prob(name, getattr(self, name))
        if self.incubation_std_days <= 0:
            raise ParameterError("incubation_std_days must be positive")
        if self.cluster_size_min < 2:
            raise ParameterError("cluster_size_min must be at least 2")
        if self.cluster_size_min > self.cluster_size_max:
            raise ParameterError("cluster_size_min exceeds cluster_size_max")
        if not 0 <= self.decision_start_day < self.episode_days:
            raise ParameterError("decision_start_day must precede episode_days")
        if self.result_delay_days < 1:
            raise ParameterError("result_delay_days must be at least 1")

    @property
    def lognormal_mu_sigma(self) -> tuple[float, float]:
        """(mu, sigma) of ln(incubation) matching the distribution mean/std."""
        m = self.incubation_mean_days
        s = self.incubation_std_days
        sigma2 = math.log(1.0 + (s / m) ** 2)
        return math.log(m) - 0.5 * sigma2, math.sqrt(sigma2)

    @property
    def infectious_window_len(self) -> int:
        return self.infectious_pre_onset_days + self.infectious_post_onset_days

    def exposure_prob(self, high_transmissive: bool) -> float:
        p = self.base_transmission_prob
        if high_transmissive:
            p = min(1.0, p * self.infectiousness_multiplier)
        return p

    @property
    def prior_infection_prob(self) -> float:
        """Marginal per-contact exposure infection probability over index type."""
        ph = self.p_high_transmissive_index
        return ph * self.exposure_prob(True) + (1.0 - ph) * self.exposure_prob(False)

    def incubation_cdf(self, x: float) -> float:
        """CDF of the continuous incubation time at x days."""
        if x <= 0.0:
            return 0.0
        mu, sigma = self.lognormal_mu_sigma
        return 0.5 * (1.0 + math.erf((math.log(x) - mu) / (sigma * math.sqrt(2.0))))

    def incubation_pmf(self, max_offset: int) -> np.ndarray:
        """P(onset offset = k) for k in 0..max_offset under round-to-nearest.

        Offset k corresponds to a continuous draw in [k-0.5, k+0.5); the
        residual tail mass 1 - sum(pmf) is onset beyond max_offset.
        """
        pmf = np.empty(max_offset + 1)
        lo = 0.0
        for k in range(max_offset + 1):
            hi = self.incubation_cdf(k + 0.5)
            pmf[k] = hi - lo
            lo = hi
        return pmf


@dataclass(frozen=True)
class CostParams:
    """Reward weights, discounting, budget, and the multiplier range."""

    alpha2: float = 0.1
    alpha3_true: float = 0.05
    gamma: float = 0.99
    budget: int = 5
    m_min: float = 0.25
    m_max: float = 4.0

    def __post_init__(self) -> None:
        if self.alpha2 < 0 or self.alpha3_true < 0:
            raise ParameterError("cost weights must be non-negative")
        if not 0.0 < self.gamma <= 1.0:
            raise ParameterError("gamma must lie in (0, 1]")
        if self.budget < 0:
            raise ParameterError("budget must be non-negative")
        if not self.m_min < self.m_max:
            raise ParameterError("m_min must be below m_max")


@dataclass(frozen=True)
class SystemConfig:
    """A multi-cluster scenario: epi dynamics, costs, arrivals, capacity."""

    epi: EpiParams = field(default_factory=EpiParams)
    costs: CostParams = field(default_factory=CostParams)
    mode: str = ASYNCHRONOUS
    n_clusters: int = 5
    stagger_window: int = 20
    n_max: int = 40
    seed: int = 0

    def __post_init__(self) -> None:
        if self.mode not in (SYNCHRONOUS, ASYNCHRONOUS):
            raise ParameterError(f"unknown mode {self.mode!r}")
        if self.n_clusters < 1:
            raise ParameterError("n_clusters must be positive")
        if self.n_clusters > self.n_max:
            raise ParameterError("n_clusters exceeds n_max")
        if self.stagger_window < 0:
            raise ParameterError("stagger_window must be non-negative")

    @property
    def horizon_days(self) -> int:
        window = self.stagger_window if self.mode == ASYNCHRONOUS else 0
        return window + self.epi.episode_days

    @property
    def max_population(self) -> int:
        return self.n_max * self.epi.cluster_size_max


def desk_epi(**overrides) -> EpiParams:
    """Paper dynamics at desk scale: clusters capped at size 10."""
    kwargs = {"cluster_size_max": 10}
    kwargs.update(overrides)
    return EpiParams(**kwargs)


def config_to_dict(config: SystemConfig) -> dict:
    doc = {
        "schema_version": CONFIG_SCHEMA_VERSION,
        "epi": asdict(config.epi),
        "costs": asdict(config.costs),
        "mode": config.mode,
        "n_clusters": config.n_clusters,
        "stagger_window": config.stagger_window,
        "n_max": config.n_max,
        "seed": config.seed,
    }
    return doc


def config_from_dict(doc: dict) -> SystemConfig:
    version = doc.get("schema_version")
    if version != CONFIG_SCHEMA_VERSION:
        raise ParameterError(
            f"unsupported config schema_version {version!r}; "
            f"expected {CONFIG_SCHEMA_VERSION}"
        )
    return SystemConfig(
        epi=EpiParams(**doc["epi"]),
        costs=CostParams(**doc["costs"]),
        mode=doc["mode"],
        n_clusters=doc["n_clusters"],
        stagger_window=doc["stagger_window"],
        n_max=doc["n_max"],
        seed=doc["seed"],
    )


def save_config(config: SystemConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(config_to_dict(config), indent=2) + "\n")


def load_config(path: str | Path) -> SystemConfig:
    return config_from_dict(json.loads(Path(path).read_text()))
