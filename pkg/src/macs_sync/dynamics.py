"""Ground-truth BIS evolution, per-slot budgets and service requests."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .topology import ServicePlacement

UNIFORM_VALUE_SET = (1.0, 2.0, 4.0, 6.0, 8.0, 13.0, 17.0, 20.0, 25.0, 30.0)


@dataclass
class DynamicsConfig:
    value_mode: str = "uniform"  # "uniform" | "gaussian"
    value_set: tuple[float, ...] = UNIFORM_VALUE_SET
    value_mean: float = 10.0
    value_std: float = 5.0
    clamp_min: float = 0.1
    profile_mean: float = 30.0
    profile_std: float = 10.0
    peak_prob: float = 0.5
    budget_mean: float = 3.0
    requests_per_domain: int = 1
    zipf_q: float = 5.0
    zipf_beta: float = 0.8

    def __post_init__(self):
        self.value_set = tuple(float(v) for v in self.value_set)
        if self.value_mode not in ("uniform", "gaussian"):
            raise ValueError(f"unknown value_mode {self.value_mode!r}")
        if self.value_mode == "uniform" and (not self.value_set or min(self.value_set) <= 0):
            raise ValueError("value_set must be non-empty and positive")
        if self.clamp_min <= 0:
            raise ValueError("clamp_min must be > 0")
        if not 0 <= self.peak_prob <= 1:
            raise ValueError("peak_prob must lie in [0, 1]")
        if self.profile_std <= 0:
            raise ValueError("profile_std must be > 0")
        if self.budget_mean <= 0:
            raise ValueError("budget_mean must be > 0")
        if self.zipf_beta <= 0:
            raise ValueError("zipf_beta must be > 0")
        if self.requests_per_domain < 1:
            raise ValueError("requests_per_domain must be >= 1")


@dataclass
class TrueNetworkState:
    values: np.ndarray
    slot: int = 0

    def copy(self) -> "TrueNetworkState":
        return TrueNetworkState(self.values.copy(), self.slot)


class ServiceRequest(NamedTuple):
    origin_domain: int
    service_id: int


def change_probabilities(config: DynamicsConfig, n: int) -> np.ndarray:
    """Per-BIS change probability, a Gaussian bump over the BIS index scaled to peak_prob."""
    idx = np.arange(n, dtype=float)
    z = (idx - config.profile_mean) / config.profile_std
    log_g = -0.5 * z**2
    # normalizing by the max cancels the 1/(sigma*sqrt(2pi)) factor
    return config.peak_prob * np.exp(log_g - log_g.max())


def draw_values(config: DynamicsConfig, size: int, rng: np.random.Generator) -> np.ndarray:
    if config.value_mode == "uniform":
        choices = np.asarray(config.value_set)
        return choices[rng.integers(len(choices), size=size)]
    vals = rng.normal(config.value_mean, config.value_std, size=size)
    return np.maximum(vals, config.clamp_min)


def initial_state(config: DynamicsConfig, n: int, rng: np.random.Generator) -> TrueNetworkState:
    return TrueNetworkState(draw_values(config, n, rng), 0)


def advance_bis_values(
    state: TrueNetworkState,
    p: np.ndarray,
    config: DynamicsConfig,
    rng: np.random.Generator,
) -> TrueNetworkState:
    n = len(state.values)
    if len(p) != n:
        raise ValueError("probability vector length differs from state")
    # fixed draw count per call keeps streams aligned across policies
    flips = rng.random(n) < p
    fresh = draw_values(config, n, rng)
    return TrueNetworkState(np.where(flips, fresh, state.values), state.slot)


def sample_budget(mean: float, rng: np.random.Generator) -> int:
    if mean <= 0:
        raise ValueError("budget mean must be > 0")
    return int(rng.poisson(mean))


def request_probabilities(service_count: int, q: float, beta: float) -> np.ndarray:
    ranks = np.arange(1, service_count + 1, dtype=float)
    w = (q + ranks) ** (-beta)
    return w / w.sum()


def sample_requests(
    placement: ServicePlacement,
    config: DynamicsConfig,
    rng: np.random.Generator,
    domain_count: int,
) -> list[ServiceRequest]:
    """Draw requests_per_domain requests per domain; service id = popularity rank - 1."""
    probs = request_probabilities(placement.service_count, config.zipf_q, config.zipf_beta)
    total = domain_count * config.requests_per_domain
    services = rng.choice(placement.service_count, size=total, p=probs)
    origins = np.repeat(np.arange(domain_count), config.requests_per_domain)
    return [ServiceRequest(int(o), int(s)) for o, s in zip(origins, services)]
