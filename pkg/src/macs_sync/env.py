"""The synchronization MDP: one step is one synchronization time slot."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import dynamics as dyn
from .dynamics import DynamicsConfig, ServiceRequest, TrueNetworkState
from .errors import EpisodeFinished
from .pathing import evaluate_true_latency, route_requests
from .topology import Network, TopologyConfig
from .views import ControllerViews, apply_broadcast, refresh_own_domain, tick_staleness


@dataclass
class EpisodeConfig:
    horizon: int = 500
    gamma: float = 0.99
    seed: int = 0
    structure_seed: int = 0
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    dynamics: DynamicsConfig = field(default_factory=DynamicsConfig)

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")


@dataclass
class SlotOutcome:
    reward: float
    avg_latency_after: float
    avg_latency_baseline: float
    budget: int
    next_state: np.ndarray
    done: bool = False


def build_network(config: EpisodeConfig) -> Network:
    return config.topology.build(np.random.default_rng(config.structure_seed))


def split_streams(seed: int) -> tuple[np.random.SeedSequence, np.random.SeedSequence]:
    """Environment and policy seed sequences derived from one master seed."""
    env_ss, policy_ss = np.random.SeedSequence(seed).spawn(2)
    return env_ss, policy_ss


def average_true_latency(net: Network, believed: np.ndarray, truth: TrueNetworkState,
                         requests: Sequence[ServiceRequest]) -> float:
    if not requests:
        return 0.0
    paths = route_requests(net, believed, list(requests))
    return float(np.mean([evaluate_true_latency(net, p, truth) for p in paths]))


def discounted_return(rewards: Sequence[float], gamma: float) -> float:
    """Sum of gamma**t * r_t with the first reward at t = 1."""
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    r = np.asarray(rewards, dtype=float)
    weights = gamma ** np.arange(1, len(r) + 1)
    return float(np.dot(weights, r))


def run_slot(net: Network, views: ControllerViews, staleness: np.ndarray, truth: TrueNetworkState,
             action: np.ndarray, requests: Sequence[ServiceRequest], budget: int | None = None):
    """Broadcast, route and cost one slot's requests before the network evolves.

    Returns ``(post_views, next_staleness, latency_after, latency_baseline)``;
    the baseline routes the same requests with the pre-broadcast views.
    """
    pre = refresh_own_domain(views, truth)
    # ticking before the reset leaves broadcast entries at exactly 0
    post, counts = apply_broadcast(pre, tick_staleness(staleness), action, truth, budget)
    after = average_true_latency(net, post.believed, truth, requests)
    baseline = average_true_latency(net, pre.believed, truth, requests)
    return post, counts, after, baseline


class SyncEnv:
    """Single-threaded simulation of controller views under budgeted broadcasts."""

    def __init__(self, config: EpisodeConfig, network: Network | None = None):
        self.config = config
        self.net = network if network is not None else build_network(config)
        self.change_p = dyn.change_probabilities(config.dynamics, self.net.n)
        self.reset()

    @property
    def n(self) -> int:
        return self.net.n

    def reset(self, seed: int | None = None, env_seq: np.random.SeedSequence | None = None) -> np.ndarray:
        if seed is not None:
            self.config.seed = seed
        if env_seq is None:
            env_seq, _ = split_streams(self.config.seed)
        values_ss, budget_ss, request_ss = env_seq.spawn(3)
        self._values_rng = np.random.default_rng(values_ss)
        self._budget_rng = np.random.default_rng(budget_ss)
        self._request_rng = np.random.default_rng(request_ss)
        self.truth = dyn.initial_state(self.config.dynamics, self.n, self._values_rng)
        self.views = ControllerViews.synchronized(self.net.registry, self.truth)
        self.staleness = np.zeros(self.n, dtype=np.int64)
        self.slot = 0
        self._budget = dyn.sample_budget(self.config.dynamics.budget_mean, self._budget_rng)
        return self.staleness.copy()

    @property
    def done(self) -> bool:
        return self.slot >= self.config.horizon

    def current_budget(self) -> int:
        if self.done:
            raise EpisodeFinished(f"episode ended at slot {self.slot}")
        return self._budget

    def step(self, action: np.ndarray, enforce_budget: bool = True) -> SlotOutcome:
        if self.done:
            raise EpisodeFinished(f"episode ended at slot {self.slot}")
        action = np.asarray(action, dtype=np.int64)
        budget = self._budget
        requests = dyn.sample_requests(self.net.placement, self.config.dynamics,
                                       self._request_rng, self.net.domain_count)
        post, counts, after, baseline = run_slot(self.net, self.views, self.staleness, self.truth,
                                                 action, requests, budget if enforce_budget else None)
        self.views = post
        self.staleness = counts
        self.truth = dyn.advance_bis_values(self.truth, self.change_p, self.config.dynamics,
                                            self._values_rng)
        self.slot += 1
        self.truth.slot = self.slot
        # drawn every slot, including the last, so the stream stays aligned
        self._budget = dyn.sample_budget(self.config.dynamics.budget_mean, self._budget_rng)
        return SlotOutcome(
            reward=baseline - after,
            avg_latency_after=after,
            avg_latency_baseline=baseline,
            budget=budget,
            next_state=counts.copy(),
            done=self.done,
        )
