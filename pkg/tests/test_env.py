import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from macs_sync.dynamics import DynamicsConfig, ServiceRequest, TrueNetworkState, sample_requests
from macs_sync.env import EpisodeConfig, SyncEnv, discounted_return, run_slot
from macs_sync.errors import BudgetExceeded, EpisodeFinished
from macs_sync.views import ControllerViews

from conftest import CHAIN_TRUTH, CHAIN_VIEW0, two_domain_network


def horner(rewards, gamma):
    acc = 0.0
    for r in reversed(rewards):
        acc = gamma * (r + acc)
    return acc


def rollout(seed, actions_fn, horizon=30):
    env = SyncEnv(EpisodeConfig(horizon=horizon, seed=seed))
    s = env.reset()
    out = []
    while not env.done:
        b = env.current_budget()
        o = env.step(actions_fn(s, b, env.n))
        out.append((o.reward, o.avg_latency_after, o.avg_latency_baseline, o.budget, o.next_state.tolist()))
        s = o.next_state
    return out


def test_reset_is_synchronized_start():
    env = SyncEnv(EpisodeConfig(seed=4))
    s0 = env.reset()
    assert s0.tolist() == [0] * 34
    for o in range(env.net.domain_count):
        np.testing.assert_array_equal(env.views.view(o), env.truth.values)


def test_same_seed_same_first_slot():
    a, b = SyncEnv(EpisodeConfig(seed=9)), SyncEnv(EpisodeConfig(seed=9))
    assert a.current_budget() == b.current_budget()
    np.testing.assert_array_equal(a.truth.values, b.truth.values)
    oa, ob = a.step(np.zeros(34, int)), b.step(np.zeros(34, int))
    assert oa.avg_latency_after == ob.avg_latency_after


def test_budget_stable_within_slot_and_enforced():
    env = SyncEnv(EpisodeConfig(seed=0))
    b = env.current_budget()
    assert all(env.current_budget() == b for _ in range(5))
    with pytest.raises(BudgetExceeded):
        env.step(np.ones(env.n, int))


def test_long_run_budget_mean():
    env = SyncEnv(EpisodeConfig(horizon=20_000, seed=3))
    budgets = []
    while not env.done:
        budgets.append(env.current_budget())
        env.step(np.zeros(env.n, int))
    assert abs(np.mean(budgets) - 3) < 0.05


def test_episode_finished():
    env = SyncEnv(EpisodeConfig(horizon=1))
    env.step(np.zeros(env.n, int))
    with pytest.raises(EpisodeFinished):
        env.step(np.zeros(env.n, int))
    with pytest.raises(EpisodeFinished):
        env.current_budget()


def test_chain_single_request_reward(chain_net):
    truth = TrueNetworkState(CHAIN_TRUTH.copy())
    views = ControllerViews.synchronized(chain_net.registry, truth)
    views.believed[0] = CHAIN_VIEW0
    reg = chain_net.registry
    action = np.zeros(7, int)
    action[[reg.gateway_index(1, 2), reg.server_index(1, 1), reg.server_index(1, 2)]] = 1
    _, counts, after, baseline = run_slot(chain_net, views, np.zeros(7, int), truth, action,
                                          [ServiceRequest(0, 1)])
    assert (baseline, after) == (8.0, 4.0)
    assert baseline - after == 4.0
    assert counts.tolist() == [1, 1, 0, 1, 1, 0, 0]


def test_zero_action_reward_is_zero():
    for seed in range(5):
        env = SyncEnv(EpisodeConfig(horizon=200, seed=seed))
        while not env.done:
            assert env.step(np.zeros(env.n, int)).reward == 0.0


def _advance(env, rng, slots):
    while env.slot < slots:
        b = env.current_budget()
        env.step(np.isin(np.arange(env.n), rng.choice(env.n, size=min(b, env.n), replace=False)).astype(int))


def test_full_sync_dominates_exhaustively():
    net = two_domain_network()
    cfg = EpisodeConfig(horizon=60, seed=2, dynamics=DynamicsConfig(requests_per_domain=3, profile_mean=2))
    env = SyncEnv(cfg, network=net)
    rng = np.random.default_rng(0)
    for t in range(0, 60, 3):
        _advance(env, rng, t)
        reqs = sample_requests(net.placement, cfg.dynamics, rng, net.domain_count)
        rewards = {}
        for bits in itertools.product([0, 1], repeat=net.n):
            _, _, after, base = run_slot(net, env.views, env.staleness, env.truth, np.array(bits), reqs)
            rewards[bits] = base - after
        assert rewards[(1,) * net.n] == max(rewards.values())


def test_full_sync_dominates_random_actions():
    cfg = EpisodeConfig(horizon=100, seed=5)
    env = SyncEnv(cfg)
    rng = np.random.default_rng(1)
    for t in range(0, 100, 10):
        _advance(env, rng, t)
        reqs = sample_requests(env.net.placement, cfg.dynamics, rng, env.net.domain_count)
        _, _, after, base = run_slot(env.net, env.views, env.staleness, env.truth, np.ones(env.n, int), reqs)
        full = base - after
        for _ in range(200):
            a = (rng.random(env.n) < 0.2).astype(int)
            _, _, after, base = run_slot(env.net, env.views, env.staleness, env.truth, a, reqs)
            assert full >= base - after


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_state_evolution(seed):
    env = SyncEnv(EpisodeConfig(horizon=25, seed=seed))
    rng = np.random.default_rng(seed)
    s = env.reset()
    while not env.done:
        a = (rng.random(env.n) < 0.1).astype(int)
        out = env.step(a, enforce_budget=False)
        np.testing.assert_array_equal(out.next_state, np.where(a == 1, 0, s + 1))
        assert out.reward == out.avg_latency_baseline - out.avg_latency_after
        assert out.avg_latency_after >= 0 and out.avg_latency_baseline >= 0
        s = out.next_state


def test_episode_determinism():
    def policy(s, b, n):
        a = np.zeros(n, int)
        a[np.argsort(-s, kind="stable")[:b]] = 1
        return a

    assert rollout(11, policy) == rollout(11, policy)


def test_discounted_return_examples():
    assert discounted_return([0.0] * 10, 0.9) == 0.0
    assert discounted_return([1, 1], 0.5) == 0.75


def test_discounted_return_vs_horner():
    rng = np.random.default_rng(0)
    for _ in range(100):
        r = rng.normal(size=20).tolist()
        g = float(rng.uniform(0.01, 0.99))
        assert discounted_return(r, g) == pytest.approx(horner(r, g), abs=1e-12)


def test_scenario_state_length():
    assert SyncEnv(EpisodeConfig()).reset().shape == (34,)
