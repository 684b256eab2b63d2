import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from macs_sync.dynamics import TrueNetworkState
from macs_sync.errors import BudgetExceeded
from macs_sync.views import ControllerViews, apply_broadcast, refresh_own_domain, tick_staleness

from conftest import CHAIN_TRUTH, CHAIN_VIEW0, random_network


def stale_views(net, truth, rng):
    views = ControllerViews.synchronized(net.registry, truth)
    views.believed[...] = rng.uniform(1, 30, size=views.believed.shape)
    return views


def test_full_broadcast_equals_truth(fig3_net):
    truth = TrueNetworkState(np.array([1.0, 2.0, 3.0, 4.0, 5.0]))
    views = stale_views(fig3_net, truth, np.random.default_rng(0))
    out, counts = apply_broadcast(views, np.array([5, 3, 3, 4, 3]), np.ones(5), truth)
    for o in range(2):
        np.testing.assert_array_equal(out.view(o), truth.values)
    np.testing.assert_array_equal(counts, 0)


def test_two_domain_broadcast_resets_two_entries(fig3_net):
    # gateway from domain 1 to 0 and server delay of service 0 in domain 1
    reg = fig3_net.registry
    i, j = reg.gateway_index(1, 0), reg.server_index(0, 1)
    action = np.zeros(5, dtype=int)
    action[[i, j]] = 1
    truth = TrueNetworkState(np.arange(1.0, 6.0))
    views = ControllerViews.synchronized(reg, truth)
    _, counts = apply_broadcast(views, np.array([5, 3, 3, 4, 3]), action, truth)
    assert set(np.flatnonzero(counts == 0)) == {i, j}
    assert counts.tolist() == [5, 0, 3, 0, 3]


def test_zero_action_keeps_foreign_entries(chain_net):
    truth = TrueNetworkState(CHAIN_TRUTH.copy())
    views = stale_views(chain_net, truth, np.random.default_rng(1))
    snapshot = views.believed.copy()
    out, counts = apply_broadcast(views, np.arange(7), np.zeros(7), truth)
    foreign = np.ones_like(snapshot, dtype=bool)
    foreign[views.origins, np.arange(7)] = False
    np.testing.assert_array_equal(out.believed[foreign], snapshot[foreign])
    np.testing.assert_array_equal(counts, np.arange(7))


def test_budget_exceeded(fig3_net):
    truth = TrueNetworkState(np.ones(5))
    views = ControllerViews.synchronized(fig3_net.registry, truth)
    with pytest.raises(BudgetExceeded):
        apply_broadcast(views, np.zeros(5, int), np.ones(5), truth, budget=2)


def test_tick_examples():
    assert tick_staleness(np.array([0, 0])).tolist() == [1, 1]
    assert tick_staleness(np.array([5, 3, 3, 4, 3])).tolist() == [6, 4, 4, 5, 4]


def test_tick_reset_tick_sequence(fig3_net):
    truth = TrueNetworkState(np.ones(5))
    views = ControllerViews.synchronized(fig3_net.registry, truth)
    counts = tick_staleness(np.zeros(5, dtype=int))
    action = np.zeros(5, int)
    action[2] = 1
    _, counts = apply_broadcast(views, counts, action, truth)
    counts = tick_staleness(counts)
    assert counts.tolist() == [2, 2, 1, 2, 2]


def test_refresh_owner_without_bises(chain_net):
    truth = TrueNetworkState(CHAIN_TRUTH.copy())
    views = ControllerViews.synchronized(chain_net.registry, truth)
    views.believed[0] = CHAIN_VIEW0
    # hand domain 0's entries to domain 1 so domain 0 owns nothing
    views.origins = np.where(views.origins == 0, 1, views.origins)
    out = refresh_own_domain(views, truth, owner=0)
    np.testing.assert_array_equal(out.view(0), CHAIN_VIEW0)


def test_own_gateway_always_accurate(chain_net):
    truth = TrueNetworkState(CHAIN_TRUTH.copy())
    views = ControllerViews.synchronized(chain_net.registry, truth)
    views.believed[0] = CHAIN_VIEW0
    out = refresh_own_domain(views, truth, owner=0)
    g01 = chain_net.registry.gateway_index(0, 1)
    assert out.view(0)[g01] == 2.0


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_refresh_diff_only_on_foreign_entries(seed):
    rng = np.random.default_rng(seed)
    net = random_network(rng)
    truth = TrueNetworkState(rng.uniform(1, 30, net.n))
    views = stale_views(net, truth, rng)
    out = refresh_own_domain(views, truth)
    for o in range(net.domain_count):
        diff = np.flatnonzero(out.view(o) != truth.values)
        assert np.all(views.origins[diff] != o)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_broadcast_properties(seed):
    rng = np.random.default_rng(seed)
    net = random_network(rng)
    truth = TrueNetworkState(rng.uniform(1, 30, net.n))
    views = stale_views(net, truth, rng)
    counts = rng.integers(0, 20, net.n)
    action = rng.integers(0, 2, net.n)
    out, new = apply_broadcast(views, counts, action, truth)
    hit = action.astype(bool)
    assert set(np.flatnonzero(new == 0)) >= set(np.flatnonzero(hit))
    # every controller agrees on broadcast entries
    assert np.all(out.believed[:, hit] == truth.values[hit])
    # monotonicity over one slot without broadcast
    ticked = tick_staleness(new)
    assert np.all(ticked[~hit] > counts[~hit])
