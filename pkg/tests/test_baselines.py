import itertools

import numpy as np
import pytest

from macs_sync.baselines import (
    PolicyKind,
    anti_entropy_action,
    full_sync_action,
    greedy_minmax_action,
    no_sync_action,
)


def brute_min_max(counts, budget):
    n = len(counts)
    best = np.inf
    for k in range(min(budget, n) + 1):
        for chosen in itertools.combinations(range(n), k):
            after = counts.copy()
            after[list(chosen)] = 0
            best = min(best, after.max())
    return best


def test_trivial_actions():
    assert full_sync_action(5).tolist() == [1] * 5
    assert no_sync_action(5).tolist() == [0] * 5
    assert PolicyKind.FULL_SYNC.budget_exempt and PolicyKind.NO_SYNC.budget_exempt
    assert not PolicyKind.GREEDY.budget_exempt and not PolicyKind.LEARNED.budget_exempt


def test_greedy_two_domain_state():
    a = greedy_minmax_action(np.array([5, 3, 3, 4, 3]), 2)
    assert set(np.flatnonzero(a)) == {0, 3}


def test_greedy_budget_covers_all():
    assert greedy_minmax_action(np.array([1, 0, 2]), 7).tolist() == [1, 1, 1]


def test_greedy_ties_lower_index():
    assert greedy_minmax_action(np.array([2, 3, 3, 3]), 2).tolist() == [0, 1, 1, 0]


def test_greedy_matches_brute_force():
    # brute force is costly, so many states share a small n; max over subsets is exact
    rng = np.random.default_rng(0)
    for _ in range(10_000):
        n = int(rng.integers(1, 13))
        counts = rng.integers(0, 6, n)
        budget = int(rng.integers(0, 4))
        a = greedy_minmax_action(counts, budget)
        assert a.sum() <= budget
        after = counts.copy()
        after[a.astype(bool)] = 0
        assert after.max() == brute_min_max(counts, budget)


def test_anti_entropy_edges():
    rng = np.random.default_rng(0)
    assert anti_entropy_action(5, 0, rng).sum() == 0
    assert anti_entropy_action(5, 9, rng).tolist() == [1] * 5


def test_anti_entropy_uniform():
    rng = np.random.default_rng(1)
    total = np.zeros(5)
    for _ in range(100_000):
        a = anti_entropy_action(5, 2, rng)
        assert a.sum() == 2
        total += a
    np.testing.assert_allclose(total / 100_000, 0.4, atol=0.01)


@pytest.mark.parametrize("fn", [lambda b: greedy_minmax_action(np.zeros(3), b),
                                lambda b: anti_entropy_action(3, b, np.random.default_rng(0))])
def test_negative_budget_rejected(fn):
    with pytest.raises(ValueError):
        fn(-1)
