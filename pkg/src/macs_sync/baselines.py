"""Reference synchronization policies: full, none, greedy MinMax and anti-entropy."""
from __future__ import annotations

from enum import Enum

import numpy as np


class PolicyKind(str, Enum):
    FULL_SYNC = "full_sync"
    NO_SYNC = "no_sync"
    GREEDY = "greedy"
    ANTI_ENTROPY = "anti_entropy"
    LEARNED = "learned"

    @property
    def budget_exempt(self) -> bool:
        return self in (PolicyKind.FULL_SYNC, PolicyKind.NO_SYNC)


def full_sync_action(n: int) -> np.ndarray:
    return np.ones(n, dtype=np.int64)


def no_sync_action(n: int) -> np.ndarray:
    return np.zeros(n, dtype=np.int64)


def greedy_minmax_action(staleness: np.ndarray, budget: int) -> np.ndarray:
    """Broadcast the ``budget`` stalest BISes, lower index first on ties."""
    if budget < 0:
        raise ValueError("budget must be >= 0")
    counts = np.asarray(staleness)
    action = np.zeros(len(counts), dtype=np.int64)
    k = min(budget, len(counts))
    if k:
        order = np.lexsort((np.arange(len(counts)), -counts))
        action[order[:k]] = 1
    return action


def anti_entropy_action(n: int, budget: int, rng: np.random.Generator) -> np.ndarray:
    if budget < 0:
        raise ValueError("budget must be >= 0")
    action = np.zeros(n, dtype=np.int64)
    k = min(budget, n)
    if k:
        action[rng.choice(n, size=k, replace=False)] = 1
    return action
