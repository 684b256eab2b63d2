"""Controller views of BIS values and the global staleness vector.

Views are stored as one ``(domain_count, n)`` matrix; row ``o`` is what the
controller of domain ``o`` believes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import TrueNetworkState
from .errors import BudgetExceeded
from .topology import BisRegistry


@dataclass
class ControllerViews:
    believed: np.ndarray  # (domain_count, n)
    origins: np.ndarray  # (n,) origin domain of each BIS

    @classmethod
    def synchronized(cls, registry: BisRegistry, truth: TrueNetworkState) -> "ControllerViews":
        m = registry.domain_count
        return cls(np.tile(truth.values, (m, 1)), registry.origins())

    def view(self, owner: int) -> np.ndarray:
        return self.believed[owner]

    def copy(self) -> "ControllerViews":
        return ControllerViews(self.believed.copy(), self.origins)


def refresh_own_domain(views: ControllerViews, truth: TrueNetworkState, owner: int | None = None) -> ControllerViews:
    """Set every BIS that originates in a controller's own domain to its true value."""
    out = views.copy()
    if owner is None:
        out.believed[out.origins, np.arange(len(out.origins))] = truth.values
    else:
        mask = out.origins == owner
        out.believed[owner, mask] = truth.values[mask]
    return out


def tick_staleness(counts: np.ndarray) -> np.ndarray:
    return counts + 1


def apply_broadcast(
    views: ControllerViews,
    counts: np.ndarray,
    action: np.ndarray,
    truth: TrueNetworkState,
    budget: int | None = None,
) -> tuple[ControllerViews, np.ndarray]:
    """Broadcast the selected up-to-date BISes to every controller.

    ``budget=None`` skips the budget check (full/no-sync baselines).
    """
    bits = np.asarray(action).astype(bool)
    if bits.shape != counts.shape:
        raise ValueError(f"action length {bits.shape} != state length {counts.shape}")
    if budget is not None and bits.sum() > budget:
        raise BudgetExceeded(f"{int(bits.sum())} broadcasts exceed budget {budget}")
    out = views.copy()
    out.believed[:, bits] = truth.values[bits]
    out = refresh_own_domain(out, truth)
    new_counts = counts.copy()
    new_counts[bits] = 0
    return out, new_counts
