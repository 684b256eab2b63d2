"""Anycast service-path construction from a controller's view.

Transit cost between domains is the sum of gateway delays of the domains
left behind; the destination's own egress is never charged because the
server sits inside it.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .dynamics import ServiceRequest, TrueNetworkState
from .errors import ServiceUnavailable, Unreachable
from .topology import Network


@dataclass(frozen=True)
class ServicePath:
    request: ServiceRequest
    domain_sequence: tuple[int, ...]
    chosen_install: tuple[int, int]
    estimated_latency: float


def shortest_paths(net: Network, values: np.ndarray, src: int) -> dict[int, tuple[float, tuple[int, ...]]]:
    """Label-setting search from ``src`` using ``values`` as BIS weights.

    Labels are compared as ``(delay, domain_sequence)`` so equal-delay
    paths resolve to the lexicographically smallest sequence. Gateway
    delays are strictly positive, which keeps that ordering consistent.
    """
    reg = net.registry
    adj = net.graph.neighbors()
    best: dict[int, tuple[float, tuple[int, ...]]] = {}
    heap: list[tuple[float, tuple[int, ...]]] = [(0.0, (src,))]
    while heap:
        d, seq = heapq.heappop(heap)
        u = seq[-1]
        if u in best:
            continue
        best[u] = (d, seq)
        for v in adj[u]:
            if v not in best:
                heapq.heappush(heap, (d + float(values[reg.gateway_index(u, v)]), seq + (v,)))
    return best


def min_gateway_delay(net: Network, values: np.ndarray, src: int, dst: int) -> tuple[float, tuple[int, ...]]:
    if src == dst:
        return 0.0, (src,)
    best = shortest_paths(net, values, src)
    if dst not in best:
        raise Unreachable(f"domain {dst} unreachable from {src}")
    return best[dst]


def _choose(net: Network, values: np.ndarray, request: ServiceRequest, best) -> ServicePath:
    domains = net.placement.domains_of(request.service_id)
    if not domains:
        raise ServiceUnavailable(f"service {request.service_id} has no installation")
    candidates = []
    for d in sorted(domains):
        if d not in best:
            continue
        transit, seq = best[d]
        server = float(values[net.registry.server_index(request.service_id, d)])
        candidates.append((transit + server, d, seq))
    if not candidates:
        raise Unreachable(f"no installation of service {request.service_id} is reachable")
    cost, d, seq = min(candidates, key=lambda c: (c[0], c[1]))
    return ServicePath(request, seq, (request.service_id, d), cost)


def construct_service_path(net: Network, values: np.ndarray, request: ServiceRequest) -> ServicePath:
    """Pick the installation with the lowest believed request latency.

    ``values`` is the requesting controller's view. Ties go to the lower
    domain index.
    """
    best = shortest_paths(net, values, request.origin_domain)
    return _choose(net, values, request, best)


def route_requests(net: Network, believed: np.ndarray, requests: list[ServiceRequest]) -> list[ServicePath]:
    """Route each request with its origin controller's view (row of ``believed``)."""
    cache: dict[int, dict] = {}
    paths = []
    for req in requests:
        o = req.origin_domain
        if o not in cache:
            cache[o] = shortest_paths(net, believed[o], o)
        paths.append(_choose(net, believed[o], req, cache[o]))
    return paths


def path_cost(net: Network, values: np.ndarray, path: ServicePath) -> float:
    reg = net.registry
    seq = path.domain_sequence
    total = 0.0
    for u, v in zip(seq[:-1], seq[1:]):
        total += float(values[reg.gateway_index(u, v)])
    return total + float(values[reg.server_index(*path.chosen_install)])


def evaluate_true_latency(net: Network, path: ServicePath, truth: TrueNetworkState) -> float:
    """Re-cost a fixed path with true BIS values; the route is not re-optimized."""
    return path_cost(net, truth.values, path)
