"""Domain-wise topology, service placement and BIS indexing."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import InfeasibleDegreeSequence, MalformedEdgeList

MAX_REALIZATION_ATTEMPTS = 10_000


@dataclass(frozen=True)
class DomainGraph:
    domain_count: int
    edges: tuple[tuple[int, int], ...]

    def neighbors(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.domain_count)]
        for u, v in self.edges:
            out[u].append(v)
        return out

    def out_degrees(self) -> list[int]:
        deg = [0] * self.domain_count
        for u, _ in self.edges:
            deg[u] += 1
        return deg

    def has_edge(self, u: int, v: int) -> bool:
        return (u, v) in set(self.edges)


@dataclass(frozen=True)
class ServicePlacement:
    service_count: int
    installs: tuple[tuple[int, int], ...]

    def domains_of(self, service_id: int) -> list[int]:
        return [d for s, d in self.installs if s == service_id]


class GatewayDelay(NamedTuple):
    src: int
    dst: int


class ServerDelay(NamedTuple):
    service_id: int
    domain_id: int


def _key(entry: GatewayDelay | ServerDelay) -> tuple:
    # the two entry types compare equal as plain tuples, so tag them
    return ("g", *entry) if isinstance(entry, GatewayDelay) else ("s", *entry)


@dataclass(frozen=True)
class BisRegistry:
    """Canonical 0-based index over every synchronizable quantity.

    Gateway delays come first in sorted edge order, followed by server
    delays in sorted install order.
    """

    entries: tuple[GatewayDelay | ServerDelay, ...]
    domain_count: int
    _index: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self._index.update({_key(e): i for i, e in enumerate(self.entries)})

    @property
    def n(self) -> int:
        return len(self.entries)

    @property
    def gateway_count(self) -> int:
        return sum(isinstance(e, GatewayDelay) for e in self.entries)

    def index_of(self, entry: GatewayDelay | ServerDelay) -> int:
        return self._index[_key(entry)]

    def gateway_index(self, src: int, dst: int) -> int:
        return self._index[("g", src, dst)]

    def server_index(self, service_id: int, domain_id: int) -> int:
        return self._index[("s", service_id, domain_id)]

    def origin_domain(self, i: int) -> int:
        e = self.entries[i]
        return e.src if isinstance(e, GatewayDelay) else e.domain_id

    def origins(self) -> np.ndarray:
        return np.array([self.origin_domain(i) for i in range(self.n)], dtype=np.int64)


def _strongly_connected(m: int, edges: Sequence[tuple[int, int]]) -> bool:
    if m <= 1:
        return True
    fwd: list[list[int]] = [[] for _ in range(m)]
    rev: list[list[int]] = [[] for _ in range(m)]
    for u, v in edges:
        fwd[u].append(v)
        rev[v].append(u)
    for adj in (fwd, rev):
        seen = {0}
        queue = deque([0])
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        if len(seen) != m:
            return False
    return True


def graph_from_edges(domain_count: int, edges: Sequence[Sequence[int]]) -> DomainGraph:
    if domain_count < 1:
        raise MalformedEdgeList("domain_count must be >= 1")
    pairs = sorted({(int(u), int(v)) for u, v in edges})
    if len(pairs) != len(edges):
        raise MalformedEdgeList("duplicate edges")
    edge_set = set(pairs)
    for u, v in pairs:
        if not (0 <= u < domain_count and 0 <= v < domain_count):
            raise MalformedEdgeList(f"edge ({u},{v}) references unknown domain")
        if u == v:
            raise MalformedEdgeList(f"self-loop at domain {u}")
        if (v, u) not in edge_set:
            raise MalformedEdgeList(f"edge ({u},{v}) has no reverse edge")
    if not _strongly_connected(domain_count, pairs):
        raise MalformedEdgeList("graph is not connected")
    return DomainGraph(domain_count, tuple(pairs))


def realize_degree_sequence(degrees: Sequence[int], rng: np.random.Generator) -> DomainGraph:
    """Stub matching with rejection until a simple connected graph appears."""
    m = len(degrees)
    if m < 1:
        raise InfeasibleDegreeSequence("empty degree sequence")
    total = sum(degrees)
    if any(d < 0 for d in degrees) or total % 2 or total < 2 * (m - 1):
        raise InfeasibleDegreeSequence(f"degree sequence {list(degrees)} cannot be connected")
    stubs = np.repeat(np.arange(m), degrees)
    for _ in range(MAX_REALIZATION_ATTEMPTS):
        perm = rng.permutation(stubs)
        undirected = set()
        ok = True
        for a, b in zip(perm[0::2], perm[1::2]):
            a, b = int(a), int(b)
            key = (min(a, b), max(a, b))
            if a == b or key in undirected:
                ok = False
                break
            undirected.add(key)
        if not ok:
            continue
        directed = sorted([(u, v) for u, v in undirected] + [(v, u) for u, v in undirected])
        if _strongly_connected(m, directed):
            return DomainGraph(m, tuple(directed))
    raise InfeasibleDegreeSequence(
        f"no simple connected realization after {MAX_REALIZATION_ATTEMPTS} attempts"
    )


def build_topology(
    domain_count: int | None = None,
    edges: Sequence[Sequence[int]] | None = None,
    degree_sequence: Sequence[int] | None = None,
    rng: np.random.Generator | None = None,
) -> DomainGraph:
    """Build a graph from an explicit edge list or by realizing a degree sequence."""
    if edges is not None:
        if domain_count is None:
            domain_count = 1 + max((max(e) for e in edges), default=0)
        return graph_from_edges(domain_count, edges)
    if degree_sequence is None:
        raise MalformedEdgeList("either edges or degree_sequence is required")
    if domain_count is not None and domain_count != len(degree_sequence):
        raise InfeasibleDegreeSequence("degree_sequence length differs from domain count")
    if rng is None:
        rng = np.random.default_rng()
    return realize_degree_sequence(degree_sequence, rng)


def place_services(
    graph: DomainGraph,
    service_count: int,
    copies: int,
    favored_domains: Sequence[int],
    favored_prob: float,
    rng: np.random.Generator,
) -> ServicePlacement:
    m = graph.domain_count
    if not 1 <= copies <= m:
        raise ValueError(f"copies={copies} must lie in [1, {m}]")
    favored = sorted(set(int(d) for d in favored_domains))
    if any(not 0 <= d < m for d in favored):
        raise ValueError("favored domain out of range")
    other = [d for d in range(m) if d not in favored]
    installs = []
    for s in range(service_count):
        pools = [list(favored), list(other)]
        for _ in range(copies):
            # draw the group first; an exhausted group defers to the other one
            pick = 0 if rng.random() < favored_prob else 1
            if not pools[pick]:
                pick = 1 - pick
            pool = pools[pick]
            d = pool.pop(int(rng.integers(len(pool))))
            installs.append((s, d))
    return ServicePlacement(service_count, tuple(sorted(installs)))


def enumerate_bises(graph: DomainGraph, placement: ServicePlacement) -> BisRegistry:
    entries: list[GatewayDelay | ServerDelay] = [GatewayDelay(u, v) for u, v in graph.edges]
    entries += [ServerDelay(s, d) for s, d in placement.installs]
    return BisRegistry(tuple(entries), graph.domain_count)


@dataclass(frozen=True)
class Network:
    """Static structure shared by the simulator: graph, placement and BIS index."""

    graph: DomainGraph
    placement: ServicePlacement
    registry: BisRegistry

    @classmethod
    def build(cls, graph: DomainGraph, placement: ServicePlacement) -> "Network":
        return cls(graph, placement, enumerate_bises(graph, placement))

    @property
    def n(self) -> int:
        return self.registry.n

    @property
    def domain_count(self) -> int:
        return self.graph.domain_count


DEFAULT_EDGES = ((0, 1), (0, 2), (0, 3), (0, 4), (1, 5), (2, 6), (6, 7))


@dataclass
class TopologyConfig:
    """Structure knobs; ``edges`` lists undirected pairs or directed pairs with reverses."""

    domains: int = 8
    edges: list | None = field(default_factory=lambda: [list(e) for e in DEFAULT_EDGES])
    degree_sequence: list | None = None
    service_count: int = 10
    copies: int = 2
    favored_domains: list = field(default_factory=lambda: [0, 1, 2, 3])
    favored_prob: float = 0.7

    def build(self, rng: np.random.Generator) -> Network:
        if self.edges is not None:
            pairs = {(int(u), int(v)) for u, v in self.edges}
            pairs |= {(v, u) for u, v in pairs}
            graph = build_topology(self.domains, sorted(pairs))
        else:
            graph = build_topology(self.domains, degree_sequence=self.degree_sequence, rng=rng)
        placement = place_services(
            graph, self.service_count, self.copies, self.favored_domains, self.favored_prob, rng
        )
        return Network.build(graph, placement)
