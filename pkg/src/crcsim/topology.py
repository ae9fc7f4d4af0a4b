"""Caching-node topologies, fixed shortest-path routing and caching trees.

All links have unit weight.  Subnetworks of non-caching end nodes are not
graph nodes; they only appear as a per-node count (``subnet_size``).
Capacities are in MB.
"""
from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import networkx as nx
import numpy as np


class TopologyKind(str, enum.Enum):
    RANDOM = "random"
    SMALL_WORLD = "small_world"
    LOWER_BOUND_STAR = "lower_bound_star"
    CUSTOM = "custom"


@dataclass(frozen=True)
class Topology:
    n: int
    edges: frozenset
    capacity: np.ndarray
    subnet_size: np.ndarray
    kind: TopologyKind = TopologyKind.CUSTOM

    def __post_init__(self):
        norm = frozenset((min(u, v), max(u, v)) for u, v in self.edges)
        for u, v in norm:
            if u == v or not (0 <= u < self.n and 0 <= v < self.n):
                raise ValueError(f"bad edge ({u}, {v}) for n={self.n}")
        object.__setattr__(self, "edges", norm)
        cap = np.asarray(self.capacity, dtype=float)
        sub = np.asarray(self.subnet_size, dtype=np.int64)
        if cap.shape != (self.n,) or sub.shape != (self.n,):
            raise ValueError("capacity and subnet_size need one entry per node")
        if (cap < 0).any() or (sub < 0).any():
            raise ValueError("capacities and subnet sizes must be non-negative")
        cap.setflags(write=False)
        sub.setflags(write=False)
        object.__setattr__(self, "capacity", cap)
        object.__setattr__(self, "subnet_size", sub)

    def graph(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self.n))
        g.add_edges_from(self.edges)
        return g

    def neighbors(self) -> list[list[int]]:
        adj = [[] for _ in range(self.n)]
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        for a in adj:
            a.sort()
        return adj

    def is_connected(self) -> bool:
        return self.n > 0 and nx.is_connected(self.graph())

    @property
    def caching_nodes(self) -> list[int]:
        return [i for i in range(self.n) if self.capacity[i] > 0]

    def __eq__(self, other):
        if not isinstance(other, Topology):
            return NotImplemented
        return (self.n == other.n and self.edges == other.edges
                and np.array_equal(self.capacity, other.capacity)
                and np.array_equal(self.subnet_size, other.subnet_size))

    __hash__ = None


@dataclass
class RoutingTable:
    """All-pairs next hops and hop counts over unit-weight links.

    ``next_hop[i, s]`` is the neighbour of ``i`` on the fixed path towards
    ``s`` (``-1`` when ``i == s``).  Ties go to the smallest neighbour id, so
    every path from ``next_hop[i, s]`` is a suffix of the path from ``i``.
    """

    next_hop: np.ndarray
    hop_count: np.ndarray
    _paths: dict = field(default_factory=dict, repr=False)
    _orders: dict = field(default_factory=dict, repr=False)

    def tree_order(self, s: int) -> tuple[list, list]:
        """Nodes of the caching tree rooted at ``s``, deepest first, and
        each node's parent (``-1`` for ``s``)."""
        out = self._orders.get(s)
        if out is None:
            parent = self.next_hop[:, s].tolist()
            order = sorted(range(len(parent)), key=lambda u: (-int(self.hop_count[u, s]), u))
            out = self._orders[s] = (order, parent)
        return out

    def path(self, i: int, s: int) -> tuple[int, ...]:
        """Nodes from ``i`` to ``s`` inclusive."""
        key = (i, s)
        p = self._paths.get(key)
        if p is None:
            nodes = [i]
            nh = self.next_hop
            while i != s:
                i = int(nh[i, s])
                if i < 0:
                    raise RuntimeError(f"no route from {key[0]} to {s}")
                nodes.append(i)
            p = tuple(nodes)
            self._paths[key] = p
        return p

    def hops(self, i: int, s: int) -> int:
        return int(self.hop_count[i, s])


def compute_routes(topo: Topology) -> RoutingTable:
    adj = topo.neighbors()
    n = topo.n
    hop = np.full((n, n), -1, dtype=np.int64)
    nxt = np.full((n, n), -1, dtype=np.int64)
    for s in range(n):
        dist = hop[:, s]
        dist[s] = 0
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if dist[v] < 0:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        if (dist < 0).any():
            raise ValueError("topology is not connected")
        for i in range(n):
            if i == s:
                continue
            # adjacency lists are sorted: first closer neighbour is the smallest id
            for v in adj[i]:
                if dist[v] == dist[i] - 1:
                    nxt[i, s] = v
                    break
    return RoutingTable(next_hop=nxt, hop_count=hop)


def caching_tree(topo: Topology, routes: RoutingTable, source: int) -> dict[int, int | None]:
    """Parent map of the union of all node-to-source paths."""
    if not 0 <= source < topo.n:
        raise ValueError(f"source {source} not in topology")
    parent: dict[int, int | None] = {}
    for i in range(topo.n):
        if i == source:
            parent[i] = None
            continue
        p = int(routes.next_hop[i, source])
        if p < 0:
            raise RuntimeError(f"node {i} cannot reach source {source}")
        parent[i] = p
    return parent


def subtree_matrix(routes: RoutingTable, source: int) -> np.ndarray:
    """``A[i, u] = 1`` iff ``u`` lies in the subtree of ``i`` in the caching tree of ``source``."""
    n = routes.next_hop.shape[0]
    a = np.zeros((n, n))
    for u in range(n):
        for i in routes.path(u, source):
            a[i, u] = 1.0
    return a


def _check_range(name, lo, hi):
    if lo > hi:
        raise ValueError(f"{name} range [{lo}, {hi}] is inverted")
    if lo < 0:
        raise ValueError(f"{name} range must be non-negative")


def _annotate(n, rng, capacity_range, subnet_range):
    _check_range("capacity", *capacity_range)
    _check_range("subnet", *subnet_range)
    cap = rng.uniform(capacity_range[0], capacity_range[1], size=n)
    sub = rng.integers(subnet_range[0], subnet_range[1], size=n, endpoint=True)
    return cap, sub


def build_random_topology(n: int, seed: int, capacity_range=(750_000.0, 1_000_000.0),
                          subnet_range=(10, 90), max_tries: int = 1000) -> Topology:
    """Erdos-Renyi G(n, 2 ln n / n), redrawn until connected."""
    if n < 2:
        raise ValueError("need at least two nodes")
    rng = np.random.default_rng(seed)
    p = min(1.0, 2.0 * math.log(n) / n)
    for _ in range(max_tries):
        g = nx.gnp_random_graph(n, p, seed=int(rng.integers(2**31)))
        if nx.is_connected(g):
            break
    else:
        raise RuntimeError(f"no connected G({n}, {p:.3f}) after {max_tries} draws")
    cap, sub = _annotate(n, rng, capacity_range, subnet_range)
    return Topology(n, frozenset(g.edges()), cap, sub, TopologyKind.RANDOM)


def build_small_world_topology(n: int, mean_degree: int, rewire_prob: float, seed: int,
                               capacity_range=(750_000.0, 1_000_000.0),
                               subnet_range=(10, 90), max_tries: int = 1000) -> Topology:
    """Watts-Strogatz ring lattice with rewiring, redrawn until connected."""
    if mean_degree % 2 or not 2 <= mean_degree < n:
        raise ValueError("mean_degree must be even with 2 <= k < n")
    if not 0.0 <= rewire_prob <= 1.0:
        raise ValueError("rewire_prob must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    g = nx.connected_watts_strogatz_graph(n, mean_degree, rewire_prob, tries=max_tries,
                                          seed=int(rng.integers(2**31)))
    cap, sub = _annotate(n, rng, capacity_range, subnet_range)
    return Topology(n, frozenset(g.edges()), cap, sub, TopologyKind.SMALL_WORLD)


@dataclass(frozen=True)
class LowerBoundWorkload:
    """Phased contents of the adversarial star.

    ``phases[i]`` lists the content ids of phase ``i``; ``requesters[i]`` the
    leaves requesting every content of that phase.
    """

    alpha: float
    content_size: float
    duration: int
    phases: tuple
    requesters: tuple

    @property
    def n_contents(self) -> int:
        return sum(len(p) for p in self.phases)


LB_SOURCE, LB_CACHE = 0, 1


def build_lower_bound_instance(n: int, alpha: float = 0.25, capacity: float = 1.0):
    """Star S - C - n leaves; only C caches.  Phase ``i`` has ``1/alpha``
    contents of size ``alpha * capacity`` requested by leaves ``0 .. 2**i - 1``."""
    if n < 1 or n & (n - 1):
        raise ValueError("n must be a power of two")
    per_phase = 1.0 / alpha
    if alpha <= 0 or abs(per_phase - round(per_phase)) > 1e-9:
        raise ValueError("1/alpha must be an integer")
    per_phase = int(round(per_phase))
    leaves = list(range(2, n + 2))
    edges = {(LB_SOURCE, LB_CACHE)} | {(LB_CACHE, v) for v in leaves}
    cap = np.zeros(n + 2)
    cap[LB_CACHE] = capacity
    topo = Topology(n + 2, frozenset(edges), cap, np.zeros(n + 2, dtype=np.int64),
                    TopologyKind.LOWER_BOUND_STAR)
    n_phases = int(math.log2(n)) + 1
    phases = tuple(tuple(range(i * per_phase, (i + 1) * per_phase)) for i in range(n_phases))
    requesters = tuple(tuple(leaves[: 2**i]) for i in range(n_phases))
    wl = LowerBoundWorkload(alpha, alpha * capacity, 1, phases, requesters)
    return topo, wl


def save_topology(topo: Topology, path) -> None:
    """One line per node: ``id capacity_mb subnet_size neighbour,neighbour,...``."""
    adj = topo.neighbors()
    lines = [f"# kind={topo.kind.value} n={topo.n}"]
    for i in range(topo.n):
        lines.append(f"{i} {float(topo.capacity[i])!r} {int(topo.subnet_size[i])} "
                     + ",".join(str(v) for v in adj[i]))
    Path(path).write_text("\n".join(lines) + "\n")


def load_topology(path) -> Topology:
    kind = TopologyKind.CUSTOM
    rows = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            for tok in line[1:].split():
                if tok.startswith("kind="):
                    kind = TopologyKind(tok[5:])
            continue
        parts = line.split()
        nbrs = [int(x) for x in parts[3].split(",")] if len(parts) > 3 and parts[3] else []
        rows.append((int(parts[0]), float(parts[1]), int(parts[2]), nbrs))
    rows.sort()
    n = len(rows)
    if [r[0] for r in rows] != list(range(n)):
        raise ValueError("node ids must be dense 0..n-1")
    edges = {(min(i, v), max(i, v)) for i, _, _, nb in rows for v in nb}
    return Topology(n, frozenset(edges), np.array([r[1] for r in rows]),
                    np.array([r[2] for r in rows]), kind)


def average_path_length(topo: Topology) -> float:
    routes = compute_routes(topo)
    n = topo.n
    return float(routes.hop_count.sum()) / (n * (n - 1))
