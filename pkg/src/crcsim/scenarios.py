"""Small hand-built networks used as worked examples and regression anchors."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cache_state import CacheEntry, CostParams, NodeCache
from .engine import Scenario, simulate
from .policies import Policy, ServeResult, _first_holder
from .topology import Topology, TopologyKind, compute_routes
from .workload import Catalog, Content, RequestEvent, Trace


def custom_topology(n, edges, capacity, subnet=None) -> Topology:
    subnet = np.zeros(n, dtype=np.int64) if subnet is None else np.asarray(subnet, dtype=np.int64)
    return Topology(n, frozenset(tuple(e) for e in edges), np.asarray(capacity, dtype=float), subnet,
                    TopologyKind.CUSTOM)


class FirstFitPolicy(Policy):
    """Greedy online placement: the lowest on-path node with room takes one copy.

    Used only for the two-content chain example, where every node with free
    space simply caches whatever arrives first.
    """

    kind = "FirstFit"

    def __init__(self, closest: bool = False):
        self.closest = closest

    def serve(self, st, t, i, j, count):
        path = st.routes.path(i, st.source[j])
        w = _first_holder(path, st.holders[j])
        if self.closest:
            server = st.nearest_replica(i, j)
            res = ServeResult(server, int(st.hop[i, server]))
        else:
            res = ServeResult(path[w], w)
        expiry = st.expiry(j, t)
        if w == 0 or expiry < t:
            return res
        for k in range(w):
            u = path[k]
            cache = st.caches[u]
            if cache is not None and cache.fits(st.size[j], t, expiry):
                res.admissions.append((u, st.admit(u, j, t, expiry, float(st.table.E[u, j]), w - k, path[w])))
                break
        return res


# two contents on a four-node chain -------------------------------------------

CHAIN_X, CHAIN_Y = 0, 1


def chain_example(order: str = "XY") -> Scenario:
    """Chain v1-v2-v3-v4 (ids 0..3), both contents at v1, v3 unable to cache.

    v4 asks for the two contents one after the other (``order``), then asks
    for both again (X once, Y ten times), then v3 asks once for each.
    """
    if sorted(order) != ["X", "Y"]:
        raise ValueError("order must be 'XY' or 'YX'")
    topo = custom_topology(4, [(0, 1), (1, 2), (2, 3)], [1.0, 1.0, 0.0, 1.0])
    routes = compute_routes(topo)
    horizon = 3
    catalog = Catalog([Content(j, 0, 1.0, horizon, 0.5, 0, horizon) for j in (CHAIN_X, CHAIN_Y)])
    rates = np.zeros((4, 2))
    rates[2, CHAIN_X] = rates[3, CHAIN_X] = 1.0
    rates[2, CHAIN_Y] = 1.0
    rates[3, CHAIN_Y] = 10.0
    first = [CHAIN_X, CHAIN_Y] if order == "XY" else [CHAIN_Y, CHAIN_X]
    events = [RequestEvent(0, 3, first[0], 1), RequestEvent(1, 3, first[1], 1),
              RequestEvent(2, 3, CHAIN_X, 1), RequestEvent(2, 3, CHAIN_Y, 10),
              RequestEvent(3, 2, CHAIN_X, 1), RequestEvent(3, 2, CHAIN_Y, 1)]
    return Scenario(topo, routes, catalog, rates, Trace.from_events(events), horizon)


# header walk on a small caching tree -----------------------------------------

TREE_SOURCE = 7
TREE_FILLER = 1
TREE_W = {0: 2.0, 1: 3.0, 2: 1.0, 3: 3.0, 4: 2.0, 5: 2.0, 6: 1.0}


def tree_example() -> tuple[Scenario, callable]:
    """Source S (id 7) above v0; v0 has children v1, v2, v3; v2 has v5, v6;
    v1 has v4.  v0 asks for the content at slot 0 and v5 at slot 1.

    Node v2 starts full (a filler content occupies it for the whole run), so
    it declines.  Returns the scenario and the state-preparation hook that
    installs the filler.
    """
    edges = [(7, 0), (0, 1), (0, 2), (0, 3), (2, 5), (2, 6), (1, 4)]
    cap = np.full(8, 10.0)
    cap[2] = 1.0
    topo = custom_topology(8, edges, cap)
    routes = compute_routes(topo)
    horizon = 4
    catalog = Catalog([Content(0, TREE_SOURCE, 1.0, horizon, 1.0, 0, horizon),
                       Content(TREE_FILLER, TREE_SOURCE, 1.0, horizon, 0.0, 0, horizon)])
    rates = np.zeros((8, 2))
    for v, w in TREE_W.items():
        rates[v, 0] = w
    trace = Trace.from_events([RequestEvent(0, 0, 0, 1), RequestEvent(1, 5, 0, 1)])
    sc = Scenario(topo, routes, catalog, rates, trace, horizon,
                  params=CostParams.build(7, horizon, 1.0))

    def prepare(st):
        st.caches[2].admit(CacheEntry(TREE_FILLER, 0, horizon, 1.0, 1, 0.0))
        st.holders[TREE_FILLER].add(2)

    return sc, prepare


# occupancy profile of a node with three staggered expiries --------------------

@dataclass(frozen=True)
class StaggeredNode:
    cache: NodeCache
    t0: int
    newcomer_duration: int

    def occupancy_counts(self) -> list[int]:
        """Number of live entries at each slot ``t0 .. t0 + duration``."""
        out = []
        for t in range(self.t0, self.t0 + self.newcomer_duration + 1):
            self.cache.flush_expired(t)
            out.append(len(self.cache.live_entries(t)))
        return out


def staggered_node(t0: int = 5, flush_after=(3, 9, 7), duration: int = 10) -> StaggeredNode:
    """A node holding three unit entries that are flushed ``t0 + k`` slots
    after ``t0`` for each ``k`` in ``flush_after``."""
    cache = NodeCache(0, 3.0, t0 + duration + 1)
    for j, k in enumerate(flush_after, start=1):
        cache.admit(CacheEntry(j, 0, t0 + k - 1, 1.0, 1, 1.0))
    return StaggeredNode(cache, t0, duration)


POLICY_FOR_CHAIN = {"en_route": lambda: FirstFitPolicy(False), "closest": lambda: FirstFitPolicy(True)}


def chain_online_savings(serving: str = "en_route") -> dict:
    """Realized savings of first-fit placement for both arrival orders."""
    out = {}
    for order in ("XY", "YX"):
        out[order] = simulate(chain_example(order), POLICY_FOR_CHAIN[serving]()).realized_savings
    out["average"] = (out["XY"] + out["YX"]) / 2
    return out

