"""Caching decision policies and the run-owned state they act on.

Every policy exposes ``serve(state, slot, node, content, count)`` which
locates the serving copy, makes the caching decisions along the way and
returns a :class:`ServeResult`.  The engine calls policies strictly in event
order.
"""
from __future__ import annotations

import enum
import math
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .cache_state import CAP_TOL, CacheEntry, CostParams, NodeCache, aggregate_admission_cost
from .expectation import ExpectationTable, deduct_upstream, mark_evicted


class PolicyKind(str, enum.Enum):
    CRC = "CRC"
    CRC_V2 = "CRCv2"
    REPLACEMENT_CRC = "ReplacementCRC"
    ALL_CACHE = "AllCache"
    RANDOM_V1 = "RandomV1"
    RANDOM_V2 = "RandomV2"
    LRU = "LRU"
    RANDOM_REPLACEMENT = "RandomReplacement"
    CCN = "CCN"

    @classmethod
    def parse(cls, name) -> "PolicyKind":
        if isinstance(name, cls):
            return name
        for k in cls:
            if k.value.lower() == str(name).lower() or k.name.lower() == str(name).lower():
                return k
        raise ValueError(f"unknown policy {name!r}; choose from {[k.value for k in cls]}")


CRC_FAMILY = (PolicyKind.CRC, PolicyKind.CRC_V2)
NON_PREEMPTIVE = (PolicyKind.CRC, PolicyKind.CRC_V2, PolicyKind.ALL_CACHE,
                  PolicyKind.RANDOM_V1, PolicyKind.RANDOM_V2)


class ServeResult:
    """Outcome of one request event: who served it, how far it travelled,
    which copies were admitted or replaced and the header seen at each
    caching node on the way up."""

    __slots__ = ("serving_node", "hops_traveled", "admissions", "replacements", "headers")

    def __init__(self, serving_node: int, hops_traveled: int):
        self.serving_node = serving_node
        self.hops_traveled = hops_traveled
        self.admissions = []
        self.replacements = []
        self.headers = []

    def __repr__(self):
        return (f"ServeResult(serving_node={self.serving_node}, hops_traveled={self.hops_traveled}, "
                f"admissions={len(self.admissions)}, replacements={self.replacements})")


class SimState:
    """Mutable state of one run: caches, expectations, duration clocks."""

    def __init__(self, topo, routes, catalog, table: ExpectationTable, params: CostParams,
                 horizon: int, seed=0, *, deduct: bool = True):
        self.topo = topo
        self.routes = routes
        self.catalog = catalog
        self.table = table
        self.params = params
        self.horizon = horizon
        self.rng = np.random.default_rng(seed)
        self.n_slots = horizon + 1
        self.caches: list[NodeCache | None] = [
            NodeCache(i, topo.capacity[i], self.n_slots) if topo.capacity[i] > 0 else None
            for i in range(topo.n)
        ]
        self.source = catalog.source.tolist()
        self.size = catalog.size.tolist()
        self.duration = catalog.duration.tolist()
        self.subnet = topo.subnet_size.tolist()
        self.hop = routes.hop_count
        self.holders: list[set] = [set() for _ in range(len(catalog))]
        self.t_first = [-1] * len(catalog)
        self.requests_seen = np.zeros((topo.n, len(catalog)), dtype=np.int64)
        self.recency: list[OrderedDict] = [OrderedDict() for _ in range(topo.n)]
        self.records: dict = {}
        self.eq1_diff = np.zeros(self.n_slots + 1)
        self.safety_net_hits = 0
        self.evictions = 0
        self.deduct = deduct

    # duration clock -------------------------------------------------------
    def expiry(self, j: int, t: int) -> int:
        """Last slot a copy admitted now may stay: first request anywhere + T_j."""
        t0 = self.t_first[j]
        if t0 < 0:
            self.t_first[j] = t0 = t
        return min(t0 + self.duration[j], self.horizon)

    def nearest_replica(self, i: int, j: int) -> int:
        best = self.source[j]
        hop_i = self.hop[i]
        bh = hop_i[best]
        for h in self.holders[j]:
            hh = hop_i[h]
            if hh < bh or (hh == bh and h < best):
                best, bh = h, hh
        return best

    # cache mutation -------------------------------------------------------
    def admit(self, u: int, j: int, t: int, expiry: int, E: float, d: int, upstream: int | None) -> CacheEntry:
        entry = CacheEntry(j, t, expiry, self.size[j], d, E)
        self.caches[u].admit(entry)
        self.holders[j].add(u)
        ed = E * d
        self.eq1_diff[t] += ed
        self.eq1_diff[expiry + 1] -= ed
        if self.deduct and upstream is not None:
            self.records[(u, j)] = deduct_upstream(self.table, self.routes, u, j, E, expiry, upstream,
                                                   source=self.source[j])
        self.recency[u][j] = None
        return entry

    def evict(self, u: int, j: int, t: int) -> CacheEntry:
        entry = self.caches[u].evict(j, t)
        self.holders[j].discard(u)
        rec = self.records.pop((u, j), None)
        if self.deduct:
            mark_evicted(self.table, self.routes, self.source[j], j, self.holders[j], rec)
        if t <= entry.expiry:
            ed = entry.frozen_E * entry.frozen_d
            self.eq1_diff[t] -= ed
            self.eq1_diff[entry.expiry + 1] += ed
        self.recency[u].pop(j, None)
        self.evictions += 1
        return entry

    def flush(self, t: int) -> list:
        out = []
        for u, cache in enumerate(self.caches):
            if cache is None:
                continue
            for e in cache.flush_expired(t):
                self.holders[e.content].discard(u)
                self.records.pop((u, e.content), None)
                self.recency[u].pop(e.content, None)
                out.append((u, e))
        return out

    def touch(self, u: int, j: int) -> None:
        rec = self.recency[u]
        if j in rec:
            rec.move_to_end(j)


# decision rules -------------------------------------------------------------

def crc_admission_test(cache: NodeCache, params: CostParams, size: float, t0: int, duration: int,
                       d: int, E: float) -> tuple[bool, bool]:
    """(savings >= cost, fits) for caching over ``t0 .. t0 + duration``."""
    ed = E * d
    if ed <= 0.0:
        return False, True
    savings = (duration + 1) * ed
    passes = savings >= aggregate_admission_cost(cache, params, size, t0, duration)
    return passes, (cache.fits(size, t0, t0 + duration) if passes else True)


def crc_decide(cache: NodeCache, params: CostParams, size: float, t0: int, duration: int,
               d: int, E: float) -> bool:
    passes, fits = crc_admission_test(cache, params, size, t0, duration, d, E)
    return passes and fits


def replacement_crc_decide(cache: NodeCache, params: CostParams, content: int, size: float,
                           t0: int, duration: int, d: int, E: float):
    """Return ``("admit", None)``, ``("replace", victim)`` or ``("reject", None)``.

    When the plain admission test fails, every cached content ``k`` is scored
    over its own remaining window by ``Diff(k)``: its frozen savings minus
    the newcomer's cost with ``k`` swapped out.  The newcomer scores its
    plain savings minus cost, which stands for "leave the cache alone".
    Only swaps that keep the newcomer within capacity over its lifetime are
    eligible.  The lowest score loses; ties go to the smallest content id.
    """
    passes, fits = crc_admission_test(cache, params, size, t0, duration, d, E)
    if passes and fits:
        return "admit", None
    ids, rk, expiry, ed = cache.columns()
    if len(ids) == 0:
        return "reject", None
    if expiry.min() < t0:
        live = expiry >= t0
        ids, rk, expiry, ed = ids[live], rk[live], expiry[live], ed[live]
        if len(ids) == 0:
            return "reject", None
    D = cache.capacity
    span = expiry - (t0 - 1)
    p = cache.excess_prefix(params)
    mu_load = p[expiry + 1] - (p[t0] - span)
    shrink = np.exp(rk * (-params.ln_mu / D))
    scale = params.size_scale * size
    diff = ed * span - scale * (math.exp(size * params.ln_mu / D) * shrink * mu_load - span)
    own = (duration + 1) * E * d - aggregate_admission_cost(cache, params, size, t0, duration)
    cand = np.nonzero(diff <= own)[0]
    if len(cand) == 0:
        return "reject", None
    # swap feasibility over the newcomer's lifetime, checked for contenders only
    t1 = min(t0 + duration, cache.n_slots - 1)
    occ = cache.occupancy
    limit = D + CAP_TOL - size
    order = cand[np.lexsort((ids[cand], diff[cand]))]
    for k in order.tolist():
        dk = float(diff[k])
        if dk == own and content < int(ids[k]):
            break
        last = min(int(expiry[k]), t1)
        if occ[t0:last + 1].max() - rk[k] <= limit and (last >= t1 or occ[last + 1:t1 + 1].max() <= limit):
            return "replace", int(ids[k])
    return "reject", None


# policies -------------------------------------------------------------------

def _first_holder(path, hold) -> int:
    last = len(path) - 1
    if not hold:
        return last
    for k in range(last):
        if path[k] in hold:
            return k
    return last


class Policy:
    kind: PolicyKind

    def serve(self, st: SimState, t: int, i: int, j: int, count: int) -> ServeResult:
        raise NotImplementedError


class CRCPolicy(Policy):
    """En-route cost-reward caching; ``closest=True`` serves from the nearest replica."""

    def __init__(self, closest: bool = False):
        self.closest = closest
        self.kind = PolicyKind.CRC_V2 if closest else PolicyKind.CRC

    def decide(self, st, cache, j, t, duration, d, E):
        ed = E * d
        if ed <= 0.0:
            return "reject", None
        size = st.size[j]
        if (duration + 1) * ed < aggregate_admission_cost(cache, st.params, size, t, duration):
            return "reject", None
        if not cache.fits(size, t, t + duration):
            st.safety_net_hits += 1
            return "reject", None
        return "admit", None

    def serve(self, st, t, i, j, count):
        path = st.routes.path(i, st.source[j])
        w = _first_holder(path, st.holders[j])
        if w == 0:
            return ServeResult(i, 0)
        if self.closest:
            server = st.nearest_replica(i, j)
            res = ServeResult(server, st.hop.item(i, server))
        else:
            res = ServeResult(path[w], w)
        expiry = st.expiry(j, t)
        if expiry < t:
            return res
        duration = expiry - t
        upstream = path[w]
        E = st.table.E
        caches = st.caches
        decide = self.decide
        headers = res.headers
        header = 0.0
        for k in range(w):
            u = path[k]
            cache = caches[u]
            if cache is None:
                continue
            headers.append(header)
            e = E.item(u, j)
            action, victim = decide(st, cache, j, t, duration, w - k, e)
            if action == "reject":
                continue
            if action == "replace":
                st.evict(u, victim, t)
                res.replacements.append((u, victim))
            res.admissions.append((u, st.admit(u, j, t, expiry, e, w - k, upstream)))
            header += e
        return res


class ReplacementCRCPolicy(CRCPolicy):
    def __init__(self):
        super().__init__(closest=False)
        self.kind = PolicyKind.REPLACEMENT_CRC

    def decide(self, st, cache, j, t, duration, d, E):
        return replacement_crc_decide(cache, st.params, j, st.size[j], t, duration, d, E)


class _EnRouteBaseline(Policy):
    """Serve from the first on-path copy and offer the content to every
    caching node below it."""

    def serve(self, st, t, i, j, count):
        path = st.routes.path(i, st.source[j])
        w = _first_holder(path, st.holders[j])
        server = path[w]
        res = ServeResult(server, w)
        if st.caches[server] is not None:
            st.touch(server, j)
        if w == 0:
            return res
        expiry = st.expiry(j, t)
        if expiry >= t:
            E = st.table.E
            for k in range(w):
                u = path[k]
                cache = st.caches[u]
                if cache is None:
                    continue
                if self.offer(st, res, u, cache, j, t, expiry):
                    res.admissions.append((u, st.admit(u, j, t, expiry, float(E[u, j]), w - k, server)))
        return res

    def offer(self, st, res, u, cache, j, t, expiry) -> bool:
        raise NotImplementedError


class AllCachePolicy(_EnRouteBaseline):
    kind = PolicyKind.ALL_CACHE

    def offer(self, st, res, u, cache, j, t, expiry):
        return cache.fits(st.size[j], t, expiry)


class RandomPolicy(_EnRouteBaseline):
    """Cache with probability equal to the content's local request share;
    version 2 also scales by the free fraction of the cache."""

    def __init__(self, version: int = 1):
        if version not in (1, 2):
            raise ValueError("version must be 1 or 2")
        self.version = version
        self.kind = PolicyKind.RANDOM_V1 if version == 1 else PolicyKind.RANDOM_V2

    def offer(self, st, res, u, cache, j, t, expiry):
        n_u = st.subnet[u]
        if n_u <= 0:
            return False
        pop = st.requests_seen[u, j] / n_u
        if pop <= 0:
            return False
        if self.version == 2:
            pop *= cache.residual(t) / cache.capacity
        return st.rng.random() <= pop and cache.fits(st.size[j], t, expiry)


def make_room_lru(st, u, cache, size, t, expiry, res) -> bool:
    if size > cache.capacity + CAP_TOL:
        return False
    rec = st.recency[u]
    while not cache.fits(size, t, expiry):
        if not rec:
            return False
        victim = next(iter(rec))
        st.evict(u, victim, t)
        res.replacements.append((u, victim))
    return True


class LRUPolicy(_EnRouteBaseline):
    kind = PolicyKind.LRU

    def offer(self, st, res, u, cache, j, t, expiry):
        return make_room_lru(st, u, cache, st.size[j], t, expiry, res)


class RandomReplacementPolicy(_EnRouteBaseline):
    kind = PolicyKind.RANDOM_REPLACEMENT

    def offer(self, st, res, u, cache, j, t, expiry):
        size = st.size[j]
        if cache.fits(size, t, expiry):
            return True
        if size > cache.capacity + CAP_TOL:
            return False
        victims = sorted(cache.entries)
        for idx in st.rng.permutation(len(victims)):
            st.evict(u, victims[idx], t)
            res.replacements.append((u, victims[idx]))
            if cache.fits(size, t, expiry):
                return True
        return cache.fits(size, t, expiry)


class CCNPolicy(Policy):
    """Nearest-replica retrieval; every node on the delivery path caches,
    making room with LRU."""

    kind = PolicyKind.CCN

    def serve(self, st, t, i, j, count):
        server = st.nearest_replica(i, j)
        hops = int(st.hop[i, server])
        res = ServeResult(server, hops)
        if st.caches[server] is not None:
            st.touch(server, j)
        if hops == 0:
            return res
        expiry = st.expiry(j, t)
        if expiry < t:
            return res
        path = st.routes.path(i, server)
        E = st.table.E
        for k in range(len(path) - 1):
            u = path[k]
            cache = st.caches[u]
            if cache is None or j in cache:
                continue
            if make_room_lru(st, u, cache, st.size[j], t, expiry, res):
                res.admissions.append((u, st.admit(u, j, t, expiry, float(E[u, j]), hops - k, None)))
        return res


def make_policy(kind) -> Policy:
    kind = PolicyKind.parse(kind)
    return {
        PolicyKind.CRC: lambda: CRCPolicy(False),
        PolicyKind.CRC_V2: lambda: CRCPolicy(True),
        PolicyKind.REPLACEMENT_CRC: ReplacementCRCPolicy,
        PolicyKind.ALL_CACHE: AllCachePolicy,
        PolicyKind.RANDOM_V1: lambda: RandomPolicy(1),
        PolicyKind.RANDOM_V2: lambda: RandomPolicy(2),
        PolicyKind.LRU: LRUPolicy,
        PolicyKind.RANDOM_REPLACEMENT: RandomReplacementPolicy,
        PolicyKind.CCN: CCNPolicy,
    }[kind]()
