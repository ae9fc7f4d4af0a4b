"""Exact offline placement on small instances and competitive-ratio checks.

The offline search sees the whole trace.  Its decision space holds one bit
per (event, caching node on that event's path to the source): set means the
node takes a copy while that event passes through it.  A copy lives until
the content's expiry and must fit in the node for every slot it occupies,
exactly as online admissions do.  Two independent enumerators are provided;
small instances are always solved by both and compared.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cache_state import CAP_TOL
from .engine import Scenario, simulate
from .policies import NON_PREEMPTIVE, PolicyKind
from .scenarios import custom_topology
from .topology import LB_CACHE, LB_SOURCE, build_lower_bound_instance, compute_routes
from .workload import Catalog, Content, RequestEvent, Trace

DEFAULT_BUDGET = 2 ** 20
CROSS_CHECK_BITS = 10
SERVING_MODES = ("en_route", "closest")


class BudgetExceeded(ValueError):
    pass


class OracleError(AssertionError):
    pass


@dataclass(frozen=True)
class PlacementDecision:
    """``candidates[k] = (node, content, slot, event_index)``; ``chosen[k]``
    says whether that node cached the content during that event."""

    candidates: tuple
    chosen: tuple

    def placements(self) -> list[tuple]:
        return [c for c, on in zip(self.candidates, self.chosen) if on]


class _Instance:
    """Flattened view of a scenario for the enumerators."""

    def __init__(self, sc: Scenario, serving: str):
        if serving not in SERVING_MODES:
            raise ValueError(f"serving must be one of {SERVING_MODES}")
        self.closest = serving == "closest"
        cat = sc.catalog
        tr = sc.trace
        self.hop = sc.routes.hop_count
        self.capacity = sc.topo.capacity
        self.n_slots = sc.horizon + 1
        self.size = cat.size.tolist()
        self.source = cat.source.tolist()
        self.events = list(zip(tr.slot.tolist(), tr.node.tolist(), tr.content.tolist(), tr.count.tolist()))
        first = {}
        for t, _, j, _ in self.events:
            first.setdefault(j, t)
        self.expiry = {j: min(t + int(cat.duration[j]), sc.horizon) for j, t in first.items()}
        self.paths = [sc.routes.path(i, self.source[j]) for _, i, j, _ in self.events]
        # candidate bits per event, in path order
        self.cand = []
        flat = []
        for k, ((t, i, j, c), path) in enumerate(zip(self.events, self.paths)):
            ids = []
            for u in path[:-1]:
                if self.capacity[u] > 0:
                    ids.append(len(flat))
                    flat.append((u, j, t, k))
            self.cand.append(ids)
        self.flat = tuple(flat)
        # optimistic savings still available from event k on
        ub = [c * (int(self.hop[i, self.source[j]]) - (0 if self.capacity[i] > 0 else 1))
              for t, i, j, c in self.events]
        self.tail = np.append(np.cumsum(np.maximum(ub, 0)[::-1])[::-1], 0).tolist()

    def serve(self, k, holders) -> tuple[int, int]:
        """(savings of event k, index of the first on-path holder)."""
        t, i, j, c = self.events[k]
        path = self.paths[k]
        live = holders.get(j, ()) if t <= self.expiry[j] else ()
        w = len(path) - 1
        for idx, u in enumerate(path[:-1]):
            if u in live:
                w = idx
                break
        b = len(path) - 1
        if self.closest:
            hops = min([b] + [int(self.hop[i, h]) for h in live])
        else:
            hops = w
        return c * (b - hops), w

    def fits(self, occ, u, size, t0, t1) -> bool:
        row = occ[u]
        return max(row[t0:t1 + 1]) + size <= self.capacity[u] + CAP_TOL


def _bitmask_sweep(inst: _Instance) -> tuple[int, tuple]:
    n_bits = len(inst.flat)
    best, best_mask = -1, 0
    n_nodes = len(inst.capacity)
    for mask in range(1 << n_bits):
        occ = [[0.0] * inst.n_slots for _ in range(n_nodes)]
        holders: dict = {}
        total = 0
        ok = True
        for k in range(len(inst.events)):
            sav, w = inst.serve(k, holders)
            total += sav
            t, _, j, _ = inst.events[k]
            for pos, bit in enumerate(inst.cand[k]):
                if not (mask >> bit) & 1:
                    continue
                u = inst.flat[bit][0]
                exp = inst.expiry[j]
                path = inst.paths[k]
                if exp < t or path.index(u) >= w or not inst.fits(occ, u, inst.size[j], t, exp):
                    ok = False
                    break
                for s in range(t, exp + 1):
                    occ[u][s] += inst.size[j]
                holders.setdefault(j, set()).add(u)
            if not ok:
                break
        if ok and total > best:
            best, best_mask = total, mask
    return best, tuple(bool((best_mask >> b) & 1) for b in range(n_bits))


def _branch_and_bound(inst: _Instance) -> tuple[int, tuple]:
    n_nodes = len(inst.capacity)
    occ = [[0.0] * inst.n_slots for _ in range(n_nodes)]
    holders: dict = {}
    chosen = [False] * len(inst.flat)
    best = [-1, tuple(chosen)]

    def event(k, acc):
        if acc + inst.tail[k] <= best[0]:
            return
        if k == len(inst.events):
            best[0], best[1] = acc, tuple(chosen)
            return
        sav, w = inst.serve(k, holders)
        t, _, j, _ = inst.events[k]
        exp = inst.expiry[j]
        bits = [] if exp < t else [b for b in inst.cand[k] if inst.paths[k].index(inst.flat[b][0]) < w]
        choose(k, acc + sav, bits, 0)

    def choose(k, acc, bits, pos):
        if pos == len(bits):
            event(k + 1, acc)
            return
        b = bits[pos]
        u, j, t, _ = inst.flat[b]
        exp = inst.expiry[j]
        size = inst.size[j]
        if inst.fits(occ, u, size, t, exp):
            for s in range(t, exp + 1):
                occ[u][s] += size
            holders.setdefault(j, set()).add(u)
            chosen[b] = True
            choose(k, acc, bits, pos + 1)
            chosen[b] = False
            holders[j].discard(u)
            for s in range(t, exp + 1):
                occ[u][s] -= size
        choose(k, acc, bits, pos + 1)

    event(0, 0)
    return best[0], best[1]


def decision_space(sc: Scenario) -> int:
    return len(_Instance(sc, "en_route").flat)


def optimal_placement(sc: Scenario, budget: int = DEFAULT_BUDGET, serving: str = "en_route",
                      method: str = "auto") -> tuple[PlacementDecision, int]:
    """Maximum realized hop savings over every realizable placement.

    ``method`` is ``"branch"``, ``"sweep"`` or ``"auto"``; auto runs the
    branch-and-bound search and, when the space has at most
    ``CROSS_CHECK_BITS`` bits, also the flat sweep, and insists they agree.
    """
    inst = _Instance(sc, serving)
    n_bits = len(inst.flat)
    if 2 ** n_bits > budget:
        raise BudgetExceeded(f"decision space 2^{n_bits} exceeds budget {budget}")
    if method == "sweep":
        sav, bits = _bitmask_sweep(inst)
    elif method in ("branch", "auto"):
        sav, bits = _branch_and_bound(inst)
        if method == "auto" and n_bits <= CROSS_CHECK_BITS:
            other, _ = _bitmask_sweep(inst)
            if other != sav:
                raise OracleError(f"enumerators disagree: branch-and-bound {sav}, sweep {other}")
    else:
        raise ValueError(f"unknown method {method!r}")
    return PlacementDecision(inst.flat, bits), sav


@dataclass(frozen=True)
class RatioReport:
    instance: str
    policy: str
    online_savings: float
    offline_savings: float
    ratio: float
    bound: float

    HEADER = ("instance", "policy", "online", "offline", "ratio", "bound")

    def row(self) -> tuple:
        return (self.instance, self.policy, self.online_savings, self.offline_savings, self.ratio, self.bound)


def serving_mode(policy) -> str:
    return "closest" if PolicyKind.parse(policy) is PolicyKind.CRC_V2 else "en_route"


def competitive_ratio(sc: Scenario, policy="CRC", params=None, *, instance: str = "",
                      budget: int = DEFAULT_BUDGET) -> RatioReport:
    """Offline optimum over online savings for a non-preemptive policy."""
    kind = PolicyKind.parse(policy)
    if kind not in NON_PREEMPTIVE:
        raise ValueError(f"{kind.value} may evict early; the non-preemptive oracle does not bound it")
    params = params or sc.params
    online = simulate(sc, kind, params=params, strict=False).realized_savings
    _, offline = optimal_placement(sc, budget, serving_mode(kind))
    if offline < online:
        raise OracleError(f"{instance}: offline {offline} below online {online} under {kind.value}")
    if online > 0:
        ratio = offline / online
    else:
        ratio = 1.0 if offline == 0 else math.inf
    bound = 2.0 * math.log2(2.0 * params.mu)
    return RatioReport(instance, kind.value, float(online), float(offline), ratio, bound)


def random_star_instance(seed: int, max_bits: int = 14, horizon: int = 6) -> Scenario:
    """Source at the hub, one to three caching nodes around it (some behind a
    non-caching relay).  Each caching node's own subnetwork issues a fixed
    number of requests per slot of a content's window, so the trace equals
    the expected rates.  Redrawn until the decision space has at most
    ``max_bits`` bits.
    """
    rng = np.random.default_rng(seed)
    while True:
        k = int(rng.integers(1, 4))
        edges, caps, cachers = [], [0.0], []
        nid = 1
        for _ in range(k):
            if rng.random() < 0.5:
                edges.append((0, nid))
                caps.append(0.0)
                edges.append((nid, nid + 1))
                nid += 1
            else:
                edges.append((0, nid))
            caps.append(float(rng.uniform(2.0, 4.0)))
            cachers.append(nid)
            nid += 1
        topo = custom_topology(nid, edges, caps)
        m = int(rng.integers(2, 5))
        contents, events = [], []
        rates = np.zeros((nid, m))
        for j in range(m):
            dur = int(rng.integers(1, 3))
            start = int(rng.integers(0, horizon - 1))
            end = min(start + dur, horizon)
            contents.append(Content(j, 0, float(rng.uniform(1.0, 2.0)), dur, 1.0 / m, start, end))
            for u in cachers:
                w = int(rng.integers(0, 3))
                if w == 0:
                    continue
                rates[u, j] = w
                events.extend(RequestEvent(t, u, j, w) for t in range(start, end + 1))
        if not events or len(events) > max_bits:
            continue
        routes = compute_routes(topo)
        return Scenario(topo, routes, Catalog(contents), rates, Trace.from_events(events), horizon)


# adversarial lower-bound instance -------------------------------------------

def lower_bound_scenario(n: int, alpha: float = 0.25):
    """Scenario for the phased star: every content is asked for at slot 0 and
    again at slot 1 by its phase's leaves, phases in increasing order."""
    topo, wl = build_lower_bound_instance(n, alpha)
    m = wl.n_contents
    contents, events = [], []
    rates = np.zeros((topo.n, m))
    for phase, (ids, leaves) in enumerate(zip(wl.phases, wl.requesters)):
        for j in ids:
            contents.append(Content(j, LB_SOURCE, wl.content_size, wl.duration, 1.0 / m, 0, wl.duration))
            for v in leaves:
                rates[v, j] = 1.0
                events.extend(RequestEvent(t, v, j, 1) for t in (0, wl.duration))
    sc = Scenario(topo, compute_routes(topo), Catalog(contents), rates, Trace.from_events(events), wl.duration)
    return sc, wl


@dataclass(frozen=True)
class LowerBoundRow:
    n: int
    fractions: tuple
    G: tuple
    sum_ratio: float
    min_ratio: float
    bound: float

    HEADER = ("n", "phases", "sum_G_over_2k", "min_G_over_2k", "two_over_log2n")

    def row(self) -> tuple:
        return (self.n, len(self.G), self.sum_ratio, self.min_ratio, self.bound)

    @property
    def ok(self) -> bool:
        return self.sum_ratio <= 2.0 + 1e-9 and self.min_ratio <= self.bound + 1e-9


def lower_bound_experiment(ns, policy="CRC", alpha: float = 0.25) -> list[LowerBoundRow]:
    """Run ``policy`` on the phased star for each ``n`` and tabulate
    ``G(k) / 2**k`` where ``G(k)`` is the normalized saving of phases 0..k."""
    rows = []
    for n in ns:
        sc, wl = lower_bound_scenario(n, alpha)
        m, st = simulate(sc, policy, strict=False, return_state=True)
        # copies taken on the first pass are what the second pass is served from
        kept = {e.content for e in st.caches[LB_CACHE].entries.values() if e.admitted_at == 0}
        cached = [sum(j in kept for j in ids) for ids in wl.phases]
        slot1 = int(m.per_slot_savings[wl.duration])
        if slot1 < sum(c * 2 ** i for i, c in enumerate(cached)):
            raise OracleError("second-pass savings below what the kept copies provide")
        fractions = tuple(c / len(ids) for c, ids in zip(cached, wl.phases))
        gains = [x * 2 ** i for i, x in enumerate(fractions)]
        G = tuple(np.cumsum(gains).tolist())
        ratios = [g / 2 ** k for k, g in enumerate(G)]
        bound = 2.0 / math.log2(n) if n > 1 else math.inf
        rows.append(LowerBoundRow(n, fractions, G, float(sum(ratios)), float(min(ratios)), bound))
    return rows
