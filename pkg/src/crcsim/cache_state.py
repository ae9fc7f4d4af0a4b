"""Per-node cache occupancy over future slots and the exponential cost.

An entry admitted at ``admitted_at`` with expiry ``expiry`` occupies every
slot in ``[admitted_at, expiry]`` inclusive.  Load is tracked per slot so
that admission tests can account for copies that will be flushed before the
candidate's own expiry.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

CAP_TOL = 1e-9
LOG2_MU_CAP = 900.0


class CapacityError(RuntimeError):
    pass


@dataclass(frozen=True)
class CacheEntry:
    content: int
    admitted_at: int
    expiry: int
    size: float
    frozen_d: int
    frozen_E: float

    def __post_init__(self):
        if self.expiry < self.admitted_at:
            raise ValueError("expiry precedes admission")
        if self.frozen_d < 1:
            raise ValueError("a node never caches a content it already serves")

    def live_at(self, slot: int) -> bool:
        return self.admitted_at <= slot <= self.expiry


@dataclass(frozen=True)
class CostParams:
    """Cost-base constants.

    ``size_scale`` converts MB of cached data into the units of expected
    savings (requests x hops per slot); it is 1 unless calibrated.
    """

    mu: float
    F: float
    T: int
    n: int
    size_scale: float = 1.0
    log2_mu: float = field(init=False, repr=False, compare=False)
    ln_mu: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        expect = 2.0 * (self.n * self.T * self.F + 1.0)
        if not math.isclose(self.mu, expect, rel_tol=1e-12):
            raise ValueError(f"mu={self.mu} but 2(nTF+1)={expect}")
        if self.F < 1:
            raise ValueError("F must be >= 1")
        object.__setattr__(self, "log2_mu", math.log2(self.mu))
        object.__setattr__(self, "ln_mu", math.log(self.mu))

    @classmethod
    def build(cls, n: int, T: int, F: float, size_scale: float = 1.0) -> "CostParams":
        return cls(2.0 * (n * T * F + 1.0), F, T, n, size_scale)


class NodeCache:
    def __init__(self, node: int, capacity: float, n_slots: int):
        self.node = node
        self.capacity = float(capacity)
        self.n_slots = n_slots
        self.entries: dict[int, CacheEntry] = {}
        self.occupancy = np.zeros(n_slots)
        self._by_expiry: dict[int, set] = {}
        self._prefix = None
        self._prefix_key = None
        self._flushed_below = 0
        self._columns = None

    def __contains__(self, content: int) -> bool:
        return content in self.entries

    def __len__(self):
        return len(self.entries)

    def live_entries(self, slot: int) -> list[CacheEntry]:
        return [e for e in self.entries.values() if e.live_at(slot)]

    def residual(self, slot: int) -> float:
        return self.capacity - self.occupancy[slot]

    def fits(self, size: float, t0: int, t1: int) -> bool:
        limit = self.capacity + CAP_TOL - size
        occ = self.occupancy
        if occ[t0] > limit:
            return False
        if t1 >= self.n_slots:
            t1 = self.n_slots - 1
        return occ[t0:t1 + 1].max() <= limit

    def admit(self, entry: CacheEntry) -> None:
        if entry.content in self.entries:
            raise ValueError(f"content {entry.content} already cached at node {self.node}")
        if entry.expiry >= self.n_slots:
            raise ValueError("entry outlives the simulated horizon")
        if not self.fits(entry.size, entry.admitted_at, entry.expiry):
            peak = self.occupancy[entry.admitted_at:entry.expiry + 1].max()
            raise CapacityError(
                f"node {self.node}: admitting content {entry.content} ({entry.size} MB) "
                f"over [{entry.admitted_at}, {entry.expiry}] exceeds capacity {self.capacity} (peak {peak})")
        self.entries[entry.content] = entry
        self.occupancy[entry.admitted_at:entry.expiry + 1] += entry.size
        self._by_expiry.setdefault(entry.expiry, set()).add(entry.content)
        self._prefix = None
        self._columns = None

    def evict(self, content: int, slot: int) -> CacheEntry:
        """Remove ``content`` before its expiry, freeing slots from ``slot`` on."""
        entry = self.entries.pop(content)
        if slot <= entry.expiry:
            self.occupancy[max(slot, entry.admitted_at):entry.expiry + 1] -= entry.size
            np.maximum(self.occupancy, 0.0, out=self.occupancy)
        self._by_expiry[entry.expiry].discard(content)
        self._prefix = None
        self._columns = None
        return entry

    def flush_expired(self, slot: int) -> list[CacheEntry]:
        """Drop entries with ``expiry < slot``; their past occupancy stays recorded."""
        out = []
        for t in range(self._flushed_below, slot):
            for j in sorted(self._by_expiry.pop(t, ())):
                out.append(self.entries.pop(j))
        self._flushed_below = max(self._flushed_below, slot)
        if out:
            self._columns = None
        return out

    def columns(self):
        """Entries sorted by content id as arrays: (ids, sizes, expiries, frozen E*d)."""
        if self._columns is None:
            es = sorted(self.entries.values(), key=lambda e: e.content)
            self._columns = (np.array([e.content for e in es], dtype=np.int64),
                             np.array([e.size for e in es], dtype=float),
                             np.array([e.expiry for e in es], dtype=np.int64),
                             np.array([e.frozen_E * e.frozen_d for e in es], dtype=float))
        return self._columns

    def excess_prefix(self, params: CostParams) -> np.ndarray:
        """Prefix sums of ``mu**load - 1`` over slots (length ``n_slots + 1``)."""
        key = params.ln_mu
        if self._prefix is None or self._prefix_key != key:
            exc = np.expm1(self.occupancy * (key / self.capacity))
            p = np.empty(self.n_slots + 1)
            p[0] = 0.0
            np.cumsum(exc, out=p[1:])
            self._prefix = p
            self._prefix_key = key
        return self._prefix


def relative_load(cache: NodeCache, slot: int) -> float:
    return float(cache.occupancy[slot]) / cache.capacity


def cost(cache: NodeCache, params: CostParams, slot: int) -> float:
    """``D * (mu**load - 1)`` in savings units."""
    lam = relative_load(cache, slot)
    return params.size_scale * cache.capacity * math.expm1(lam * params.ln_mu)


def aggregate_admission_cost(cache: NodeCache, params: CostParams, size: float, t0: int, duration: int) -> float:
    """Sum over ``t0 .. t0 + duration`` of ``size / D * cost(slot)``."""
    t1 = t0 + duration
    if t1 >= cache.n_slots:
        t1 = cache.n_slots - 1
    p = cache._prefix
    if p is None or cache._prefix_key != params.ln_mu:
        p = cache.excess_prefix(params)
    return params.size_scale * size * (p[t1 + 1] - p[t0])


def total_cost(cache: NodeCache, params: CostParams) -> float:
    """Sum of the cost over every slot of the final occupancy profile."""
    return params.size_scale * cache.capacity * float(cache.excess_prefix(params)[-1])


@dataclass
class AssumptionReport:
    min_ratio: float
    max_ratio: float
    size_scale: float
    F: float
    mu: float
    n: int
    T: int
    a1_ok: bool
    a2_ok: bool
    log2_mu_ok: bool
    a1_violations: list = field(default_factory=list)
    a2_violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.a1_ok and self.a2_ok and self.log2_mu_ok

    def params(self) -> CostParams:
        return CostParams.build(self.n, self.T, self.F, self.size_scale)


def validate_assumptions(topo, routes, catalog, expectations, *, calibrate: bool = True,
                         size_scale: float = 1.0, max_listed: int = 20) -> AssumptionReport:
    """Check savings density and size-versus-capacity bounds.

    The density ratio is ``E * b / (n * r * T)`` over caching nodes other
    than the source.  With ``calibrate`` the savings unit is rescaled so that
    the smallest positive ratio is exactly 1; ``F`` is the largest ratio.
    """
    caching = np.array(topo.caching_nodes, dtype=np.int64)
    n = len(caching)
    T = catalog.max_duration
    E = expectations.E[caching, :]
    b = routes.hop_count[np.ix_(caching, catalog.source)].astype(float)
    raw = E * b / (n * catalog.size[None, :] * catalog.duration[None, :].astype(float))
    mask = b > 0
    vals = raw[mask]
    positive = vals[vals > 0]
    if calibrate:
        size_scale = float(positive.min()) if len(positive) else 1.0
    ratio = raw / size_scale
    rvals = ratio[mask]
    min_ratio = float(rvals.min()) if len(rvals) else 1.0
    max_ratio = float(rvals.max()) if len(rvals) else 1.0
    F = max(max_ratio, 1.0)
    low = np.argwhere(mask & (ratio < 1.0 - 1e-9))
    a1_violations = [(int(caching[i]), int(j), float(ratio[i, j])) for i, j in low[:max_listed]]
    mu = 2.0 * (n * T * F + 1.0)
    log2_mu = math.log2(mu)
    limit = float(topo.capacity[caching].min()) / log2_mu
    big = np.nonzero(catalog.size > limit + 1e-12)[0]
    return AssumptionReport(
        min_ratio=min_ratio, max_ratio=max_ratio, size_scale=size_scale, F=F, mu=mu, n=n, T=T,
        a1_ok=len(low) == 0, a2_ok=len(big) == 0, log2_mu_ok=log2_mu <= LOG2_MU_CAP,
        a1_violations=a1_violations,
        a2_violations=[(int(j), float(catalog.size[j]), limit) for j in big[:max_listed]],
    )
