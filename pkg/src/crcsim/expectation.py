"""Per-node, per-content expectation values.

``W[i, j]`` is node ``i``'s own-subnetwork request rate for content ``j``;
``E[i, j]`` is the rate ``i`` would serve if it cached ``j`` right now.
Caching a content at a node removes its ``E`` from the nodes between it and
the nearest upstream copy; the removal is undone when the copy expires.
"""
from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .topology import RoutingTable, Topology, subtree_matrix
from .workload import Catalog

NEG_TOL = 1e-9


class AccountingError(RuntimeError):
    """An expectation value was driven below zero."""


@dataclass
class Deduction:
    content: int
    cacher: int
    expiry: int
    nodes: tuple
    amounts: tuple
    active: bool = True


@dataclass
class ExpectationTable:
    """``noise`` holds the per-entry multiplicative error (None when exact);
    ``dirty`` lists contents whose column was rebuilt after an early eviction
    and must be rebuilt again, rather than undone, when their copies expire.
    ``base`` is the exact cache-free table, shared read-only between copies."""

    W: np.ndarray
    E: np.ndarray
    log: dict = field(default_factory=lambda: defaultdict(list))
    noise: np.ndarray | None = None
    dirty: set = field(default_factory=set)
    base: np.ndarray | None = None

    @property
    def noisy(self) -> bool:
        return self.noise is not None

    def copy(self) -> "ExpectationTable":
        t = ExpectationTable(self.W.copy(), self.E.copy(),
                             noise=None if self.noise is None else self.noise.copy(), dirty=set(self.dirty),
                             base=self.base)
        for k, recs in self.log.items():
            t.log[k] = [Deduction(**vars(r)) for r in recs]
        return t

    def pending(self) -> list[Deduction]:
        return [r for recs in self.log.values() for r in recs if r.active]


def init_expectations(topo: Topology, routes: RoutingTable, catalog: Catalog,
                      rates: np.ndarray) -> ExpectationTable:
    """Subtree sums of ``rates`` over each content's caching tree."""
    W = np.asarray(rates, dtype=float)
    if W.shape != (topo.n, len(catalog)):
        raise ValueError(f"rates shape {W.shape} != ({topo.n}, {len(catalog)})")
    E = np.zeros_like(W)
    for s in np.unique(catalog.source):
        cols = np.nonzero(catalog.source == s)[0]
        E[:, cols] = subtree_matrix(routes, int(s)) @ W[:, cols]
    base = E.copy()
    base.setflags(write=False)
    return ExpectationTable(W.copy(), E, base=base)


def deduct_upstream(table: ExpectationTable, routes: RoutingTable, cacher: int, content: int,
                    frozen_E: float, expiry: int, first_cached_ancestor: int, *,
                    source: int) -> Deduction:
    """Subtract ``frozen_E`` from every node strictly between ``cacher`` and
    ``first_cached_ancestor`` on the path towards ``source``."""
    path = routes.path(cacher, source)
    try:
        stop = path.index(first_cached_ancestor)
    except ValueError:
        raise ValueError(f"{first_cached_ancestor} is not upstream of {cacher}") from None
    nodes = path[1:stop]
    amounts = []
    E = table.E
    for u in nodes:
        cur = E[u, content]
        new = cur - frozen_E
        if new < -NEG_TOL and not table.noisy:
            raise AccountingError(
                f"E[{u}, {content}] = {cur} would drop to {new} after deducting {frozen_E} from {cacher}")
        if new < 0.0:
            new = 0.0
        amounts.append(cur - new)
        E[u, content] = new
    rec = Deduction(content, cacher, expiry, tuple(nodes), tuple(amounts))
    table.log[expiry].append(rec)
    return rec


def restore_on_expiry(table: ExpectationTable, slot: int, routes: RoutingTable | None = None,
                      sources=None, holders=None) -> int:
    """Reverse every deduction whose copy expires at ``slot``.  Returns how many.

    Contents marked dirty are rebuilt from ``holders`` instead, which needs
    ``routes`` and ``sources``.
    """
    recs = table.log.pop(slot, [])
    n = 0
    rebuild = set()
    for rec in recs:
        if not rec.active:
            continue
        if rec.content in table.dirty:
            rebuild.add(rec.content)
            rec.active = False
        else:
            _undo(table, rec)
        n += 1
    for j in sorted(rebuild):
        recompute_content(table, routes, int(sources[j]), j, holders[j])
        table.dirty.discard(j)
    return n


def _undo(table, rec):
    E = table.E
    j = rec.content
    for u, a in zip(rec.nodes, rec.amounts):
        E[u, j] += a
    rec.active = False


def recompute_content(table: ExpectationTable, routes: RoutingTable, source: int, content: int,
                      holders) -> None:
    """Rebuild ``E[:, content]`` from ``W`` and the current holders.

    Every node gets the rate that reaches it before meeting a copy; a holder
    counts what reaches it (its own subtree minus what copies below absorb).
    Starting from the cache-free column, each holder, deepest first, removes
    what reaches it from every node above it.
    """
    if table.base is not None:
        col = table.base[:, content].copy()
        hop = routes.hop_count
        for h in sorted((h for h in holders if h != source), key=lambda h: (-int(hop[h, source]), h)):
            amount = col[h]
            for a in routes.path(h, source)[1:]:
                col[a] -= amount
        np.maximum(col, 0.0, out=col)
        if table.noise is not None:
            col *= table.noise[:, content]
        table.E[:, content] = col
        return
    order, parent = routes.tree_order(source)
    acc = table.W[:, content].astype(float).copy()
    for u in order:
        p = parent[u]
        if p >= 0 and u not in holders:
            acc[p] += acc[u]
    if table.noise is not None:
        acc *= table.noise[:, content]
    table.E[:, content] = acc


def mark_evicted(table: ExpectationTable, routes: RoutingTable, source: int, content: int, holders,
                 rec: Deduction | None = None) -> None:
    """A copy of ``content`` left before expiry: drop its deduction record,
    rebuild the column and keep it dirty until the remaining copies expire."""
    if rec is not None:
        rec.active = False
    table.dirty.add(content)
    recompute_content(table, routes, source, content, holders)


def apply_noise(table: ExpectationTable, relative_error: float, seed) -> ExpectationTable:
    """Copy of ``table`` with each E scaled by an independent U[1-e, 1+e] factor."""
    if relative_error < 0 or relative_error > 1:
        raise ValueError("relative_error must lie in [0, 1]")
    out = table.copy()
    if relative_error == 0:
        return out
    rng = np.random.default_rng(seed)
    out.noise = rng.uniform(1 - relative_error, 1 + relative_error, size=table.E.shape)
    out.E = np.maximum(table.E * out.noise, 0.0)
    return out


def reachable_mass(routes: RoutingTable, catalog: Catalog, W: np.ndarray, holders) -> np.ndarray:
    """Recompute E from scratch: the W mass whose requests reach each node
    before meeting a copy.  ``holders[j]`` is the set of nodes caching ``j``."""
    n, m = W.shape
    E = np.zeros_like(W, dtype=float)
    for j in range(m):
        s = int(catalog.source[j])
        hold = holders[j]
        for u in range(n):
            if W[u, j] == 0:
                continue
            for i in routes.path(u, s):
                E[i, j] += W[u, j]
                if i in hold and i != s:
                    break
    return E


def dump_table(table: ExpectationTable, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node", "content", "W", "E"])
        n, m = table.E.shape
        for i in range(n):
            for j in range(m):
                w.writerow([i, j, repr(float(table.W[i, j])), repr(float(table.E[i, j]))])
