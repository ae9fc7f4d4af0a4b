"""Content catalogs, expected request rates and sampled request traces."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .topology import Topology

DEFAULT_HORIZON = 1000


@dataclass(frozen=True)
class Content:
    id: int
    source: int
    size: float
    duration: int
    popularity: float
    window_start: int
    window_end: int

    def __post_init__(self):
        if self.size <= 0:
            raise ValueError(f"content {self.id}: size must be positive")
        if self.duration < 1:
            raise ValueError(f"content {self.id}: duration must be >= 1")
        if self.window_start > self.window_end:
            raise ValueError(f"content {self.id}: empty request window")


class Catalog(Sequence):
    """Immutable list of contents with column views for vectorised code."""

    def __init__(self, contents: Sequence[Content]):
        self._items = tuple(contents)
        if [c.id for c in self._items] != list(range(len(self._items))):
            raise ValueError("content ids must be 0..m-1 in order")
        self.source = np.array([c.source for c in self._items], dtype=np.int64)
        self.size = np.array([c.size for c in self._items], dtype=float)
        self.duration = np.array([c.duration for c in self._items], dtype=np.int64)
        self.popularity = np.array([c.popularity for c in self._items], dtype=float)
        self.window_start = np.array([c.window_start for c in self._items], dtype=np.int64)
        self.window_end = np.array([c.window_end for c in self._items], dtype=np.int64)

    def __getitem__(self, j):
        return self._items[j]

    def __len__(self):
        return len(self._items)

    @property
    def max_duration(self) -> int:
        return int(self.duration.max()) if len(self) else 0


def zipf_popularity(m: int, exponent: float) -> np.ndarray:
    ranks = np.arange(1, m + 1, dtype=float)
    w = ranks ** -exponent
    return w / w.sum()


def generate_catalog(topo: Topology, m: int, size_range=(100.0, 150.0), max_duration: int = 150,
                     horizon: int = DEFAULT_HORIZON, zipf_exponent: float = 0.8,
                     seed: int = 0) -> Catalog:
    """Random catalog: uniform source, size, duration and window start; Zipf
    popularity assigned to contents in random rank order."""
    if m < 1:
        raise ValueError("need at least one content")
    if size_range[0] <= 0 or size_range[0] > size_range[1]:
        raise ValueError(f"invalid size range {size_range}")
    if max_duration < 1:
        raise ValueError("max_duration must be >= 1")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    rng = np.random.default_rng(seed)
    source = rng.integers(0, topo.n, size=m)
    size = rng.uniform(size_range[0], size_range[1], size=m)
    duration = rng.integers(1, max_duration, size=m, endpoint=True)
    start = rng.integers(0, horizon, size=m, endpoint=True)
    end = np.minimum(start + duration, horizon)
    pop = zipf_popularity(m, zipf_exponent)[rng.permutation(m)]
    return Catalog([
        Content(j, int(source[j]), float(size[j]), int(duration[j]), float(pop[j]),
                int(start[j]), int(end[j]))
        for j in range(m)
    ])


def expected_request_rate(topo: Topology, content: Content, node: int, rate_scale: float = 1.0) -> float:
    """Own-subnetwork expected requests per slot at ``node``."""
    return rate_scale * content.popularity * float(topo.subnet_size[node])


def expected_rates(topo: Topology, catalog: Catalog, rate_scale: float = 1.0) -> np.ndarray:
    """``W[i, j]`` for every node and content, shape (n, m)."""
    return rate_scale * np.outer(topo.subnet_size.astype(float), catalog.popularity)


@dataclass(frozen=True)
class RequestEvent:
    slot: int
    node: int
    content: int
    count: int


class Trace:
    """Time-ordered request events sorted by (slot, content, node)."""

    def __init__(self, slot, node, content, count):
        slot, node, content, count = (np.asarray(a, dtype=np.int64) for a in (slot, node, content, count))
        if (count <= 0).any():
            raise ValueError("request counts must be positive")
        order = np.lexsort((node, content, slot))
        self.slot, self.node, self.content, self.count = slot[order], node[order], content[order], count[order]

    @classmethod
    def from_events(cls, events) -> "Trace":
        events = list(events)
        cols = list(zip(*[(e.slot, e.node, e.content, e.count) for e in events])) or [[], [], [], []]
        return cls(*cols)

    def __len__(self):
        return len(self.slot)

    def __iter__(self) -> Iterator[RequestEvent]:
        for t, i, j, c in zip(self.slot.tolist(), self.node.tolist(), self.content.tolist(), self.count.tolist()):
            yield RequestEvent(t, i, j, c)

    def __eq__(self, other):
        return all(np.array_equal(getattr(self, a), getattr(other, a)) for a in ("slot", "node", "content", "count"))

    @property
    def total_requests(self) -> int:
        return int(self.count.sum())


def generate_requests(topo: Topology, catalog: Catalog, seed: int, rate_scale: float = 1.0,
                      rates: np.ndarray | None = None) -> Trace:
    """Poisson(W) requests per (slot, node, content) inside each content's window.

    Draws the window total per (node, content) and spreads it uniformly over
    the window, which has the same law as independent per-slot Poisson draws.
    """
    if len(catalog) == 0:
        raise ValueError("empty catalog")
    w = expected_rates(topo, catalog, rate_scale) if rates is None else np.asarray(rates, dtype=float)
    rng = np.random.default_rng(seed)
    length = (catalog.window_end - catalog.window_start + 1).astype(float)
    totals = rng.poisson(w * length[None, :])
    node_idx, content_idx = np.nonzero(totals)
    k = totals[node_idx, content_idx]
    node_rep = np.repeat(node_idx, k)
    content_rep = np.repeat(content_idx, k)
    offsets = rng.integers(0, catalog.window_end[content_rep] - catalog.window_start[content_rep] + 1)
    slots = catalog.window_start[content_rep] + offsets
    n, m = topo.n, len(catalog)
    keys = (slots * m + content_rep) * n + node_rep
    uniq, counts = np.unique(keys, return_counts=True)
    if len(uniq) == 0:
        return Trace([], [], [], [])
    slot_content, node = np.divmod(uniq, n)
    slot, content = np.divmod(slot_content, m)
    return Trace(slot, node, content, counts)


def save_trace(trace: Trace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["slot", "node", "content", "count"])
        for e in trace:
            w.writerow([e.slot, e.node, e.content, e.count])


def load_trace(path) -> Trace:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return Trace([int(r["slot"]) for r in rows], [int(r["node"]) for r in rows],
                 [int(r["content"]) for r in rows], [int(r["count"]) for r in rows])


def save_catalog(catalog: Catalog, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "source", "size", "duration", "popularity", "window_start", "window_end"])
        for c in catalog:
            w.writerow([c.id, c.source, repr(c.size), c.duration, repr(c.popularity), c.window_start, c.window_end])


def load_catalog(path) -> Catalog:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return Catalog([Content(int(r["id"]), int(r["source"]), float(r["size"]), int(r["duration"]),
                            float(r["popularity"]), int(r["window_start"]), int(r["window_end"]))
                    for r in rows])
