import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from crcsim.cache_state import (CacheEntry, CapacityError, CostParams, NodeCache, aggregate_admission_cost,
                                cost, relative_load, total_cost, validate_assumptions)

PARAMS = CostParams.build(n=10, T=20, F=3.0, size_scale=0.7)


def brute_force_cost(entries, capacity, params, size, t0, duration, n_slots):
    """Recompute the integrated admission price slot by slot from the entry list."""
    total = 0.0
    for t in range(t0, min(t0 + duration, n_slots - 1) + 1):
        load = sum(e.size for e in entries if e.admitted_at <= t <= e.expiry) / capacity
        total += size / capacity * params.size_scale * capacity * (params.mu ** load - 1)
    return total


def random_cache(rng, n_slots=40):
    cap = float(rng.uniform(200, 600))
    cache = NodeCache(0, cap, n_slots)
    entries = []
    for j in range(int(rng.integers(0, 12))):
        t0 = int(rng.integers(0, n_slots))
        t1 = int(rng.integers(t0, n_slots))
        e = CacheEntry(j, t0, t1, float(rng.uniform(10, 120)), 1, 1.0)
        if cache.fits(e.size, t0, t1):
            cache.admit(e)
            entries.append(e)
    return cache, entries


def test_mu_definition():
    assert PARAMS.mu == pytest.approx(2 * (10 * 20 * 3.0 + 1))
    assert PARAMS.log2_mu == pytest.approx(math.log2(PARAMS.mu))
    with pytest.raises(ValueError):
        CostParams(mu=5.0, F=1.0, T=1, n=1)
    with pytest.raises(ValueError):
        CostParams.build(2, 2, 0.5)


def test_aggregate_cost_matches_brute_force_on_1000_states():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        cache, entries = random_cache(rng)
        size = float(rng.uniform(1, 150))
        t0 = int(rng.integers(0, cache.n_slots))
        dur = int(rng.integers(0, 30))
        fast = aggregate_admission_cost(cache, PARAMS, size, t0, dur)
        slow = brute_force_cost(entries, cache.capacity, PARAMS, size, t0, dur, cache.n_slots)
        assert fast == pytest.approx(slow, rel=1e-9, abs=1e-9)


@given(st.integers(0, 2**32 - 1))
def test_occupancy_equals_sum_of_live_entries(seed):
    cache, entries = random_cache(np.random.default_rng(seed))
    for t in range(cache.n_slots):
        assert cache.occupancy[t] == pytest.approx(sum(e.size for e in entries if e.live_at(t)))
        assert cache.occupancy[t] <= cache.capacity + 1e-6


@given(st.integers(0, 2**32 - 1))
def test_empty_cache_costs_nothing_and_cost_is_monotone(seed):
    cache, _ = random_cache(np.random.default_rng(seed))
    empty = NodeCache(0, cache.capacity, cache.n_slots)
    assert aggregate_admission_cost(empty, PARAMS, 50.0, 0, 10) == 0.0
    loads = sorted(set(cache.occupancy.tolist()))
    prices = [PARAMS.size_scale * cache.capacity * (PARAMS.mu ** (x / cache.capacity) - 1) for x in loads]
    assert prices == sorted(prices)


def test_cost_at_full_load():
    cache = NodeCache(0, 100.0, 5)
    cache.admit(CacheEntry(0, 0, 4, 100.0, 1, 1.0))
    assert relative_load(cache, 2) == 1.0
    assert cost(cache, PARAMS, 2) == pytest.approx(PARAMS.size_scale * 100.0 * (PARAMS.mu - 1))
    assert total_cost(cache, PARAMS) == pytest.approx(5 * cost(cache, PARAMS, 0))


def test_admit_over_capacity_raises():
    cache = NodeCache(0, 100.0, 10)
    cache.admit(CacheEntry(0, 0, 5, 60.0, 1, 1.0))
    with pytest.raises(CapacityError):
        cache.admit(CacheEntry(1, 5, 8, 50.0, 1, 1.0))
    cache.admit(CacheEntry(1, 6, 8, 50.0, 1, 1.0))
    with pytest.raises(ValueError):
        cache.admit(CacheEntry(1, 9, 9, 1.0, 1, 1.0))


def test_entry_validation():
    with pytest.raises(ValueError):
        CacheEntry(0, 5, 4, 1.0, 1, 1.0)
    with pytest.raises(ValueError):
        CacheEntry(0, 0, 4, 1.0, 0, 1.0)


def test_flush_keeps_history_and_evict_frees_future():
    cache = NodeCache(0, 100.0, 10)
    cache.admit(CacheEntry(0, 0, 2, 30.0, 1, 1.0))
    cache.admit(CacheEntry(1, 1, 8, 40.0, 1, 1.0))
    assert [e.content for e in cache.flush_expired(3)] == [0]
    assert cache.occupancy[2] == 70.0
    cache.evict(1, 5)
    assert cache.occupancy.tolist() == [30, 70, 70, 40, 40, 0, 0, 0, 0, 0]
    assert len(cache) == 0


def test_columns_refresh_after_mutation():
    cache = NodeCache(0, 100.0, 10)
    cache.admit(CacheEntry(3, 0, 4, 10.0, 2, 1.5))
    ids, sizes, exp, ed = cache.columns()
    assert ids.tolist() == [3] and ed.tolist() == [3.0]
    cache.admit(CacheEntry(1, 0, 9, 10.0, 1, 1.0))
    assert cache.columns()[0].tolist() == [1, 3]


def test_assumption_calibration(small_scenario):
    sc = small_scenario
    rep = validate_assumptions(sc.topo, sc.routes, sc.catalog, sc.table)
    assert rep.min_ratio == pytest.approx(1.0)
    assert rep.F == pytest.approx(rep.max_ratio)
    assert rep.a1_ok
    raw = validate_assumptions(sc.topo, sc.routes, sc.catalog, sc.table, calibrate=False, size_scale=1e9)
    assert not raw.a1_ok and raw.a1_violations
