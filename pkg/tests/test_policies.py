import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crcsim.cache_state import CacheEntry, CostParams, NodeCache, aggregate_admission_cost
from crcsim.engine import build_scenario, simulate
from crcsim.expectation import init_expectations
from crcsim.policies import (PolicyKind, SimState, crc_admission_test, crc_decide, make_policy,
                             replacement_crc_decide)
from crcsim.scenarios import custom_topology
from crcsim.topology import compute_routes
from crcsim.workload import Catalog, Content

from conftest import small_config

PARAMS = CostParams.build(n=10, T=20, F=1.0)


# admission rule -------------------------------------------------------------

def test_empty_cache_admits_positive_savings():
    cache = NodeCache(0, 100.0, 30)
    assert aggregate_admission_cost(cache, PARAMS, 10.0, 0, 5) == 0.0
    # two hops below the nearest copy with aggregated rate 4 + 2
    assert crc_decide(cache, PARAMS, 10.0, 0, 5, d=2, E=4 + 2)


def test_zero_savings_rejected():
    assert not crc_decide(NodeCache(0, 100.0, 30), PARAMS, 10.0, 0, 5, d=3, E=0.0)


def test_near_full_cache_rejects_even_maximal_savings():
    D, r = 100.0, 10.0
    cache = NodeCache(0, D, 30)
    cache.admit(CacheEntry(0, 0, 29, D - r / 2, 1, 1.0))
    # the largest per-slot saving the density bound allows: E * b <= n T F r
    best = PARAMS.n * PARAMS.T * PARAMS.F * r
    per_slot_cost = r / D * D * (PARAMS.mu ** (1 - r / (2 * D)) - 1)
    assert per_slot_cost > best
    passes, _ = crc_admission_test(cache, PARAMS, r, 0, 5, d=1, E=best)
    assert not passes


def test_tie_admits():
    cache = NodeCache(0, 100.0, 10)
    cache.admit(CacheEntry(0, 0, 9, 50.0, 1, 1.0))
    price = aggregate_admission_cost(cache, PARAMS, 10.0, 2, 3)
    assert crc_decide(cache, PARAMS, 10.0, 2, 3, d=1, E=price / 4)
    assert not crc_decide(cache, PARAMS, 10.0, 2, 3, d=1, E=price / 4 * (1 - 1e-9))


# replacement rule -------------------------------------------------------------

def brute_force_replacement(entries, D, params, content, size, t0, duration, d, E, n_slots):
    """Slot-by-slot evaluation of the swap scores; independent of the prefix sums."""
    occ = [sum(e.size for e in entries if e.admitted_at <= t <= e.expiry) for t in range(n_slots)]
    t1 = min(t0 + duration, n_slots - 1)
    price = lambda load: params.size_scale * size * (params.mu ** (load / D) - 1)
    plain = sum(price(occ[t]) for t in range(t0, t1 + 1))
    if E * d > 0 and (duration + 1) * E * d >= plain and max(occ[t0:t1 + 1]) + size <= D + 1e-9:
        return "admit", None
    scores = [((duration + 1) * E * d - plain, content)]
    for e in entries:
        if e.expiry < t0:
            continue
        if any(occ[t] - (e.size if t <= e.expiry else 0.0) + size > D + 1e-9 for t in range(t0, t1 + 1)):
            continue
        window = range(t0, e.expiry + 1)
        gain = sum(e.frozen_E * e.frozen_d for _ in window)
        scores.append((gain - sum(price(occ[t] + size - e.size) - 0 for t in window), e.content))
    best = min(scores)
    return ("reject", None) if best[1] == content else ("replace", best[1])


@st.composite
def replacement_cases(draw):
    n_slots = 25
    D = draw(st.floats(50, 300))
    cache = NodeCache(0, D, n_slots)
    entries = []
    for k in range(draw(st.integers(0, 6))):
        t0 = draw(st.integers(0, 12))
        e = CacheEntry(100 + k, t0, draw(st.integers(t0, n_slots - 1)), draw(st.floats(5, 80)),
                       draw(st.integers(1, 4)), draw(st.floats(0.0, 50.0)))
        if cache.fits(e.size, e.admitted_at, e.expiry):
            cache.admit(e)
            entries.append(e)
    t0 = draw(st.integers(0, 15))
    cache.flush_expired(t0)
    entries = [e for e in entries if e.expiry >= t0]
    req = dict(content=draw(st.integers(0, 200)), size=draw(st.floats(5, 60)), t0=t0,
               duration=draw(st.integers(0, 10)), d=draw(st.integers(1, 4)), E=draw(st.floats(0.0, 60.0)))
    return cache, entries, req


@settings(max_examples=300)
@given(replacement_cases())
def test_replacement_matches_slot_by_slot_oracle(case):
    cache, entries, req = case
    got = replacement_crc_decide(cache, PARAMS, **req)
    want = brute_force_replacement(entries, cache.capacity, PARAMS, n_slots=cache.n_slots, **req)
    assert got == want


@settings(max_examples=200)
@given(replacement_cases())
def test_replacement_never_evicts_when_plain_test_passes(case):
    cache, _, req = case
    if crc_decide(cache, PARAMS, req["size"], req["t0"], req["duration"], req["d"], req["E"]):
        assert replacement_crc_decide(cache, PARAMS, **req) == ("admit", None)


def test_low_value_entry_is_replaced():
    D = 100.0
    cache = NodeCache(0, D, 20)
    cache.admit(CacheEntry(7, 0, 15, 60.0, 1, 0.01))
    # hand evaluation over the victim's window 2..15 (14 slots):
    # Diff(7) = 14 * 0.01 - 14 * 60 * (mu**0.6 - 1); own = 11 * 50 * 2 - 11 * 60 * (mu**0.6 - 1)
    price = 60.0 * (PARAMS.mu ** 0.6 - 1)
    diff_victim = 14 * 0.01 - 14 * price
    own = 11 * 100.0 - 11 * price
    assert diff_victim < own
    assert replacement_crc_decide(cache, PARAMS, 3, 60.0, 2, 10, 2, 50.0) == ("replace", 7)


def test_no_feasible_swap_rejects():
    cache = NodeCache(0, 100.0, 20)
    for k in range(9):
        cache.admit(CacheEntry(k + 1, 0, 19, 10.0, 1, 0.0))
    assert replacement_crc_decide(cache, PARAMS, 0, 95.0, 0, 5, 3, 1e6) == ("reject", None)


# serving protocol ---------------------------------------------------------------

def line_state(weights, capacity, horizon=10, sizes=(1.0,), extra_edges=(), n=None):
    """Chain 0-1-...; every content lives at node 0."""
    n = n or len(weights)
    edges = [(k, k + 1) for k in range(len(weights) - 1)] + list(extra_edges)
    topo = custom_topology(n, edges, capacity)
    routes = compute_routes(topo)
    cat = Catalog([Content(j, 0, s, horizon, 1.0, 0, horizon) for j, s in enumerate(sizes)])
    W = np.zeros((n, len(sizes)))
    W[: len(weights), :] = np.asarray(weights, dtype=float)[:, None]
    table = init_expectations(topo, routes, cat, W)
    return SimState(topo, routes, cat, table, PARAMS, horizon, 0)


def test_header_arithmetic_on_chain():
    st_ = line_state([0, 1, 2, 3, 4], [0, 10, 10, 10, 10])
    res = make_policy("CRC").serve(st_, 0, 4, 0, 1)
    assert [u for u, _ in res.admissions] == [4, 3, 2, 1]
    assert [e.frozen_E for _, e in res.admissions] == [4, 3, 2, 1]
    assert [e.frozen_d for _, e in res.admissions] == [4, 3, 2, 1]
    assert res.headers == [0, 4, 7, 9]
    assert res.serving_node == 0 and res.hops_traveled == 4


def test_request_at_holder_costs_nothing():
    st_ = line_state([0, 1, 2], [0, 10, 10])
    pol = make_policy("CRC")
    pol.serve(st_, 0, 2, 0, 1)
    res = pol.serve(st_, 1, 2, 0, 1)
    assert (res.serving_node, res.hops_traveled, res.admissions) == (2, 0, [])


def test_closest_replica_off_path():
    # requester 0, source 5 hops away, a copy one hop away at node 6 off the path
    caps = [0, 0, 0, 0, 0, 0, 10]
    results = {}
    for kind in ("CRC", "CRCv2"):
        topo = custom_topology(7, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 6)], caps)
        routes = compute_routes(topo)
        cat = Catalog([Content(0, 5, 1.0, 10, 1.0, 0, 10)])
        table = init_expectations(topo, routes, cat, np.ones((7, 1)))
        st_ = SimState(topo, routes, cat, table, PARAMS, 10, 0)
        st_.caches[6].admit(CacheEntry(0, 0, 10, 1.0, 1, 1.0))
        st_.holders[0].add(6)
        results[kind] = make_policy(kind).serve(st_, 0, 0, 0, 1).hops_traveled
    assert results == {"CRC": 5, "CRCv2": 1}


def test_lru_evicts_least_recently_requested():
    st_ = line_state([0, 0, 1], [0, 2, 0], sizes=(1.0, 1.0, 1.0))
    pol = make_policy("LRU")
    log = []
    for t, j in enumerate([0, 1, 0, 2]):
        st_.flush(t)
        st_.expiry(j, t)
        log.append(pol.serve(st_, t, 2, j, 1))
    assert log[2].hops_traveled == 1
    assert log[3].replacements == [(1, 1)]
    assert sorted(st_.caches[1].entries) == [0, 2]


def test_random_needs_observed_requests():
    st_ = line_state([0, 1, 1], [0, 5, 5])
    pol = make_policy("RandomV1")
    assert pol.serve(st_, 0, 2, 0, 1).admissions == []
    st_.subnet = [1, 1, 1]
    st_.requests_seen[:, 0] = 1
    assert [u for u, _ in pol.serve(st_, 1, 2, 0, 1).admissions] == [2, 1]


def test_all_cache_fills_path_while_room_remains():
    st_ = line_state([0, 1, 1], [0, 1.5, 1.5], sizes=(1.0, 1.0))
    pol = make_policy("AllCache")
    assert [u for u, _ in pol.serve(st_, 0, 2, 0, 1).admissions] == [2, 1]
    assert pol.serve(st_, 1, 2, 1, 1).admissions == []


def test_ccn_caches_on_delivery_path():
    st_ = line_state([0, 1, 1, 1], [0, 5, 5, 5])
    pol = make_policy("CCN")
    res = pol.serve(st_, 0, 3, 0, 1)
    assert [u for u, _ in res.admissions] == [3, 2, 1]
    res = pol.serve(st_, 1, 2, 0, 1)
    assert res.hops_traveled == 0


def test_policy_kind_parsing():
    assert PolicyKind.parse("crcv2") is PolicyKind.CRC_V2
    assert PolicyKind.parse(PolicyKind.LRU) is PolicyKind.LRU
    with pytest.raises(ValueError):
        PolicyKind.parse("MRU")


# run-level properties -------------------------------------------------------------

@settings(max_examples=10)
@given(st.integers(0, 10_000), st.sampled_from(["CRC", "CRCv2", "AllCache", "RandomV1", "RandomV2"]))
def test_non_preemptive_policies_never_evict(tight_scenario, seed, policy):
    m = simulate(tight_scenario, policy, seed=seed)
    assert m.evictions == 0 and m.capacity_violations == 0


@settings(max_examples=10)
@given(st.integers(0, 10_000))
def test_closest_serving_never_saves_less(tight_scenario, seed):
    v1 = simulate(tight_scenario, "CRC", seed=seed)
    v2 = simulate(tight_scenario, "CRCv2", seed=seed)
    assert v1.admissions == v2.admissions
    assert v2.realized_savings >= v1.realized_savings


@pytest.mark.parametrize("policy", ["RandomV1", "RandomV2", "RandomReplacement"])
def test_randomized_policies_are_seeded(tight_scenario, policy):
    a = simulate(tight_scenario, policy, seed=4)
    b = simulate(tight_scenario, policy, seed=4)
    assert a.same_as(b)


def test_crc_safety_net_silent():
    sc = build_scenario(small_config(seed=5, n=10, contents=300, capacity=(3000.0, 4000.0)))
    assert sc.report.ok
    for policy in ("CRC", "CRCv2"):
        m = simulate(sc, policy)
        assert m.admissions > 0
        assert m.safety_net_hits == 0 and m.capacity_violations == 0 and m.lemma1_ok
