"""Exit-gate checks.  Each test records one pass/fail line, printed in the
terminal summary (and by ``python tests/test_acceptance.py``).

The simulation-backed criteria run the figure presets at full scale and take
roughly an hour on one core.  The replacement sweeps use FIG10_SEEDS
replications instead of the preset's ten to fit that budget.
"""
import math
import sys

import numpy as np
import pytest

from crcsim import cli
from crcsim.cache_state import CacheEntry, CostParams, NodeCache, aggregate_admission_cost
from crcsim.config import preset
from crcsim.engine import build_scenario, simulate
from crcsim.expectation import restore_on_expiry
from crcsim.oracle import competitive_ratio, lower_bound_experiment, optimal_placement, random_star_instance
from crcsim.policies import PolicyKind
from crcsim.scenarios import chain_example, chain_online_savings, staggered_node, tree_example, FirstFitPolicy

from conftest import ACCEPTANCE, small_config

pytestmark = pytest.mark.acceptance

CRC_PAIR = ["CRC", "CRCv2"]
BASELINES = ["AllCache", "RandomV1", "RandomV2"]
SAVINGS_FACTOR = 1.8        # criterion 6
COST_FACTOR = 0.75          # criterion 7
REPLACEMENT_FACTOR = 1.2    # criterion 8
CAPACITY_FACTOR = 0.9       # criterion 9
RATIO_INSTANCES = 50        # criterion 4
FIG10_SEEDS = 3


def record(num, ok, detail):
    ACCEPTANCE[num] = (bool(ok), detail)
    assert ok, detail


# shared runs ------------------------------------------------------------------

@pytest.fixture(scope="module")
def fig7(tmp_path_factory):
    """fig7a with every caching scheme (its n=100 point is the fig9 setting),
    fig7b and fig7c with the two CRC variants."""
    out = {}
    for name in ("fig7a", "fig7b", "fig7c"):
        spec = preset(name)
        spec.experiment.policies = CRC_PAIR + BASELINES if name == "fig7a" else CRC_PAIR
        out[name] = cli.run_experiment(spec, tmp_path_factory.mktemp(name))
    return out


@pytest.fixture(scope="module")
def fig10a(tmp_path_factory):
    spec = preset("fig10a")
    spec.experiment.replications = FIG10_SEEDS
    return cli.run_experiment(spec, tmp_path_factory.mktemp("fig10a"))


# criteria ----------------------------------------------------------------------

def test_criterion_01_capacity_safety(fig7):
    rows = [r for res in fig7.values() for r in res.runs if r["policy"] in CRC_PAIR]
    bad = sum(r["capacity_violations"] for r in rows)
    net = sum(r["safety_net_hits"] for r in rows)
    record(1, bad == 0 and len(rows) == 2 * 10 * (3 + 5 + 3),
           f"{len(rows)} CRC/CRCv2 runs over fig7a/b/c, {bad} capacity violations, {net} safety-net hits")


def test_criterion_02_savings_cost_inequality(fig7):
    rows = [r for res in fig7.values() for r in res.runs if r["policy"] in CRC_PAIR]
    failed = [r for r in rows if not r["lemma1_ok"]]
    slack = min(r["lemma1_lhs"] / r["lemma1_rhs"] for r in rows if r["lemma1_rhs"] > 0)
    record(2, not failed and all(r["assumptions_ok"] for r in rows),
           f"{len(rows) - len(failed)}/{len(rows)} runs satisfy 2 log2(mu) S >= cost; tightest lhs/rhs {slack:.3g}")


def test_criterion_03_worked_examples():
    checks = {}
    for order, want in (("XY", 13), ("YX", 31)):
        m = simulate(chain_example(order), FirstFitPolicy())
        checks[f"second pair {order}={want}"] = int(m.per_slot_savings[2]) == want
    checks["online average 23"] = chain_online_savings("en_route")["average"] == 23
    checks["closest online average 24"] = chain_online_savings("closest")["average"] == 24
    checks["offline 32"] = optimal_placement(chain_example("XY"), serving="en_route")[1] == 32
    checks["offline closest 33"] = optimal_placement(chain_example("XY"), serving="closest")[1] == 33
    sc, prepare = tree_example()
    from crcsim.policies import SimState, make_policy
    st = SimState(sc.topo, sc.routes, sc.catalog, sc.table.copy(), sc.params, sc.horizon)
    prepare(st)
    pol = make_policy("CRC")
    pol.serve(st, 0, 0, 0, 1)
    st.flush(1)
    res = pol.serve(st, 1, 5, 0, 1)
    checks["header 2 at v2"] = res.headers == [0.0, 2.0]
    checks["E_2 = 2"] = st.table.E[2, 0] == 2
    checks["only v5 caches"] = [u for u, _ in res.admissions] == [5]
    checks["occupancy 3,3,3,2,2,2,2,1,1,0,0"] = staggered_node().occupancy_counts() == [3, 3, 3, 2, 2, 2, 2, 1, 1, 0, 0]
    bad = [k for k, ok in checks.items() if not ok]
    record(3, not bad, f"{len(checks) - len(bad)}/{len(checks)} exact values" + (f"; wrong: {bad}" if bad else ""))


def test_criterion_04_oracle_bounded_ratio():
    reports = [competitive_ratio(random_star_instance(s), "CRC", instance=f"star-{s}")
               for s in range(RATIO_INSTANCES)]
    worst = max(r.ratio / r.bound for r in reports)
    dominated = all(r.offline_savings >= r.online_savings for r in reports)
    record(4, dominated and all(r.ratio <= r.bound for r in reports),
           f"{len(reports)} star instances, offline >= online everywhere: {dominated}, "
           f"worst ratio/bound {worst:.3f}")


def test_criterion_05_lower_bound_construction():
    rows = lower_bound_experiment([4, 8, 16, 32])
    detail = ", ".join(f"n={r.n}: sum {r.sum_ratio:.4f} min {r.min_ratio:.4f} <= {r.bound:.4f}" for r in rows)
    record(5, all(r.ok for r in rows), detail)


def test_criterion_06_savings_trend(fig7):
    res = fig7["fig7a"]
    crc = res.mean("realized_savings", "CRC", n=100)
    allc = res.mean("realized_savings", "AllCache", n=100)
    record(6, crc >= SAVINGS_FACTOR * allc,
           f"n=100: CRC {crc:.0f} / All-Cache {allc:.0f} = {crc / allc:.3f} (need >= {SAVINGS_FACTOR})")


def test_criterion_07_cost_trend(fig7):
    res = fig7["fig7a"]
    crc = res.mean("total_cost_hops", "CRC", n=100)
    best_name, best = min(((p, res.mean("total_cost_hops", p, n=100)) for p in BASELINES), key=lambda x: x[1])
    record(7, crc <= COST_FACTOR * best,
           f"n=100: CRC cost {crc:.0f} / best baseline {best_name} {best:.0f} = {crc / best:.3f} "
           f"(need <= {COST_FACTOR})")


def test_criterion_08_replacement_trend(fig10a):
    parts, ok = [], True
    for n in fig10a.spec.topology.nodes:
        ours = fig10a.mean("realized_savings", "ReplacementCRC", n=n)
        for other in ("LRU", "RandomReplacement", "CCN"):
            ratio = ours / fig10a.mean("realized_savings", other, n=n)
            ok &= ratio >= REPLACEMENT_FACTOR
            parts.append(f"n={n} vs {other} {ratio:.3f}")
    record(8, ok, f"{FIG10_SEEDS} seeds; " + ", ".join(parts) + f" (need >= {REPLACEMENT_FACTOR})")


def test_criterion_09_capacity_efficiency(tmp_path_factory):
    spec = preset("fig10c")
    spec.experiment.replications = FIG10_SEEDS
    lo, hi = spec.topology.capacity_gb
    point = spec.grid()[0]
    ours, lru = [], []
    for seed in spec.seeds():
        small = {**point, "capacity_gb": (500.0, 500.0 * hi / lo)}
        large = {**point, "capacity_gb": (1500.0, 1500.0 * hi / lo)}
        ours.append(simulate(build_scenario(cli.run_config(spec, small, seed)), "ReplacementCRC",
                             seed=seed, strict=False).realized_savings)
        lru.append(simulate(build_scenario(cli.run_config(spec, large, seed)), "LRU",
                            seed=seed, strict=False).realized_savings)
    a, b = float(np.mean(ours)), float(np.mean(lru))
    record(9, a >= CAPACITY_FACTOR * b,
           f"{FIG10_SEEDS} seeds, n={point['n']}: Replacement-CRC@500 {a:.0f} / LRU@1500 {b:.0f} = {a / b:.3f} "
           f"(need >= {CAPACITY_FACTOR})")


def test_criterion_10_property_suites(fig7, tmp_path):
    notes = []
    # expectation round trip
    sc = build_scenario(small_config(seed=3, n=10, contents=120, capacity=(500.0, 700.0)))
    trip = True
    for pol in ("CRC", "CRCv2", "AllCache", "ReplacementCRC", "LRU"):
        _, st = simulate(sc, pol, check_expectations=True, return_state=True, strict=False)
        st.flush(sc.horizon + 1)
        restore_on_expiry(st.table, sc.horizon, sc.routes, st.source, st.holders)
        trip &= bool(np.allclose(st.table.E, sc.table.E, rtol=1e-9, atol=1e-9))
    notes.append(f"round-trip {'ok' if trip else 'BROKEN'}")
    # aggregate cost against slot-by-slot recomputation
    rng = np.random.default_rng(10)
    params = CostParams.build(20, 30, 2.5, 0.3)
    agree = 0
    for _ in range(1000):
        cache = NodeCache(0, float(rng.uniform(100, 500)), 40)
        entries = []
        for j in range(int(rng.integers(0, 10))):
            t0 = int(rng.integers(0, 40))
            e = CacheEntry(j, t0, int(rng.integers(t0, 40)), float(rng.uniform(5, 100)), 1, 1.0)
            if cache.fits(e.size, e.admitted_at, e.expiry):
                cache.admit(e)
                entries.append(e)
        size, t0, dur = float(rng.uniform(1, 100)), int(rng.integers(0, 40)), int(rng.integers(0, 20))
        slow = sum(params.size_scale * size * (params.mu ** (sum(e.size for e in entries if e.live_at(t))
                                                             / cache.capacity) - 1)
                   for t in range(t0, min(t0 + dur, 39) + 1))
        agree += math.isclose(aggregate_admission_cost(cache, params, size, t0, dur), slow,
                              rel_tol=1e-9, abs_tol=1e-9)
    notes.append(f"cost {agree}/1000")
    # conservation on every recorded run
    rows = [r for res in fig7.values() for r in res.runs]
    conserved = sum(r["realized_savings"] + r["total_cost_hops"] == r["no_cache_cost"] for r in rows)
    notes.append(f"conservation {conserved}/{len(rows)}")
    # determinism: the same spec twice gives byte-identical files
    spec = preset("fig7a")
    spec.topology.nodes, spec.experiment.replications = [30], 2
    a = cli.run_experiment(spec, tmp_path / "a")
    b = cli.run_experiment(spec, tmp_path / "b")
    same = all((a.outdir / f).read_bytes() == (b.outdir / f).read_bytes()
               for f in ("runs.csv", "summary.csv", "cdf.csv"))
    notes.append(f"determinism {'ok' if same else 'DIFFERS'}")
    record(10, trip and agree == 1000 and conserved == len(rows) and same, ", ".join(notes))


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
