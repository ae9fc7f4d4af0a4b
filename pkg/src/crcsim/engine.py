"""Slotted-time simulation loop, run metrics and result aggregation."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .cache_state import CAP_TOL, CostParams, total_cost, validate_assumptions
from .expectation import apply_noise, init_expectations, reachable_mass, restore_on_expiry
from .policies import CRC_FAMILY, Policy, PolicyKind, SimState, make_policy
from .topology import build_random_topology, build_small_world_topology, compute_routes
from .workload import DEFAULT_HORIZON, expected_rates, generate_catalog, generate_requests

log = logging.getLogger(__name__)


class InvariantError(AssertionError):
    pass


@dataclass
class TopologySpec:
    kind: str = "random"
    n: int = 30
    mean_degree: int = 4
    rewire_prob: float = 0.1
    capacity_range: tuple = (750_000.0, 1_000_000.0)
    subnet_range: tuple = (10, 90)


@dataclass
class WorkloadSpec:
    contents: int = 10_000
    size_range: tuple = (100.0, 150.0)
    max_duration: int = 150
    horizon: int = DEFAULT_HORIZON
    zipf_exponent: float = 0.8
    rate_scale: float = 1.0


@dataclass
class RunConfig:
    topology: TopologySpec = field(default_factory=TopologySpec)
    workload: WorkloadSpec = field(default_factory=WorkloadSpec)
    policy: str = "CRC"
    seed: int = 0
    noise: float = 0.0
    calibrate: bool = True
    strict: bool = True
    check_expectations: bool = False


@dataclass
class Scenario:
    """Everything a run needs that does not depend on the policy."""

    topo: object
    routes: object
    catalog: object
    rates: np.ndarray
    trace: object
    horizon: int
    table: object = None
    report: object = None
    params: CostParams = None

    def __post_init__(self):
        if self.table is None:
            self.table = init_expectations(self.topo, self.routes, self.catalog, self.rates)
        if self.params is None:
            self.report = validate_assumptions(self.topo, self.routes, self.catalog, self.table)
            self.params = self.report.params()
        if len(self.trace) and int(self.trace.slot.max()) > self.horizon:
            raise ValueError("trace extends past the horizon")


def _seeds(seed: int):
    return np.random.SeedSequence(seed).spawn(5)


def build_scenario(cfg: RunConfig) -> Scenario:
    s_topo, s_cat, s_req, _, _ = _seeds(cfg.seed)
    tspec, wspec = cfg.topology, cfg.workload
    tseed = int(s_topo.generate_state(1)[0])
    if tspec.kind == "random":
        topo = build_random_topology(tspec.n, tseed, tspec.capacity_range, tspec.subnet_range)
    elif tspec.kind == "small_world":
        topo = build_small_world_topology(tspec.n, tspec.mean_degree, tspec.rewire_prob, tseed,
                                          tspec.capacity_range, tspec.subnet_range)
    else:
        raise ValueError(f"unknown topology kind {tspec.kind!r}")
    routes = compute_routes(topo)
    catalog = generate_catalog(topo, wspec.contents, wspec.size_range, wspec.max_duration, wspec.horizon,
                               wspec.zipf_exponent, int(s_cat.generate_state(1)[0]))
    rates = expected_rates(topo, catalog, wspec.rate_scale)
    trace = generate_requests(topo, catalog, int(s_req.generate_state(1)[0]), rates=rates)
    table = init_expectations(topo, routes, catalog, rates)
    report = validate_assumptions(topo, routes, catalog, table, calibrate=cfg.calibrate)
    return Scenario(topo, routes, catalog, rates, trace, wspec.horizon, table, report, report.params())


@dataclass
class RunMetrics:
    policy: str
    seed: int = 0
    realized_savings: int = 0
    total_cost_hops: int = 0
    no_cache_cost: int = 0
    eq1_expected_savings: float = 0.0
    requests: int = 0
    events: int = 0
    admissions: int = 0
    evictions: int = 0
    capacity_violations: int = 0
    safety_net_hits: int = 0
    lemma1_lhs: float = 0.0
    lemma1_rhs: float = 0.0
    lemma1_ok: bool = True
    assumptions_ok: bool = True
    per_slot_savings: np.ndarray = field(default=None, repr=False)
    per_slot_cost: np.ndarray = field(default=None, repr=False)
    per_slot_eq1: np.ndarray = field(default=None, repr=False)

    SCALARS = ("realized_savings", "total_cost_hops", "no_cache_cost", "eq1_expected_savings",
               "requests", "events", "admissions", "evictions", "capacity_violations",
               "safety_net_hits", "lemma1_lhs", "lemma1_rhs", "lemma1_ok", "assumptions_ok")

    def row(self) -> dict:
        d = asdict(self)
        return {k: d[k] for k in ("policy", "seed") + self.SCALARS}

    def same_as(self, other: "RunMetrics") -> bool:
        return (self.row() == other.row()
                and all(np.array_equal(getattr(self, a), getattr(other, a))
                        for a in ("per_slot_savings", "per_slot_cost", "per_slot_eq1")))


def check_lemma1(metrics: RunMetrics, caches, params: CostParams) -> bool:
    """Savings-versus-cost inequality at the end of a run; records both sides."""
    metrics.lemma1_rhs = float(sum(total_cost(c, params) for c in caches if c is not None))
    metrics.lemma1_lhs = 2.0 * params.log2_mu * metrics.eq1_expected_savings
    metrics.lemma1_ok = metrics.lemma1_lhs >= metrics.lemma1_rhs * (1 - 1e-9) - 1e-9
    return metrics.lemma1_ok


def simulate(sc: Scenario, policy, *, seed: int = 0, noise: float = 0.0, strict: bool = True,
             check_expectations: bool = False, params: CostParams | None = None,
             return_state: bool = False, prepare=None):
    """Run one policy (a kind name or a ready :class:`Policy`) over a scenario's trace."""
    if isinstance(policy, Policy):
        pol, kind = policy, policy.kind
    else:
        kind = PolicyKind.parse(policy)
        pol = make_policy(kind)
    _, _, _, s_noise, s_pol = _seeds(seed)
    table = sc.table.copy()
    if noise:
        table = apply_noise(table, noise, s_noise)
    params = params or sc.params
    st = SimState(sc.topo, sc.routes, sc.catalog, table, params, sc.horizon, s_pol,
                  deduct=kind is not PolicyKind.CCN)
    if prepare is not None:
        prepare(st)
    m = RunMetrics(policy=getattr(kind, "value", str(kind)), seed=seed)
    m.assumptions_ok = sc.report.ok if sc.report is not None else True
    n_slots = sc.horizon + 1
    sav = np.zeros(n_slots, dtype=np.int64)
    cost = np.zeros(n_slots, dtype=np.int64)
    tr = sc.trace
    slots, nodes, contents, counts = tr.slot.tolist(), tr.node.tolist(), tr.content.tolist(), tr.count.tolist()
    hop = sc.routes.hop_count.tolist()
    src = st.source
    track_seen = kind in (PolicyKind.RANDOM_V1, PolicyKind.RANDOM_V2)
    seen = st.requests_seen
    t_first = st.t_first
    serve = pol.serve
    caches = [c for c in st.caches if c is not None]
    n_ev = len(slots)
    k = 0
    admissions = 0
    no_cache = 0
    for t in range(n_slots):
        if t:
            st.flush(t)
            restore_on_expiry(table, t - 1, sc.routes, st.source, st.holders)
        s_t = c_t = 0
        while k < n_ev and slots[k] == t:
            i, j, c = nodes[k], contents[k], counts[k]
            if t_first[j] < 0:
                t_first[j] = t
            res = serve(st, t, i, j, c)
            b = hop[i][src[j]]
            h = res.hops_traveled
            s_t += c * (b - h)
            c_t += c * h
            no_cache += c * b
            if track_seen:
                seen[i, j] += c
            if res.admissions:
                admissions += len(res.admissions)
            k += 1
        sav[t] = s_t
        cost[t] = c_t
        for cache in caches:
            if cache.occupancy[t] > cache.capacity + CAP_TOL:
                m.capacity_violations += 1
                msg = (f"slot {t}: node {cache.node} holds {cache.occupancy[t]:.3f} MB "
                       f"> capacity {cache.capacity:.3f} under {m.policy}")
                if strict:
                    raise InvariantError(msg)
                log.warning(msg)
        if check_expectations and st.deduct and not table.noisy:
            _check_expectations(st, sc)
    eq1 = np.cumsum(st.eq1_diff)[:n_slots]
    m.per_slot_savings, m.per_slot_cost, m.per_slot_eq1 = sav, cost, eq1
    m.realized_savings = int(sav.sum())
    m.total_cost_hops = int(cost.sum())
    m.requests = int(sum(counts))
    m.no_cache_cost = no_cache
    m.eq1_expected_savings = float(eq1.sum())
    m.events = n_ev
    m.admissions = admissions
    m.evictions = st.evictions
    m.safety_net_hits = st.safety_net_hits
    if m.realized_savings + m.total_cost_hops != m.no_cache_cost:
        raise InvariantError("savings + paid hops differ from the no-caching cost")
    if kind in CRC_FAMILY:
        check_lemma1(m, st.caches, params)
        if strict and not m.lemma1_ok and m.assumptions_ok:
            raise InvariantError(f"Lemma-1 inequality failed: {m.lemma1_lhs} < {m.lemma1_rhs}")
    return (m, st) if return_state else m


def _check_expectations(st: SimState, sc: Scenario) -> None:
    """Non-holder E values must equal the mass that reaches them."""
    fresh = reachable_mass(sc.routes, sc.catalog, sc.rates, st.holders)
    for j, hold in enumerate(st.holders):
        for i in range(st.topo.n):
            if i in hold or i == st.source[j]:
                continue
            if not math.isclose(st.table.E[i, j], fresh[i, j], rel_tol=1e-9, abs_tol=1e-9):
                raise InvariantError(f"E[{i}, {j}] = {st.table.E[i, j]} but reachable mass is {fresh[i, j]}")


def run(cfg: RunConfig) -> RunMetrics:
    sc = build_scenario(cfg)
    return simulate(sc, cfg.policy, seed=cfg.seed, noise=cfg.noise, strict=cfg.strict,
                    check_expectations=cfg.check_expectations)


def aggregate(runs: list[RunMetrics]) -> dict:
    """Mean and standard error of every scalar metric."""
    if not runs:
        raise ValueError("nothing to aggregate")
    out = {}
    for key in RunMetrics.SCALARS:
        vals = np.array([float(getattr(r, key)) for r in runs])
        se = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
        out[key] = (float(vals.mean()), se)
    return out


def empirical_cdf(values) -> list[tuple[float, float]]:
    """Right-continuous empirical CDF as (value, fraction <= value) steps."""
    v = np.sort(np.asarray(values, dtype=float))
    if len(v) == 0:
        raise ValueError("empty sample")
    uniq, idx = np.unique(v, return_index=True)
    last = np.append(idx[1:], len(v))
    return [(float(x), float(c) / len(v)) for x, c in zip(uniq, last)]


def cdf_at(cdf: list[tuple[float, float]], x: float) -> float:
    frac = 0.0
    for v, f in cdf:
        if v <= x:
            frac = f
        else:
            break
    return frac


def normalized_ratios(numer, denom):
    """Per-topology ratios; zero denominators are dropped and their indices returned."""
    ratios, excluded = [], []
    for k, (a, b) in enumerate(zip(numer, denom)):
        if b > 0:
            ratios.append(a / b)
        else:
            excluded.append(k)
    return ratios, excluded
