"""Experiment specifications: YAML parsing, validation, emission and presets.

A spec file has three optional sections::

    experiment: {name, mode, policies, replications, seed, strict, output}
    topology:   {kind, nodes, capacity_gb, capacity_sweep_gb, capacity_unit_mb,
                 subnet, mean_degree, rewire_prob}
    workload:   {contents, durations, size_mb, horizon, zipf_exponent, rate_scale, noise}

``mode`` is ``sweep`` (simulate every grid point) or ``lower_bound`` (run the
phased star construction for every ``nodes`` value).  Replication ``r`` uses
seed ``seed + r``.  ``nodes``, ``contents``, ``durations`` and ``capacity_sweep_gb`` are sweep
axes.  Each ``capacity_sweep_gb`` value moves the lower end of the capacity
range and scales the upper end by the same factor.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .policies import PolicyKind

TREND_UNIT_MB = 7.5
TREND_RATE = 4.0


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field path."""


@dataclass
class ExperimentSection:
    name: str = "custom"
    mode: str = "sweep"
    policies: list = field(default_factory=lambda: ["CRC", "CRCv2", "AllCache", "RandomV1", "RandomV2"])
    replications: int = 10
    seed: int = 0
    strict: bool = False
    output: str = "results"


@dataclass
class TopologySection:
    kind: str = "random"
    nodes: list = field(default_factory=lambda: [30])
    capacity_gb: list = field(default_factory=lambda: [750.0, 1000.0])
    capacity_sweep_gb: list = field(default_factory=list)
    capacity_unit_mb: float = 1000.0
    subnet: list = field(default_factory=lambda: [10, 90])
    mean_degree: int = 4
    rewire_prob: float = 0.1


@dataclass
class WorkloadSection:
    contents: list = field(default_factory=lambda: [10000])
    durations: list = field(default_factory=lambda: [150])
    size_mb: list = field(default_factory=lambda: [100.0, 150.0])
    horizon: int = 1000
    zipf_exponent: float = 0.8
    rate_scale: float = 1.0
    noise: float = 0.0


@dataclass
class ExperimentSpec:
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    topology: TopologySection = field(default_factory=TopologySection)
    workload: WorkloadSection = field(default_factory=WorkloadSection)

    def capacity_points(self) -> list[tuple[float, float]]:
        """Capacity ranges in paper GB, one per sweep point."""
        lo, hi = self.topology.capacity_gb
        if not self.topology.capacity_sweep_gb:
            return [(float(lo), float(hi))]
        return [(float(v), float(v) * hi / lo) for v in self.topology.capacity_sweep_gb]

    def seeds(self) -> list[int]:
        return [self.experiment.seed + r for r in range(self.experiment.replications)]

    def grid(self) -> list[dict]:
        pts = []
        for n in self.topology.nodes:
            for m in self.workload.contents:
                for dur in self.workload.durations:
                    for cap in self.capacity_points():
                        pts.append({"n": int(n), "contents": int(m), "duration": int(dur), "capacity_gb": cap})
        return pts


MODES = ("sweep", "lower_bound")
SECTIONS = {"experiment": ExperimentSection, "topology": TopologySection, "workload": WorkloadSection}


def _fail(path, msg):
    raise ConfigError(f"{path}: {msg}")


def _int(path, v, lo=None):
    if isinstance(v, bool) or not isinstance(v, int):
        _fail(path, f"expected an integer, got {v!r}")
    if lo is not None and v < lo:
        _fail(path, f"must be >= {lo}, got {v}")
    return v


def _num(path, v, lo=None, hi=None):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        _fail(path, f"expected a number, got {v!r}")
    if lo is not None and v < lo:
        _fail(path, f"must be >= {lo}, got {v}")
    if hi is not None and v > hi:
        _fail(path, f"must be <= {hi}, got {v}")
    return float(v)


def _list(path, v, item, nonempty=True):
    if not isinstance(v, list):
        _fail(path, f"expected a list, got {v!r}")
    if nonempty and not v:
        _fail(path, "sweep axis must not be empty")
    return [item(f"{path}[{k}]", x) for k, x in enumerate(v)]


def _range(path, v, item):
    vals = _list(path, v, item)
    if len(vals) != 2 or vals[0] > vals[1]:
        _fail(path, f"expected [low, high] with low <= high, got {v!r}")
    return vals


def _policy(path, v):
    try:
        return PolicyKind.parse(v).value
    except ValueError as exc:
        _fail(path, str(exc))


def _validate(spec: ExperimentSpec) -> ExperimentSpec:
    e, t, w = spec.experiment, spec.topology, spec.workload
    if not isinstance(e.name, str) or not e.name:
        _fail("experiment.name", "expected a non-empty string")
    if e.mode not in MODES:
        _fail("experiment.mode", f"expected one of {list(MODES)}, got {e.mode!r}")
    if not isinstance(e.output, str) or not e.output:
        _fail("experiment.output", "expected a non-empty path")
    e.policies = _list("experiment.policies", e.policies, _policy)
    e.replications = _int("experiment.replications", e.replications, 1)
    e.seed = _int("experiment.seed", e.seed, 0)
    if not isinstance(e.strict, bool):
        _fail("experiment.strict", f"expected true or false, got {e.strict!r}")
    if t.kind not in ("random", "small_world"):
        _fail("topology.kind", f"expected 'random' or 'small_world', got {t.kind!r}")
    t.nodes = _list("topology.nodes", t.nodes, lambda p, x: _int(p, x, 2))
    t.capacity_gb = _range("topology.capacity_gb", t.capacity_gb, lambda p, x: _num(p, x, 0.0))
    if t.capacity_gb[0] <= 0:
        _fail("topology.capacity_gb[0]", "must be > 0")
    t.capacity_sweep_gb = _list("topology.capacity_sweep_gb", t.capacity_sweep_gb,
                                lambda p, x: _num(p, x, 1e-9), nonempty=False)
    t.capacity_unit_mb = _num("topology.capacity_unit_mb", t.capacity_unit_mb, 1e-9)
    t.subnet = _range("topology.subnet", t.subnet, lambda p, x: _int(p, x, 0))
    t.mean_degree = _int("topology.mean_degree", t.mean_degree, 2)
    t.rewire_prob = _num("topology.rewire_prob", t.rewire_prob, 0.0, 1.0)
    w.contents = _list("workload.contents", w.contents, lambda p, x: _int(p, x, 1))
    w.durations = _list("workload.durations", w.durations, lambda p, x: _int(p, x, 1))
    w.size_mb = _range("workload.size_mb", w.size_mb, lambda p, x: _num(p, x, 1e-9))
    w.horizon = _int("workload.horizon", w.horizon, 1)
    w.zipf_exponent = _num("workload.zipf_exponent", w.zipf_exponent, 0.0)
    w.rate_scale = _num("workload.rate_scale", w.rate_scale, 1e-12)
    w.noise = _num("workload.noise", w.noise, 0.0, 1.0)
    return spec


def spec_from_dict(data) -> ExperimentSpec:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        _fail("<root>", f"expected a mapping, got {type(data).__name__}")
    unknown = set(data) - set(SECTIONS)
    if unknown:
        _fail(sorted(unknown)[0], f"unknown section; expected one of {sorted(SECTIONS)}")
    parts = {}
    for name, cls in SECTIONS.items():
        raw = data.get(name) or {}
        if not isinstance(raw, dict):
            _fail(name, f"expected a mapping, got {raw!r}")
        known = {f.name for f in dataclasses.fields(cls)}
        for key in raw:
            if key not in known:
                _fail(f"{name}.{key}", f"unknown key; expected one of {sorted(known)}")
        parts[name] = cls(**raw)
    return _validate(ExperimentSpec(**parts))


def spec_to_dict(spec: ExperimentSpec) -> dict:
    return dataclasses.asdict(spec)


def parse_text(text: str) -> ExperimentSpec:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"<root>: not valid YAML ({exc})") from None
    return spec_from_dict(data)


def parse_config(path) -> ExperimentSpec:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"<file>: {p} does not exist")
    return parse_text(p.read_text())


def emit_config(spec: ExperimentSpec) -> str:
    return yaml.safe_dump(spec_to_dict(spec), sort_keys=False)


# presets --------------------------------------------------------------------

ALL_CACHING = ["CRC", "CRCv2", "AllCache", "RandomV1", "RandomV2"]
REPLACEMENT = ["ReplacementCRC", "LRU", "RandomReplacement", "CCN"]


def _trend(name, policies, *, nodes=(50,), contents=(10000,), durations=(150,), sweep=(), kind="random",
           replications=10) -> ExperimentSpec:
    return _validate(ExperimentSpec(
        ExperimentSection(name=name, policies=list(policies), replications=replications),
        TopologySection(kind=kind, nodes=list(nodes), capacity_sweep_gb=list(sweep),
                        capacity_unit_mb=TREND_UNIT_MB),
        WorkloadSection(contents=list(contents), durations=list(durations), rate_scale=TREND_RATE),
    ))


def preset(name: str) -> ExperimentSpec:
    """Named configurations mirroring the evaluation figures."""
    builders = {
        "fig7a": lambda: _trend("fig7a", ALL_CACHING, nodes=(30, 50, 100)),
        "fig7b": lambda: _trend("fig7b", ALL_CACHING, contents=(2000, 4000, 6000, 8000, 10000)),
        "fig7c": lambda: _trend("fig7c", ALL_CACHING, durations=(50, 100, 150)),
        "fig8": lambda: _trend("fig8", ["CRC", "CRCv2", "AllCache", "RandomV1", "RandomV2"],
                               nodes=(30,), replications=100),
        "fig9": lambda: _trend("fig9", ALL_CACHING, nodes=(100,)),
        "fig10a": lambda: _trend("fig10a", REPLACEMENT, nodes=(30, 50, 100)),
        "fig10b": lambda: _trend("fig10b", REPLACEMENT, contents=(2000, 4000, 6000, 8000, 10000)),
        "fig10c": lambda: _trend("fig10c", REPLACEMENT, sweep=(500, 750, 1000, 1250, 1500)),
        "fig-SAa": lambda: _trend("fig-SAa", ALL_CACHING, nodes=(30, 50, 100), kind="small_world"),
        "fig-SAb": lambda: _trend("fig-SAb", ALL_CACHING, contents=(2000, 4000, 6000, 8000, 10000),
                                  kind="small_world"),
        "fig-SAc": lambda: _trend("fig-SAc", ALL_CACHING, durations=(50, 100, 150), kind="small_world"),
        "prop1": lambda: _validate(ExperimentSpec(
            ExperimentSection(name="prop1", mode="lower_bound", policies=["CRC"], replications=1),
            TopologySection(kind="random", nodes=[4, 8, 16, 32]),
            WorkloadSection())),
    }
    if name not in builders:
        raise ConfigError(f"preset: unknown preset {name!r}; expected one of {sorted(builders)}")
    return builders[name]()


PRESETS = ("fig7a", "fig7b", "fig7c", "fig8", "fig9", "fig10a", "fig10b", "fig10c",
           "fig-SAa", "fig-SAb", "fig-SAc", "prop1")
GROUPS = {"fig7": ("fig7a", "fig7b", "fig7c"), "fig10": ("fig10a", "fig10b", "fig10c"),
          "fig-SA": ("fig-SAa", "fig-SAb", "fig-SAc")}


def preset_group(name: str) -> list[ExperimentSpec]:
    """A single preset, or every panel of a multi-panel figure (``fig7``, ``fig10``, ``fig-SA``)."""
    return [preset(p) for p in GROUPS.get(name, (name,))]
