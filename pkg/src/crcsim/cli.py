"""Command-line front end: run a configured sweep and write CSV tables.

Output files (all comma-separated with a header row):

``runs.csv``
    one row per (grid point, seed, policy), columns :data:`RUN_COLUMNS`.
``summary.csv``
    mean and standard error per (grid point, policy), columns :data:`SUMMARY_COLUMNS`.
``cdf.csv``
    per-topology savings of each policy normalized by RandomV2, as
    ``(policy, value, fraction)`` steps.  Written only when RandomV2 is run.
``lower_bound.csv``
    phased-star table for ``mode: lower_bound`` specs.
``config.yaml``
    the resolved spec, so a run can be repeated with ``--config``.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .config import (GROUPS, PRESETS, ConfigError, ExperimentSpec, emit_config, parse_config,
                     preset_group)
from .engine import (InvariantError, RunConfig, RunMetrics, TopologySpec, WorkloadSpec, aggregate,
                     build_scenario, empirical_cdf, normalized_ratios, simulate)
from .policies import CRC_FAMILY, PolicyKind

log = logging.getLogger(__name__)

POINT_COLUMNS = ("experiment", "topology", "n", "contents", "duration", "capacity_low_gb", "capacity_high_gb")
RUN_COLUMNS = POINT_COLUMNS + ("seed", "policy") + RunMetrics.SCALARS
SUMMARY_METRICS = ("realized_savings", "total_cost_hops", "eq1_expected_savings", "admissions",
                   "evictions", "capacity_violations")
SUMMARY_COLUMNS = POINT_COLUMNS + ("policy", "runs") + tuple(
    f"{m}_{s}" for m in SUMMARY_METRICS for s in ("mean", "se"))
CDF_COLUMNS = ("experiment", "policy", "value", "fraction")
CDF_BASELINE = "RandomV2"


class ExperimentError(RuntimeError):
    """A run failed; the message carries the scenario coordinates."""


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    outdir: Path
    runs: list = field(default_factory=list)
    summary: list = field(default_factory=list)
    cdf: list = field(default_factory=list)
    lower_bound: list = field(default_factory=list)
    fired: int = 0

    def metrics(self, policy: str, **point) -> list[dict]:
        """Run rows for ``policy`` whose grid coordinates match ``point``."""
        return [r for r in self.runs if r["policy"] == policy and all(r[k] == v for k, v in point.items())]

    def mean(self, metric: str, policy: str, **point) -> float:
        rows = self.metrics(policy, **point)
        if not rows:
            raise KeyError(f"no runs for {policy} at {point}")
        return sum(float(r[metric]) for r in rows) / len(rows)


def run_config(spec: ExperimentSpec, point: dict, seed: int) -> RunConfig:
    t, w = spec.topology, spec.workload
    unit = t.capacity_unit_mb
    lo, hi = point["capacity_gb"]
    return RunConfig(
        topology=TopologySpec(kind=t.kind, n=point["n"], mean_degree=t.mean_degree, rewire_prob=t.rewire_prob,
                              capacity_range=(lo * unit, hi * unit), subnet_range=tuple(t.subnet)),
        workload=WorkloadSpec(contents=point["contents"], size_range=tuple(w.size_mb),
                              max_duration=point["duration"], horizon=w.horizon,
                              zipf_exponent=w.zipf_exponent, rate_scale=w.rate_scale),
        seed=seed, noise=w.noise, strict=spec.experiment.strict)


def _point_row(spec: ExperimentSpec, point: dict) -> dict:
    lo, hi = point["capacity_gb"]
    return {"experiment": spec.experiment.name, "topology": spec.topology.kind, "n": point["n"],
            "contents": point["contents"], "duration": point["duration"],
            "capacity_low_gb": lo, "capacity_high_gb": hi}


def _run_task(task) -> list[dict]:
    """Build one scenario and run every policy on it (worker entry point)."""
    spec, point, seed = task
    cfg = run_config(spec, point, seed)
    where = (f"{spec.experiment.name} n={point['n']} contents={point['contents']} "
             f"duration={point['duration']} capacity={point['capacity_gb']} seed={seed}")
    sc = build_scenario(cfg)
    rows = []
    for pol in spec.experiment.policies:
        try:
            m = simulate(sc, pol, seed=seed, noise=cfg.noise, strict=cfg.strict)
        except InvariantError as exc:
            raise ExperimentError(f"{where} policy={pol}: {exc}") from exc
        rows.append({**_point_row(spec, point), **m.row()})
    return rows


def assertion_fired(row: dict) -> bool:
    """Capacity overflow, or the savings-versus-cost inequality failing for a
    CRC-family run whose assumptions hold."""
    if int(row["capacity_violations"]) > 0:
        return True
    crc = PolicyKind.parse(row["policy"]) in CRC_FAMILY
    return crc and row["assumptions_ok"] and not row["lemma1_ok"]


def _summarize(spec: ExperimentSpec, runs: list[dict]) -> list[dict]:
    out = []
    for point in spec.grid():
        base = _point_row(spec, point)
        for pol in spec.experiment.policies:
            rows = [r for r in runs if r["policy"] == pol and all(r[k] == v for k, v in base.items())]
            agg = aggregate([_as_metrics(r) for r in rows])
            row = {**base, "policy": pol, "runs": len(rows)}
            for m in SUMMARY_METRICS:
                row[f"{m}_mean"], row[f"{m}_se"] = agg[m]
            out.append(row)
    return out


def _as_metrics(row: dict) -> RunMetrics:
    return RunMetrics(**{k: row[k] for k in ("policy", "seed") + RunMetrics.SCALARS})


def _cdf(spec: ExperimentSpec, runs: list[dict]) -> list[dict]:
    if CDF_BASELINE not in spec.experiment.policies:
        return []
    key = lambda r: tuple(r[k] for k in POINT_COLUMNS) + (r["seed"],)
    base = {key(r): r["realized_savings"] for r in runs if r["policy"] == CDF_BASELINE}
    out = []
    for pol in spec.experiment.policies:
        rows = [r for r in runs if r["policy"] == pol]
        ratios, dropped = normalized_ratios([r["realized_savings"] for r in rows], [base[key(r)] for r in rows])
        if dropped:
            log.warning("%s: %d topologies dropped from the CDF (baseline saved nothing)", pol, len(dropped))
        if ratios:
            out.extend({"experiment": spec.experiment.name, "policy": pol, "value": v, "fraction": f}
                       for v, f in empirical_cdf(ratios))
    return out


def _write(path: Path, columns, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in r.items()})


def _lower_bound(spec: ExperimentSpec) -> list[dict]:
    from .oracle import LowerBoundRow, lower_bound_experiment
    rows = []
    for row in lower_bound_experiment(spec.topology.nodes, policy=spec.experiment.policies[0]):
        rows.append({**dict(zip(LowerBoundRow.HEADER, row.row())), "ok": row.ok})
    return rows


def run_experiment(spec: ExperimentSpec, outdir=None, jobs: int = 1) -> ExperimentResult:
    """Run the sweep-by-replication grid and write the result tables."""
    out = Path(outdir if outdir is not None else spec.experiment.output)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(emit_config(spec))
    res = ExperimentResult(spec, out)
    if spec.experiment.mode == "lower_bound":
        res.lower_bound = _lower_bound(spec)
        res.fired = sum(not r["ok"] for r in res.lower_bound)
        _write(out / "lower_bound.csv", tuple(res.lower_bound[0]), res.lower_bound)
        return res
    tasks = [(spec, point, seed) for point in spec.grid() for seed in spec.seeds()]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_run_task, tasks))
    else:
        chunks = [_run_task(t) for t in tasks]
    res.runs = [r for chunk in chunks for r in chunk]
    res.summary = _summarize(spec, res.runs)
    res.cdf = _cdf(spec, res.runs)
    res.fired = sum(assertion_fired(r) for r in res.runs)
    _write(out / "runs.csv", RUN_COLUMNS, res.runs)
    _write(out / "summary.csv", SUMMARY_COLUMNS, res.summary)
    if res.cdf:
        _write(out / "cdf.csv", CDF_COLUMNS, res.cdf)
    return res


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="crcsim", description="Run cache-placement experiments.")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", type=Path, help="YAML experiment file")
    src.add_argument("--preset", choices=PRESETS + tuple(GROUPS), help="named figure configuration")
    p.add_argument("--seed", type=int, help="override the base seed")
    p.add_argument("--replications", type=int, help="override the replication count")
    p.add_argument("--outdir", type=Path, help="output directory (default: experiment.output)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--strictness", choices=("warn", "abort"), help="on an invariant failure, log or stop")
    p.add_argument("--emit-config", action="store_true", help="print the resolved spec and exit")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        specs = preset_group(args.preset) if args.preset else [parse_config(args.config) if args.config
                                                               else ExperimentSpec()]
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    fired = 0
    for spec in specs:
        if args.seed is not None:
            spec.experiment.seed = args.seed
        if args.replications is not None:
            spec.experiment.replications = args.replications
        if args.strictness:
            spec.experiment.strict = args.strictness == "abort"
        if args.emit_config:
            sys.stdout.write(emit_config(spec))
            continue
        outdir = args.outdir / spec.experiment.name if args.outdir and len(specs) > 1 else args.outdir
        try:
            res = run_experiment(spec, outdir, jobs=args.jobs)
        except ExperimentError as exc:
            print(f"aborted: {exc}", file=sys.stderr)
            return 1
        fired += res.fired
        print(f"{spec.experiment.name}: {len(res.runs) or len(res.lower_bound)} rows -> {res.outdir}"
              + (f" ({res.fired} assertion failures)" if res.fired else ""))
    return 1 if fired else 0


if __name__ == "__main__":
    sys.exit(main())
