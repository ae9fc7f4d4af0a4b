"""Run a figure preset and print mean savings and cost per sweep point.

    python scripts/run_trends.py fig7a --replications 3 --outdir out/fig7a
"""
import argparse
from collections import defaultdict

from crcsim.cli import run_experiment
from crcsim.config import PRESETS, preset


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("preset", choices=[p for p in PRESETS if p != "prop1"])
    ap.add_argument("--replications", type=int)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--outdir", default=None)
    args = ap.parse_args()

    spec = preset(args.preset)
    spec.experiment.seed = args.seed
    if args.replications:
        spec.experiment.replications = args.replications
    res = run_experiment(spec, args.outdir or f"results/{args.preset}")

    table = defaultdict(dict)
    for row in res.summary:
        key = (row["n"], row["contents"], row["duration"], row["capacity_low_gb"])
        table[key][row["policy"]] = (row["realized_savings_mean"], row["total_cost_hops_mean"])
    pols = spec.experiment.policies
    print("n contents duration capacity | " + " | ".join(f"{p} savings/cost" for p in pols))
    for key, vals in table.items():
        cells = " | ".join(f"{vals[p][0]:.0f}/{vals[p][1]:.0f}" for p in pols)
        print(" ".join(str(k) for k in key), "|", cells)
    if res.fired:
        print(f"{res.fired} runs tripped an invariant")


if __name__ == "__main__":
    main()
