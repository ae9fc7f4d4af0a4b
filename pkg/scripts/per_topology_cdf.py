"""Per-topology savings normalized by RandomV2 over many random topologies.

Prints a few quantiles of each policy's empirical CDF; the full steps are
in ``cdf.csv`` under the output directory.
"""
import argparse

import numpy as np

from crcsim.cli import run_experiment
from crcsim.config import preset


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--topologies", type=int, default=100)
    ap.add_argument("--nodes", type=int, default=30)
    ap.add_argument("--outdir", default="results/fig8")
    args = ap.parse_args()

    spec = preset("fig8")
    spec.experiment.replications = args.topologies
    spec.topology.nodes = [args.nodes]
    res = run_experiment(spec, args.outdir)
    for pol in spec.experiment.policies:
        steps = [(r["value"], r["fraction"]) for r in res.cdf if r["policy"] == pol]
        values = np.array([v for v, _ in steps])
        fracs = np.array([f for _, f in steps])
        qs = [values[np.searchsorted(fracs, q)] for q in (0.1, 0.5, 0.9)]
        print(f"{pol:10s} p10 {qs[0]:.3f}  median {qs[1]:.3f}  p90 {qs[2]:.3f}")


if __name__ == "__main__":
    main()
