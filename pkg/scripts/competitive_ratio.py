"""Offline-optimal versus online savings on small random stars."""
import argparse
import csv
import sys

from crcsim.oracle import RatioReport, competitive_ratio, random_star_instance


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--instances", type=int, default=50)
    ap.add_argument("--policy", default="CRC")
    ap.add_argument("--max-bits", type=int, default=14)
    args = ap.parse_args()

    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(RatioReport.HEADER)
    worst = 0.0
    for seed in range(args.instances):
        sc = random_star_instance(seed, max_bits=args.max_bits)
        rep = competitive_ratio(sc, args.policy, instance=f"star-{seed}")
        worst = max(worst, rep.ratio)
        w.writerow(rep.row())
    print(f"# worst ratio {worst:.4f}", file=sys.stderr)


if __name__ == "__main__":
    main()
