"""Phased-star construction: how much of each phase CRC keeps, and the
normalized savings G(k) / 2**k."""
import argparse

from crcsim.oracle import LowerBoundRow, lower_bound_experiment


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--nodes", type=int, nargs="+", default=[4, 8, 16, 32])
    ap.add_argument("--policy", default="CRC")
    args = ap.parse_args()

    print(*LowerBoundRow.HEADER, "fractions", sep="\t")
    for row in lower_bound_experiment(args.nodes, policy=args.policy):
        print(*row.row(), ",".join(f"{f:.2f}" for f in row.fractions), sep="\t")


if __name__ == "__main__":
    main()
