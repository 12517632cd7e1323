"""Drift of the simple random walk on F_N against the birth-death value (N - 1)/N.

    python3 scripts/drift_free_groups.py --ranks 2 3 4 --T 200000 --seeds 8
"""
import argparse

from horolab.laws import parse_driver
from horolab.lln import estimate_drift
from horolab.spaces import FreeGroup


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--ranks", type=int, nargs="+", default=[2, 3, 4])
    ap.add_argument("--T", type=int, default=200_000)
    ap.add_argument("--seeds", type=int, default=8)
    args = ap.parse_args()
    print("rank,A_hat,ci,oracle")
    for n in args.ranks:
        sp = FreeGroup(n)
        est = estimate_drift(sp, parse_driver("srw", sp), args.T, range(args.seeds))
        print(f"{n},{est.A_hat:.6f},{est.ci:.6f},{(n - 1) / n:.6f}")


if __name__ == "__main__":
    main()
