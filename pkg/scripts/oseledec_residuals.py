"""Residual ``r_n`` of the Oseledec limit for a matrix law, as a CSV on stdout.

The exponents and directions come from ``Z_T``; ``r_n`` is printed on a log
grid of ``n < T``.
"""
import argparse

import numpy as np

from horolab.laws import parse_driver
from horolab.matrixcocycle import increment_matrices, log_grid, oseledec_residuals
from horolab.spaces import PosDefinite


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=2)
    ap.add_argument("--driver", default="conjdiag")
    ap.add_argument("--T", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    sp = PosDefinite(args.size)
    gs = increment_matrices(parse_driver(args.driver, sp), args.T, args.seed, args.size)
    ns = log_grid(args.T, 30)
    r = oseledec_residuals(gs, ns)
    print("n,residual")
    for n, v in zip(ns, r):
        print(f"{int(n)},{float(v)!r}")
    tail = r[(ns >= args.T // 10) & (ns < args.T)]
    print(f"# max over [T/10, T): {np.max(tail):.3e}")


if __name__ == "__main__":
    main()
