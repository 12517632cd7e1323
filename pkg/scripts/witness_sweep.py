"""Intersection witnesses over a grid of walks, eps values and seeds.

Prints one line per run: start time N, witness index n and the smallest margin.
"""
import argparse

from horolab.laws import parse_driver
from horolab.shadows import find_intersection_witness, suggest_start_time, verify_witness
from horolab.spaces import parse_space
from horolab.walks import sample_walk


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--walks", nargs="+", default=["f2:srw", "z1:biased:0.7"], help="space:driver pairs")
    ap.add_argument("--eps", type=float, nargs="+", default=[0.1, 0.2, 0.5])
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--T", type=int, default=100_000)
    ap.add_argument("--gap", type=int, default=100)
    args = ap.parse_args()
    print("space,driver,eps,seed,N,K,n,min_margin,verified")
    for item in args.walks:
        space_text, driver_text = item.split(":", 1)
        sp = parse_space(space_text)
        for seed in range(args.seeds):
            traj = sample_walk(sp, parse_driver(driver_text, sp), args.T, seed)
            for eps in args.eps:
                st = suggest_start_time(traj, eps)
                M = st.N + args.gap
                horizon = min(10 * M, traj.T)
                if M > horizon:
                    print(f"{space_text},{driver_text},{eps},{seed},{st.N},{st.K},,,horizon too short")
                    continue
                w = find_intersection_witness(traj, eps, st.N, M, horizon)
                low = float(w.margins.min()) if w.found else w.near_miss_margin
                print(f"{space_text},{driver_text},{eps},{seed},{st.N},{st.K},{w.n},{low!r},{verify_witness(traj, w)}")


if __name__ == "__main__":
    main()
