"""Write ``-h(Z_n x0)/n`` against ``a(n)/n`` for one trajectory per stock walk.

One CSV per walk lands in ``--out`` (columns n, horofunction, radial).
"""
import argparse
from pathlib import Path

from horolab.laws import parse_driver
from horolab.lln import check_lln, limit_horofunction, tail_mean
from horolab.spaces import parse_space
from horolab.walks import sample_walk

WALKS = [
    ("z1", "biased:0.7", 100_000),
    ("f2", "srw", 1_000_000),
    ("h2", "srw", 20_000),
    ("pos2", "conjdiag", 20_000),
    ("pos3", "rotdiag:1.5,0.8", 20_000),
]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="lln-out")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for space_text, driver_text, T in WALKS:
        sp = parse_space(space_text)
        traj = sample_walk(sp, parse_driver(driver_text, sp), T, args.seed)
        A = tail_mean(traj)
        rep = check_lln(traj, limit_horofunction(traj, A), A)
        name = f"{space_text}_{driver_text.split(':')[0]}.csv"
        rows = ["n,horofunction,radial"] + [f"{n},{v!r},{r!r}" for n, v, r in zip(rep.ns, rep.values, rep.radial)]
        (out / name).write_text("\n".join(rows) + "\n")
        print(f"{space_text:5s} {driver_text:16s} T={T:<8d} A_hat={A:.5f} deviation={rep.terminal_deviation:.2e}")


if __name__ == "__main__":
    main()
