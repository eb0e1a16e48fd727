"""Single-shift speed over a (mu, c1) lattice, with the regime label of each point.

Usage: python scripts/sweep_single_shift.py [--r1 0.25] [--r2 1.0] [--n 200] [--out DIR]
Writes single_shift.csv (plot-ready: mu, c1, s_hat, regime).
"""
import argparse
import csv
import math
from pathlib import Path

import numpy as np

from kppspread.speeds import speed_single_shift_kpp


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--r1", type=float, default=0.25)
    ap.add_argument("--r2", type=float, default=1.0)
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--mu-max", type=float, default=3.0)
    ap.add_argument("--c1-max", type=float, default=6.0)
    ap.add_argument("--out", default="sweep_out")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    mus = list(np.linspace(args.mu_max / args.n, args.mu_max, args.n)) + [math.inf]
    c1s = np.linspace(args.c1_max / args.n, args.c1_max, args.n)
    counts = {}
    with open(out / "single_shift.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["mu", "c1", "s_hat", "regime"])
        for mu in mus:
            for c1 in c1s:
                res = speed_single_shift_kpp(args.r1, args.r2, c1, mu)
                counts[res.regime] = counts.get(res.regime, 0) + 1
                wr.writerow([mu, c1, repr(res.s_hat), res.regime])
    for k, v in sorted(counts.items()):
        print(f"{k:<18} {v}")


if __name__ == "__main__":
    main()
