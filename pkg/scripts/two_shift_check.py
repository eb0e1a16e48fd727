"""Two-shift table: the continuous branch assignment against the HJ free boundary.

For a few (c1, c2) points the script prints the table value with the default
(continuous) assignment, with the swapped assignment, and the HJ free
boundary of the step profile 0.25 / 0.5 / 1.

The Godunov flux is the default here: its free boundary is accurate to
about 1e-3, enough to tell the two assignments apart.

Usage: python scripts/two_shift_check.py [--h 0.01] [--scheme godunov]
"""
import argparse

from kppspread.environment import RayProfile
from kppspread.hj import hj_solve
from kppspread.speeds import speed_two_shift_kpp

POINTS = [(2.2, 1.5), (4.0, 1.6), (2.9, 1.9), (3.5, 2.5), (5.0, 4.5)]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--h", type=float, default=0.01)
    ap.add_argument("--scheme", default="godunov", choices=["godunov", "llf"])
    ap.add_argument("--r1", type=float, default=0.25)
    ap.add_argument("--r2", type=float, default=0.5)
    args = ap.parse_args()
    print(f"{'c1':>5} {'c2':>5} {'table':>9} {'swapped':>9} {'hj':>9}  regime")
    for c1, c2 in POINTS:
        res = speed_two_shift_kpp(args.r1, args.r2, c1, c2)
        alt = speed_two_shift_kpp(args.r1, args.r2, c1, c2, swapped_branches=True)
        prof = RayProfile.piecewise([c2, c1], [args.r1, args.r2, 1.0])
        hj = hj_solve(prof, h=args.h, s_max=max(8.0, 2 * c1), scheme=args.scheme).s_hat
        print(f"{c1:5.2f} {c2:5.2f} {res.s_hat:9.5f} {alt.s_hat:9.5f} {hj:9.5f}  {res.regime}")


if __name__ == "__main__":
    main()
