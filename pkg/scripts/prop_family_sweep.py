#!/usr/bin/env python3
"""Sweep the benchmark families and compare against their closed forms.

Prints one row per parameter value with the computed degree coefficients, the
closed-form references, and the agreement. Everything runs in exact rational
mode, so "agree" means coefficient equality, not a tolerance.
"""

import argparse
import time
from fractions import Fraction

from beltrami import expr as ex
from beltrami.obstruction import obstruction_P
from beltrami.reference import cubic_family_coeffs, quadratic_family_form


def sweep_cubic(values):
    f = ex.parse("1+a*x1+b*x1^3+x3")
    print("cubic family f = 1 + a x1 + b x1^3 + x3")
    print(f"{'a':>8} {'b':>8} {'c0':>16} {'c1':>16} {'c2':>16} {'c3':>16} agree    time")
    for a, b in values:
        t0 = time.perf_counter()
        poly = obstruction_P(f, {"a": a, "b": b}, (0, 0, 0), degree=3,
                             frame="graph", mode="rational")
        refs = cubic_family_coeffs(a, b)
        computed = [poly.coeff((j, 0)) for j in range(4)]
        agree = all(c == r for c, r in zip(computed, refs))
        cells = " ".join(f"{str(c):>16}" for c in computed)
        print(f"{str(a):>8} {str(b):>8} {cells} {str(agree):>5}  {time.perf_counter()-t0:6.2f}s")


def sweep_quadratic(values):
    f = ex.parse("1+x1^2+a*x2^2+x3")
    print("\nquadratic family f = 1 + x1^2 + a x2^2 + x3 (quadratic form of P)")
    print(f"{'a':>8} {'xi1^2':>16} {'xi1*xi2':>16} {'xi2^2':>16} agree    time")
    for a in values:
        t0 = time.perf_counter()
        poly = obstruction_P(f, {"a": a}, (0, 0, 0), degree=2,
                             frame="graph", mode="rational")
        refs = quadratic_family_form(a)
        computed = [poly.coeff(m) for m in ((2, 0), (1, 1), (0, 2))]
        agree = all(c == r for c, r in zip(computed, refs))
        cells = " ".join(f"{str(c):>16}" for c in computed)
        print(f"{str(a):>8} {cells} {str(agree):>5}  {time.perf_counter()-t0:6.2f}s")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dense", action="store_true",
                    help="larger parameter grids (slower)")
    args = ap.parse_args()
    if args.dense:
        cubic = [(Fraction(a), Fraction(b))
                 for a in (-2, -1, Fraction(-1, 2), Fraction(1, 2), 1, 2)
                 for b in (-1, 1, 2)]
        quad = [Fraction(v) for v in (-3, -2, -1, 0, Fraction(1, 2), 1, 2, 3)]
    else:
        cubic = [(Fraction(1), Fraction(1)), (Fraction(2), Fraction(1)),
                 (Fraction(1), Fraction(-1)), (Fraction(1, 2), Fraction(3))]
        quad = [Fraction(v) for v in (-1, 0, 1, 2)]
    sweep_cubic(cubic)
    sweep_quadratic(quad)


if __name__ == "__main__":
    main()
