#!/usr/bin/env python3
"""Fit Q and r exponents of the iterate components on desk shells (ratio 16)."""
import argparse
import csv
import sys

from norminflation.experiments import measure_scaling

PLAN = [("u0_besov", "Q"), ("u0_besov", "r"), ("u10_besov", "Q"),
        ("u11_xt", "r"), ("N2_xt", "r"), ("N3_xt", "r")]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--T", type=float, default=0.1)
    ap.add_argument("--shell-ratio", type=int, default=16)
    args = ap.parse_args()
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["component", "axis", "grid", "values", "exponent", "ci_lo", "ci_hi", "expected"])
    for comp, axis in PLAN:
        fit = measure_scaling(comp, axis, [1, 2, 4], shell_ratio=args.shell_ratio, T=args.T,
                              exclude_empty=comp == "N3_xt")
        w.writerow([comp, axis, fit.grid, [f"{v:.6g}" for v in fit.values], f"{fit.exponent:.4f}",
                    f"{fit.ci[0]:.4f}", f"{fit.ci[1]:.4f}", fit.expected])
        sys.stdout.flush()


if __name__ == "__main__":
    main()
