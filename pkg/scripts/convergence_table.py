#!/usr/bin/env python3
"""Estimator self-convergence: besov, X_T and BMO^-1 values under doubled resolution."""
import numpy as np

from norminflation import norms
from norminflation.construction import build_frequency_family, build_initial_data
from norminflation.planewave import first_iterate


def main():
    fam = build_frequency_family(2, 2, magnitudes=[8, 32])
    data = build_initial_data(fam, 2.0)
    u1 = first_iterate(data).u1
    rows = [
        ("besov u0", lambda o, d: norms.besov_norm(data.field, per_decade=32 * d, oversample=o).value),
        ("besov u1(0.05)", lambda o, d: norms.besov_norm(u1, at=0.05, per_decade=32 * d, oversample=o).value),
        ("xt u1 T=0.1", lambda o, d: norms.xt_norm(u1, 0.1, per_decade=8 * d, oversample=o).value),
        ("xt u1 sampled", lambda o, d: norms.xt_norm(
            norms.Trajectory.from_exact(u1, np.concatenate([[0.0], np.logspace(-6, -1, 5 * 16 * d + 1)])),
            0.1, oversample=o).value),
        ("bmo u0", lambda o, d: norms.bmo_neg1_norm(data.field, per_decade=8 * d, oversample=o).value),
    ]
    print(f"{'quantity':<16}{'coarse':>16}{'fine':>16}{'rel diff':>12}")
    for name, f in rows:
        a, b = f(4, 1), f(8, 2)
        print(f"{name:<16}{a:>16.10g}{b:>16.10g}{abs(a / b - 1):>12.2e}")


if __name__ == "__main__":
    main()
