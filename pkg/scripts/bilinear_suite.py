#!/usr/bin/env python3
"""Ratio |B(u,v)|_X / (|u|_X |v|_X) on random band-limited fields (stability check)."""
import argparse

import numpy as np

from norminflation import norms
from norminflation.planewave import TrigField, heat_flow


def random_field(rng, n_modes=3, kmax=4):
    f = TrigField.zero()
    for _ in range(n_modes):
        k = rng.integers(-kmax, kmax + 1, 3)
        if not k.any():
            continue
        c = rng.normal(size=3)
        c -= (c @ k) / (k @ k) * k  # divergence free
        f = f + TrigField.mode(c, k, rng.choice(["cos", "sin"]))
    return heat_flow(f)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--samples", type=int, default=50)
    ap.add_argument("--T", type=float, default=0.1)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    ratios = []
    for _ in range(args.samples):
        u, v = random_field(rng), random_field(rng)
        if u.n_terms == 0 or v.n_terms == 0:
            continue
        out = norms.bilinear_sanity(u, v, args.T)
        if not out["degenerate"]:
            ratios.append(out["ratio"])
    r = np.array(ratios)
    print(f"n={len(r)} min={r.min():.4g} median={np.median(r):.4g} max={r.max():.4g}")


if __name__ == "__main__":
    main()
