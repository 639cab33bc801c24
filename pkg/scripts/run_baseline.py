#!/usr/bin/env python3
"""Baseline inflation run: K=2, shells {8, 32}, Q=2, N=128 thin, unit viscosity.

Writes a full run directory and prints the headline numbers.
"""
import argparse
import json
import logging

from norminflation.experiments import ExperimentConfig, run_inflation_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--Q", type=float, default=2.0)
    ap.add_argument("--N", type=int, default=128)
    ap.add_argument("--cube", action="store_true", help="full N^3 grid instead of a thin z axis")
    ap.add_argument("--out", default="runs/baseline")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    cfg = ExperimentConfig(magnitudes=[8, 32], Q=args.Q, N=args.N, thin=not args.cube, output_dir=args.out)
    rep = run_inflation_experiment(cfg)
    print(json.dumps({"inflation_ratio": rep.inflation_ratio, "t_star": rep.t_star,
                      "ratio_all_t": rep.ratio_all_t, "u0_besov": rep.u0_besov["value"],
                      "u10_plateau": rep.u10_plateau["value"], "y_xt_over_Q4T": rep.y_xt["over_Q4T"],
                      "audit_holds": rep.audit["holds"] if rep.audit else None,
                      "solver": rep.solver}, indent=2))


if __name__ == "__main__":
    main()
