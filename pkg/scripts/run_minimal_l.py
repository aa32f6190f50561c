#!/usr/bin/env python3
"""Smallest L reaching the target success rate, against kn, with a linear fit per sweep."""

import sys

from sparselift.cli import experiment_config, build_parser
from sparselift.experiments import linear_fit, lmin_curves, run_experiment


def main(argv=None):
    args = build_parser().parse_args(["minimal-l", *(argv if argv is not None else sys.argv[1:])])
    cfg = experiment_config("minimal_l", args)
    curves = lmin_curves(run_experiment(cfg), cfg.lmin_rate, cfg.trials)
    for group, pts in curves.items():
        print(f"\n{group}")
        for kn, L in pts:
            print(f"  kn={kn:4d}  L_min={L}")
        if len(pts) > 1:
            fit = linear_fit(*zip(*pts))
            print(f"  fit: L_min = {fit['slope']:.3f} kn + {fit['intercept']:.1f}  (R^2 {fit['r2']:.3f})")


if __name__ == "__main__":
    main()
