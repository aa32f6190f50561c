#!/usr/bin/env python3
"""Success-rate grid over (k, n) for Gaussian and Fourier A.

Extra arguments are forwarded to ``sparselift phase-transition``; the
summary is reprinted here as one text grid per matrix kind.
"""

import sys

from sparselift.cli import experiment_config, build_parser
from sparselift.experiments import run_experiment, success_by_cell


def main(argv=None):
    args = build_parser().parse_args(["phase-transition", *(argv if argv is not None else sys.argv[1:])])
    cfg = experiment_config("phase_transition", args)
    rates = success_by_cell(run_experiment(cfg))
    for m in cfg.matrices:
        print(f"\n{m}: success rate, rows k, columns n")
        print("k\\n " + " ".join(f"{n:>4d}" for n in cfg.ns))
        for k in cfg.ks:
            cells = [rates.get((m, k, n, cfg.L, float("inf")), float("nan")) for n in cfg.ns]
            print(f"{k:>3d} " + " ".join(f"{r:4.1f}" for r in cells))
    if cfg.out:
        print(f"\ntable written to {cfg.out}")


if __name__ == "__main__":
    main()
