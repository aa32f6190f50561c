#!/usr/bin/env python3
"""Coherent-source direction finding with an uncalibrated circular array.

Prints the fraction of trials with every source within the angle
tolerance, then the detected angles of each trial.
"""

import sys

from sparselift.cli import experiment_config, build_parser
from sparselift.experiments import doa_accuracy, run_experiment


def main(argv=None):
    args = build_parser().parse_args(["doa", *(argv if argv is not None else sys.argv[1:])])
    cfg = experiment_config("doa", args)
    recs = run_experiment(cfg)
    for snr, acc in doa_accuracy(recs).items():
        print(f"SNR {snr:g} dB: {acc:.0%} of trials resolve {list(cfg.angles)}")
    for r in recs:
        print(f"  snr={r.snr_db:g} trial={r.trial} {r.detail} rel_error={r.rel_error:.3g}")


if __name__ == "__main__":
    main()
