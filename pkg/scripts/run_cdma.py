#!/usr/bin/env python3
"""Recovery error against SNR for the multipath CDMA model.

Both the mean relative error and the mean squared relative error are
shown in dB, along with the 20 to 60 dB slope of the latter.
"""

import sys

from sparselift.cli import experiment_config, build_parser
from sparselift.experiments import cdma_curve, linear_fit, run_experiment


def main(argv=None):
    args = build_parser().parse_args(["cdma", *(argv if argv is not None else sys.argv[1:])])
    cfg = experiment_config("cdma", args)
    for matrix, pts in cdma_curve(run_experiment(cfg)).items():
        print(f"\n{matrix}\n  SNR   avg_err_dB  avg_sq_err_dB")
        for p in pts:
            print(f"  {p['snr_db']:4g}  {p['avg_err_db']:10.2f}  {p['avg_sq_err_db']:13.2f}")
        mid = [p for p in pts if 20 <= p["snr_db"] <= 60]
        if len(mid) > 1:
            fit = linear_fit([p["snr_db"] for p in mid], [p["avg_sq_err_db"] for p in mid])
            print(f"  slope over 20-60 dB: {fit['slope']:.3f}")


if __name__ == "__main__":
    main()
