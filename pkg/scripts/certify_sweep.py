#!/usr/bin/env python3
"""Pass rate of the least-squares certificate over (k, n) at L=128, N=256.

Usage: certify_sweep.py [--seeds 10] [--kmax 3]
"""

import argparse
from itertools import product

from sparselift.certify import certify_instance
from sparselift.lifting import build_phi
from sparselift.problem import Dimensions, make_instance


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--kmax", type=int, default=3)
    args = ap.parse_args()
    print("matrix    k n  delta_max  off_max  passed")
    for matrix, k, n in product(("fourier", "gaussian"), range(1, args.kmax + 1), range(1, args.kmax + 1)):
        reps = []
        for seed in range(args.seeds):
            inst = make_instance(Dimensions(128, 256, k, n), seed, matrix=matrix)
            reps.append(certify_instance(build_phi(inst.A, inst.B), inst))
        print(f"{matrix:9s} {k} {n}  {max(r.delta for r in reps):9.3f}  "
              f"{max(r.q_off_support_inf for r in reps):7.3f}  {sum(r.passed for r in reps)}/{args.seeds}")


if __name__ == "__main__":
    main()
