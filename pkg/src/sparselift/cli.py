"""Command-line entry point: ``python -m sparselift <subcommand> ...``.

Exit codes: 0 on success, 1 on runtime failure, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from importlib import resources
from pathlib import Path
from typing import Sequence

from . import __version__
from .certify import certify_instance
from .experiments import (ExperimentConfig, cdma_curve, doa_accuracy, linear_fit, lmin_curves,
                          run_experiment, success_by_cell)
from .lifting import build_phi, stack_real, unvec
from .problem import Dimensions, encode_complex, load_instance, make_instance, save_instance
from .recovery import recover
from .solvers import SolverOptions, solve_bp, solve_bpdn, solve_l1_nuclear, solve_l21

FIXTURE = "fixture_fourier_L128_N256_k3_n3.json"
EXPERIMENT_COMMANDS = {"phase-transition": "phase_transition", "minimal-l": "minimal_l",
                       "doa": "doa", "cdma": "cdma"}


class UsageError(Exception):
    pass


def fixture_path() -> Path:
    return Path(str(resources.files("sparselift") / "data" / FIXTURE))


def _finite_or_null(obj):
    """Map NaN and infinities to None so the printed JSON is standard."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {(repr(k) if isinstance(k, float) else k): _finite_or_null(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite_or_null(v) for v in obj]
    return obj


def _dumps(obj) -> str:
    return json.dumps(_finite_or_null(obj), allow_nan=False, default=str)


def _csv_list(kind):
    def parse(text: str):
        try:
            return tuple(kind(t) for t in text.split(",") if t.strip())
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc
    return parse


def _add_experiment_flags(p: argparse.ArgumentParser) -> None:
    # every default is None so that a config file can fill the gap; the
    # effective defaults come from ExperimentConfig.for_kind
    p.add_argument("--seed", type=int, default=None, help="base seed (default: 0)")
    p.add_argument("--trials", type=int, default=None,
                   help="trials per cell (default: 5 scaled, 10 with --full; 10 for doa and cdma)")
    p.add_argument("--matrix", type=_csv_list(str), default=None,
                   help="comma list of gaussian,fourier (default depends on the experiment)")
    p.add_argument("--solver", choices=["bp", "bpdn", "l1_nuclear", "l21"], default=None,
                   help="recovery program (default: bp; bpdn for doa and cdma)")
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="weight for l1_nuclear (default: 0.1)")
    p.add_argument("--ks", type=_csv_list(int), default=None, help="comma list of k values")
    p.add_argument("--ns", type=_csv_list(int), default=None, help="comma list of n values")
    p.add_argument("--Ls", type=_csv_list(int), default=None, help="comma list of L values (minimal-l)")
    p.add_argument("--snrs", type=_csv_list(float), default=None, help="comma list of SNRs in dB")
    p.add_argument("--tol", type=float, default=None, help="solver tolerance (default: 1e-6, 1e-7 noisy)")
    p.add_argument("--max-iters", type=int, default=None, help="solver iteration cap")
    p.add_argument("--domain", choices=["complex", "real"], default=None,
                   help="search X over complex or real matrices (default: real for phase-transition "
                        "and minimal-l, complex otherwise)")
    p.add_argument("--spacing", type=float, default=None,
                   help="array element spacing in wavelengths for doa (default: 1.0)")
    p.add_argument("--full", action="store_true", help="use the full grids instead of the scaled ones")
    p.add_argument("--jobs", type=int, default=None, help="worker processes (default: logical cores)")
    p.add_argument("--config-file", type=Path, default=None,
                   help="JSON object of ExperimentConfig fields; explicit flags win")
    p.add_argument("--out", type=Path, default=None, help="CSV output path (a .json sidecar is added)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sparselift", description="Sparse self-calibration by lifting.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-instance", help="draw a random instance and save it as JSON")
    p.add_argument("--L", type=int, required=True)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--matrix", choices=["gaussian", "fourier"], default="fourier", help="(default: fourier)")
    p.add_argument("--seed", type=int, default=0, help="(default: 0)")
    p.add_argument("--snr", type=float, default=math.inf, help="SNR in dB (default: inf, noiseless)")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("solve", help="recover X from a saved instance")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--instance", type=Path, help="instance JSON")
    src.add_argument("--fixture", action="store_true", help="use the bundled noiseless Fourier instance")
    p.add_argument("--solver", choices=["bp", "bpdn", "l1_nuclear", "l21"], default="bp", help="(default: bp)")
    p.add_argument("--lambda", dest="lam", type=float, default=0.1, help="l1_nuclear weight (default: 0.1)")
    p.add_argument("--eta", type=float, default=None,
                   help="residual radius for bpdn/l21 (default: the instance's eta)")
    p.add_argument("--tol", type=float, default=1e-9, help="(default: 1e-9)")
    p.add_argument("--max-iters", type=int, default=50_000, help="(default: 50000)")
    p.add_argument("--domain", choices=["complex", "real"], default="complex",
                   help="search X over complex or real matrices (default: complex)")
    p.add_argument("--out", type=Path, default=None, help="JSON file for X_hat and the summary")

    p = sub.add_parser("certify", help="check the sufficient recovery conditions on an instance")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--instance", type=Path)
    src.add_argument("--fixture", action="store_true")
    p.add_argument("--P", type=int, default=None, help="golfing rounds (with --Q)")
    p.add_argument("--Q", type=int, default=None, help="golfing block size (with --P)")
    p.add_argument("--scheme", choices=["strided", "contiguous"], default="strided", help="(default: strided)")
    p.add_argument("--out", type=Path, default=None)

    for name in EXPERIMENT_COMMANDS:
        _add_experiment_flags(sub.add_parser(name, help=f"run the {name} experiment"))
    return parser


def experiment_config(kind: str, args: argparse.Namespace) -> ExperimentConfig:
    fields: dict = {}
    if args.config_file is not None:
        try:
            loaded = json.loads(args.config_file.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config file {args.config_file}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise UsageError("config file must hold a JSON object")
        if loaded.get("kind", kind) != kind:
            raise UsageError(f"config file is for {loaded['kind']!r}, not {kind!r}")
        fields.update({k: v for k, v in loaded.items() if k != "kind"})
    explicit = {"base_seed": args.seed, "trials": args.trials, "matrices": args.matrix,
                "solver": args.solver, "lam": args.lam, "ks": args.ks, "ns": args.ns, "Ls": args.Ls,
                "snrs": args.snrs, "tol": args.tol, "max_iters": args.max_iters,
                "spacing": args.spacing, "domain": args.domain, "jobs": args.jobs,
                "out": str(args.out) if args.out is not None else None}
    fields.update({k: v for k, v in explicit.items() if v is not None})
    fields.setdefault("jobs", os.cpu_count() or 1)
    full = bool(args.full or fields.pop("full", False))
    try:
        return ExperimentConfig.for_kind(kind, full=full, **fields)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


def _summarise(cfg: ExperimentConfig, records) -> dict:
    if cfg.kind == "phase_transition":
        return {"success": [{"matrix": m, "k": k, "n": n, "rate": r}
                            for (m, k, n, _, _), r in success_by_cell(records).items()]}
    if cfg.kind == "minimal_l":
        curves = lmin_curves(records, cfg.lmin_rate, cfg.trials)
        return {g: {"points": pts, "fit": linear_fit(*zip(*pts)) if len(pts) > 1 else None}
                for g, pts in curves.items()}
    if cfg.kind == "doa":
        return {"accuracy": doa_accuracy(records)}
    curve = cdma_curve(records)
    out = {"curve": curve}
    for m, pts in curve.items():
        mid = [p for p in pts if 20 <= p["snr_db"] <= 60]
        if len(mid) > 1:
            out[f"{m}_slope_sq_db"] = linear_fit([p["snr_db"] for p in mid],
                                                 [p["avg_sq_err_db"] for p in mid])["slope"]
    return out


def _load(args) -> "object":
    path = fixture_path() if args.fixture else args.instance
    try:
        return load_instance(path)
    except (OSError, ValueError, KeyError) as exc:
        raise RuntimeError(f"cannot load instance from {path}: {exc}") from exc


def _cmd_make_instance(args) -> int:
    try:
        dims = Dimensions(args.L, args.N, args.k, args.n)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    inst = make_instance(dims, args.seed, matrix=args.matrix, snr_db=args.snr)
    save_instance(inst, args.out)
    print(_dumps({"out": str(args.out), "eta": inst.eta, "meta": inst.meta}))
    return 0


def _cmd_solve(args) -> int:
    inst = _load(args)
    op, y = build_phi(inst.A, inst.B), inst.y
    if args.domain == "real":
        op, y = op.real_form(), stack_real(y)
    eta = inst.eta if args.eta is None else args.eta
    opts = SolverOptions(tol_primal=args.tol, tol_dual=args.tol, max_iters=args.max_iters)
    if args.solver == "bp":
        res = solve_bp(op, y, opts)
    elif args.solver == "bpdn":
        res = solve_bpdn(op, y, eta, opts)
    elif args.solver == "l21":
        res = solve_l21(op, y, opts, eta=eta or None)
    else:
        res = solve_l1_nuclear(op, y, args.lam, opts)
    X_hat = unvec(res.v_hat, op.k)
    summary = {"solver": args.solver, "domain": args.domain, "iterations": res.iterations, "converged": res.converged,
               "status": res.status, "objective": res.objective}
    summary.update(recover(X_hat, inst.h0, inst.x0).summary())
    summary["rel_error"] = summary.pop("rel_error_X")
    if args.out is not None:
        args.out.write_text(_dumps({"summary": summary, "X_hat": encode_complex(X_hat)}))
    print(_dumps(summary))
    return 0


def _cmd_certify(args) -> int:
    if (args.P is None) != (args.Q is None):
        raise UsageError("--P and --Q go together")
    inst = _load(args)
    if not inst.noiseless:
        raise UsageError("certify needs a noiseless instance")
    op = build_phi(inst.A, inst.B)
    try:
        rep = certify_instance(op, inst, P=args.P, Q=args.Q, scheme=args.scheme)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    text = _dumps(rep.to_row())
    if args.out is not None:
        args.out.write_text(text)
    print(text)
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "make-instance":
            return _cmd_make_instance(args)
        if args.command == "solve":
            return _cmd_solve(args)
        if args.command == "certify":
            return _cmd_certify(args)
        cfg = experiment_config(EXPERIMENT_COMMANDS[args.command], args)
        records = run_experiment(cfg)
        print(_dumps(_summarise(cfg, records)))
        return 0
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"sparselift: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - any failure maps to exit 1
        print(f"sparselift: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
