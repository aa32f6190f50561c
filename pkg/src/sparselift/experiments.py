"""Seeded Monte Carlo drivers producing flat result tables.

Every trial draws its instance from a seed derived by hashing the base seed
together with the trial's coordinates, so any subset of trials can be
re-run in isolation, in any order or process, and reproduce exactly.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np
from scipy import stats

from . import __version__
from .lifting import build_phi, stack_real
from .problem import Dimensions, add_noise_snr, gen_circular_array_A, gen_dft_B, make_instance, measure
from .recovery import detect_angles, extract_rank_one, rel_error
from .solvers import SolverError, SolverOptions, solve_bp, solve_bpdn, solve_l1_nuclear, solve_l21

__all__ = [
    "KINDS",
    "ExperimentConfig",
    "ExperimentRecord",
    "trial_seed",
    "run_phase_transition",
    "run_minimal_l",
    "run_doa",
    "run_cdma",
    "run_experiment",
    "write_results",
    "read_results",
    "success_by_cell",
    "lmin_curves",
    "linear_fit",
    "cdma_curve",
    "doa_accuracy",
]

KINDS = ("phase_transition", "minimal_l", "doa", "cdma")
SOLVERS = ("bp", "bpdn", "l1_nuclear", "l21")
MATRICES = ("gaussian", "fourier")

_ODD_1_15 = tuple(range(1, 16, 2))
_ALL_1_15 = tuple(range(1, 16))


@dataclass
class ExperimentConfig:
    """Everything that determines an experiment's output table.

    Grid fields not used by a given ``kind`` are ignored. ``for_kind`` fills
    in the scaled defaults (or the full grids with ``full=True``).

    ``domain="real"`` restricts the lifted unknown to real matrices, which
    doubles the number of real equations. It is the default for the two
    noiseless sweeps, where ``h`` and ``x`` are real Gaussian.
    """

    kind: str
    base_seed: int = 0
    trials: int = 5
    matrices: tuple[str, ...] = ("fourier",)
    solver: str = "bp"
    lam: float = 0.1
    lam_weight: str = "nuclear"
    domain: str = "complex"
    ks: tuple[int, ...] = _ODD_1_15
    ns: tuple[int, ...] = _ODD_1_15
    L: int = 128
    N: int = 256
    Ls: tuple[int, ...] = tuple(range(20, 401, 20))
    snrs: tuple[float, ...] = tuple(range(0, 81, 10))
    success_threshold: float = 0.01
    lmin_rate: float = 0.9
    search: str = "bisect"
    tol: float = 1e-6
    max_iters: int = 10_000
    spacing: float = 1.0
    angles: tuple[float, ...] = (-10.0, 5.0, 20.0)
    angle_tolerance: float = 1.0
    jobs: int = 1
    out: str | None = None

    def __post_init__(self):
        for name in ("matrices", "ks", "ns", "Ls", "snrs", "angles"):
            setattr(self, name, tuple(getattr(self, name)))
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.solver not in SOLVERS:
            raise ValueError(f"solver must be one of {SOLVERS}, got {self.solver!r}")
        bad = [m for m in self.matrices if m not in MATRICES]
        if bad or not self.matrices:
            raise ValueError(f"matrices must be a nonempty subset of {MATRICES}")
        for name in ("ks", "ns", "Ls", "snrs"):
            if not getattr(self, name):
                raise ValueError(f"{name} must be nonempty")
        if min(self.ks) < 1 or min(self.ns) < 1 or min(self.Ls) < 1:
            raise ValueError("k, n and L values must be positive")
        if list(self.Ls) != sorted(set(self.Ls)):
            raise ValueError("Ls must be strictly increasing")
        if self.search not in ("bisect", "grid"):
            raise ValueError("search must be 'bisect' or 'grid'")
        if not 0 < self.lmin_rate <= 1:
            raise ValueError("lmin_rate must lie in (0, 1]")
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")
        if self.domain not in ("complex", "real"):
            raise ValueError("domain must be 'complex' or 'real'")

    @classmethod
    def for_kind(cls, kind: str, full: bool = False, **overrides) -> "ExperimentConfig":
        base: dict[str, Any] = {"kind": kind}
        if kind == "phase_transition":
            base.update(matrices=("gaussian", "fourier"), L=128, N=256, domain="real",
                        trials=10 if full else 5,
                        ks=_ALL_1_15 if full else _ODD_1_15, ns=_ALL_1_15 if full else _ODD_1_15)
        elif kind == "minimal_l":
            base.update(matrices=("gaussian",), N=512, trials=10 if full else 5, domain="real",
                        ks=_ALL_1_15 if full else _ODD_1_15, ns=_ALL_1_15 if full else _ODD_1_15,
                        Ls=tuple(range(10, 401, 10)) if full else tuple(range(20, 401, 20)),
                        search="grid" if full else "bisect")
        elif kind == "doa":
            base.update(L=64, N=180, ks=(4,), ns=(3,), trials=10, solver="bpdn",
                        snrs=(25.0,), tol=1e-7, max_iters=50_000)
        elif kind == "cdma":
            base.update(matrices=("fourier", "gaussian") if full else ("fourier",), L=128, N=256,
                        ks=(5,), ns=(5,), trials=10, solver="bpdn", snrs=tuple(range(0, 81, 10)),
                        tol=1e-7, max_iters=50_000)
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict[str, Any]:
        return {f.name: (list(v) if isinstance(v, tuple) else v)
                for f in dataclasses.fields(self) for v in [getattr(self, f.name)]}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def solver_options(self) -> SolverOptions:
        return SolverOptions(tol_primal=self.tol, tol_dual=self.tol, max_iters=self.max_iters)


CSV_FIELDS = ("kind", "group", "matrix", "solver", "k", "n", "L", "N", "snr_db", "trial", "seed",
              "rel_error", "success", "iterations", "converged", "detail", "wall_ms")


@dataclass
class ExperimentRecord:
    kind: str
    matrix: str
    solver: str
    k: int
    n: int
    L: int
    N: int
    trial: int
    seed: int
    rel_error: float
    success: bool
    iterations: int
    converged: bool
    snr_db: float = math.inf
    group: str = ""
    detail: str = ""
    wall_ms: float = 0.0

    def row(self) -> dict[str, str]:
        return {
            "kind": self.kind, "group": self.group, "matrix": self.matrix, "solver": self.solver,
            "k": str(self.k), "n": str(self.n), "L": str(self.L), "N": str(self.N),
            "snr_db": repr(float(self.snr_db)), "trial": str(self.trial), "seed": str(self.seed),
            "rel_error": repr(float(self.rel_error)), "success": str(int(self.success)),
            "iterations": str(self.iterations), "converged": str(int(self.converged)),
            "detail": self.detail, "wall_ms": f"{self.wall_ms:.3f}",
        }

    @classmethod
    def from_row(cls, row: dict[str, str]) -> "ExperimentRecord":
        return cls(kind=row["kind"], group=row["group"], matrix=row["matrix"], solver=row["solver"],
                   k=int(row["k"]), n=int(row["n"]), L=int(row["L"]), N=int(row["N"]),
                   snr_db=float(row["snr_db"]), trial=int(row["trial"]), seed=int(row["seed"]),
                   rel_error=float(row["rel_error"]), success=row["success"] == "1",
                   iterations=int(row["iterations"]), converged=row["converged"] == "1",
                   detail=row["detail"], wall_ms=float(row["wall_ms"]))


def trial_seed(base_seed: int, *coords) -> int:
    """63-bit seed from a SHA-256 digest of the base seed and the coordinates."""
    key = "|".join([str(int(base_seed))] + [repr(c) for c in coords])
    return int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "big") >> 1


# -- single trials -----------------------------------------------------------

def _solve(cfg: ExperimentConfig, op, y, eta: float, opts: SolverOptions):
    if cfg.solver == "bp" or (cfg.solver == "bpdn" and eta == 0):
        return solve_bp(op, y, opts)
    if cfg.solver == "bpdn":
        return solve_bpdn(op, y, eta, opts)
    if cfg.solver == "l21":
        return solve_l21(op, y, opts, eta=eta or None)
    return solve_l1_nuclear(op, y, cfg.lam, opts, weight=cfg.lam_weight)


def _lifted_trial(cfg: ExperimentConfig, matrix: str, k: int, n: int, L: int, N: int,
                  trial: int, snr_db: float = math.inf, group: str = "") -> ExperimentRecord:
    seed = trial_seed(cfg.base_seed, cfg.kind, matrix, k, n, L, N, float(snr_db), trial)
    t0 = time.perf_counter()
    inst = make_instance(Dimensions(L, N, k, n), seed, matrix=matrix, snr_db=snr_db)
    op, y = build_phi(inst.A, inst.B), inst.y
    if cfg.domain == "real":
        # h and x are drawn real, so X is searched over real matrices only
        op, y = op.real_form(), stack_real(y)
    try:
        res = _solve(cfg, op, y, inst.eta, cfg.solver_options())
        err, its, conv = rel_error(res.X_hat, inst.X0), res.iterations, res.converged
    except SolverError:
        err, its, conv = math.nan, 0, False
    detail = ""
    if inst.eta > 0:
        X0n = float(np.linalg.norm(inst.X0))
        detail = f"eta={inst.eta!r};ratio={err * X0n / (math.sqrt(k * n) * inst.eta)!r}"
    return ExperimentRecord(kind=cfg.kind, group=group, matrix=matrix, solver=cfg.solver, k=k, n=n, L=L,
                            N=N, snr_db=snr_db, trial=trial, seed=seed, rel_error=err,
                            success=bool(err <= cfg.success_threshold), iterations=its, converged=conv,
                            detail=detail, wall_ms=1e3 * (time.perf_counter() - t0))


def _run_tasks(fn: Callable, tasks: Sequence[tuple], jobs: int) -> list:
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, *zip(*tasks)))


# -- drivers -----------------------------------------------------------------

def _require(cfg: ExperimentConfig, kind: str):
    if cfg.kind != kind:
        raise ValueError(f"config is for {cfg.kind!r}, expected {kind!r}")


def run_phase_transition(cfg: ExperimentConfig) -> list[ExperimentRecord]:
    """Success over the ``(k, n)`` grid at fixed ``L`` and ``N``, noiseless."""
    _require(cfg, "phase_transition")
    tasks = [(cfg, m, k, n, cfg.L, cfg.N, t)
             for m in cfg.matrices for k in cfg.ks for n in cfg.ns for t in range(cfg.trials)]
    return _run_tasks(_lifted_trial, tasks, cfg.jobs)


def _cell_at_L(cfg, matrix, k, n, L, group) -> tuple[list[ExperimentRecord], bool]:
    """Trials at one ``L``, stopping once the rate threshold is decided."""
    need = math.ceil(cfg.lmin_rate * cfg.trials - 1e-12)
    recs, wins = [], 0
    for t in range(cfg.trials):
        rec = _lifted_trial(cfg, matrix, k, n, L, cfg.N, t, group=group)
        recs.append(rec)
        wins += rec.success
        if wins >= need or wins + (cfg.trials - t - 1) < need:
            break
    return recs, wins >= need


def _sweep_point(cfg: ExperimentConfig, matrix: str, k: int, n: int, group: str) -> list[ExperimentRecord]:
    Ls = [L for L in cfg.Ls if L >= k]
    out: list[ExperimentRecord] = []
    if cfg.search == "grid":
        for L in Ls:
            out += _cell_at_L(cfg, matrix, k, n, L, group)[0]
        return out
    # bisection for the first passing L, assuming success is monotone in L
    lo, hi = -1, len(Ls)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        recs, ok = _cell_at_L(cfg, matrix, k, n, Ls[mid], group)
        out += recs
        if ok:
            hi = mid
        else:
            lo = mid
    return sorted(out, key=lambda r: (r.L, r.trial))


def run_minimal_l(cfg: ExperimentConfig) -> list[ExperimentRecord]:
    """Two sweeps (``k=5`` with ``n`` varying, ``n=5`` with ``k`` varying) over ``L``.

    With ``search="bisect"`` only the ``L`` values visited by a bisection
    for the first passing grid point are evaluated, and trials at a given
    ``L`` stop as soon as the ``lmin_rate`` outcome is settled.
    """
    _require(cfg, "minimal_l")
    tasks = []
    for m in cfg.matrices:
        tasks += [(cfg, m, 5, n, "fixed_k") for n in cfg.ns]
        tasks += [(cfg, m, k, 5, "fixed_n") for k in cfg.ks]
    return [r for chunk in _run_tasks(_sweep_point, tasks, cfg.jobs) for r in chunk]


def _doa_trial(cfg: ExperimentConfig, snr_db: float, trial: int) -> ExperimentRecord:
    L, N, k = cfg.L, cfg.N, cfg.ks[0]
    grid = np.arange(-90, -90 + N)
    seed = trial_seed(cfg.base_seed, "doa", L, N, k, float(snr_db), float(cfg.spacing), trial)
    t0 = time.perf_counter()
    A = gen_circular_array_A(L, grid, cfg.spacing)
    B = gen_dft_B(L, k)
    s_h, s_x, s_w = np.random.SeedSequence(seed).spawn(3)
    rng_h = np.random.default_rng(s_h)
    h0 = (rng_h.standard_normal(k) + 1j * rng_h.standard_normal(k)) / math.sqrt(2)
    # fully coherent sources: one common unit-modulus amplitude
    x0 = np.zeros(N, dtype=complex)
    idx = [int(np.flatnonzero(grid == a)[0]) for a in cfg.angles]
    x0[idx] = np.exp(2j * np.pi * np.random.default_rng(s_x).random())
    y_clean = measure(A, B, h0, x0)
    X0 = np.outer(h0, x0)
    y, _, eta = add_noise_snr(y_clean, snr_db, float(np.linalg.norm(X0)), s_w)
    op = build_phi(A, B)
    try:
        res = solve_bpdn(op, y, eta, cfg.solver_options())
        X_hat = res.X_hat
        err = rel_error(X_hat, X0)
        _, x_hat, _ = extract_rank_one(X_hat)
        found = detect_angles(x_hat, grid, len(cfg.angles))
        its, conv = res.iterations, res.converged
    except (SolverError, ValueError):
        err, found, its, conv = math.nan, [], 0, False
    ok = len(found) == len(cfg.angles) and all(
        abs(f - a) <= cfg.angle_tolerance for f, a in zip(found, sorted(cfg.angles)))
    detail = "angles=" + ";".join(f"{a:g}" for a in found)
    return ExperimentRecord(kind="doa", matrix="circular", solver="bpdn", k=k, n=len(cfg.angles), L=L,
                            N=N, snr_db=snr_db, trial=trial, seed=seed, rel_error=err, success=ok,
                            iterations=its, converged=conv, detail=detail,
                            wall_ms=1e3 * (time.perf_counter() - t0))


def run_doa(cfg: ExperimentConfig) -> list[ExperimentRecord]:
    """Coherent on-grid sources seen by a circular array with smooth gain errors.

    ``success`` here means every source angle was found within
    ``angle_tolerance`` degrees; ``rel_error`` is still the lifted error.
    """
    _require(cfg, "doa")
    tasks = [(cfg, float(s), t) for s in cfg.snrs for t in range(cfg.trials)]
    return _run_tasks(_doa_trial, tasks, cfg.jobs)


def run_cdma(cfg: ExperimentConfig) -> list[ExperimentRecord]:
    """Noisy recovery across SNR levels with the constrained-residual program."""
    _require(cfg, "cdma")
    k, n = cfg.ks[0], cfg.ns[0]
    tasks = [(cfg, m, k, n, cfg.L, cfg.N, t, float(s))
             for m in cfg.matrices for s in cfg.snrs for t in range(cfg.trials)]
    return _run_tasks(_lifted_trial, tasks, cfg.jobs)


_DRIVERS = {"phase_transition": run_phase_transition, "minimal_l": run_minimal_l,
            "doa": run_doa, "cdma": run_cdma}


def run_experiment(cfg: ExperimentConfig) -> list[ExperimentRecord]:
    records = _DRIVERS[cfg.kind](cfg)
    if cfg.out:
        write_results(records, cfg.out, cfg)
    return records


# -- I/O ---------------------------------------------------------------------

def write_results(records: Iterable[ExperimentRecord], path: str | Path,
                  cfg: ExperimentConfig | None = None) -> None:
    """CSV table plus ``<path>.json`` with the config and library version."""
    path = Path(path)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in records:
        w.writerow(r.row())
    sidecar = {"version": __version__, "config": cfg.to_dict() if cfg else None}
    try:
        path.write_text(buf.getvalue())
        path.with_name(path.name + ".json").write_text(json.dumps(sidecar, indent=2, default=str))
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc


def read_results(path: str | Path) -> list[ExperimentRecord]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read results from {path}: {exc}") from exc
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != CSV_FIELDS:
        raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
    return [ExperimentRecord.from_row(row) for row in reader]


# -- summaries ---------------------------------------------------------------

def success_by_cell(records: Iterable[ExperimentRecord]) -> dict[tuple, float]:
    """Mean success per ``(matrix, k, n, L, snr_db)`` cell."""
    acc: dict[tuple, list[bool]] = {}
    for r in records:
        acc.setdefault((r.matrix, r.k, r.n, r.L, r.snr_db), []).append(r.success)
    return {key: float(np.mean(v)) for key, v in sorted(acc.items())}


def lmin_curves(records: Iterable[ExperimentRecord], rate: float = 0.9,
                trials: int | None = None) -> dict[str, list[tuple[int, int]]]:
    """``(kn, L_min)`` per sweep after a running-maximum cleanup in ``kn``.

    ``L_min`` is the smallest evaluated ``L`` whose success count reaches
    ``ceil(rate * trials)``; with early-stopped cells the count is taken
    over the trials that were run. Points with no passing ``L`` are dropped.
    """
    cells: dict[tuple, list[bool]] = {}
    for r in records:
        cells.setdefault((r.group, r.k, r.n, r.L), []).append(r.success)
    best: dict[tuple, int] = {}
    for (group, k, n, L), wins in cells.items():
        t = trials or len(wins)
        if sum(wins) >= math.ceil(rate * t - 1e-12):
            key = (group, k, n)
            best[key] = min(best.get(key, L), L)
    curves: dict[str, list[tuple[int, int]]] = {}
    for (group, k, n), L in sorted(best.items(), key=lambda kv: (kv[0][0], kv[0][1] * kv[0][2])):
        curves.setdefault(group, []).append((k * n, L))
    for group, pts in curves.items():
        running = 0
        cleaned = []
        for kn, L in pts:
            running = max(running, L)
            cleaned.append((kn, running))
        curves[group] = cleaned
    return curves


def linear_fit(x: Sequence[float], y: Sequence[float]) -> dict[str, float]:
    res = stats.linregress(np.asarray(x, float), np.asarray(y, float))
    return {"slope": float(res.slope), "intercept": float(res.intercept), "r2": float(res.rvalue**2)}


def cdma_curve(records: Iterable[ExperimentRecord]) -> dict[str, list[dict[str, float]]]:
    """Per matrix and SNR: mean relative error, mean squared relative error and their dB values."""
    acc: dict[tuple, list[float]] = {}
    for r in records:
        acc.setdefault((r.matrix, r.snr_db), []).append(r.rel_error)
    out: dict[str, list[dict[str, float]]] = {}
    for (m, snr), errs in sorted(acc.items()):
        e = np.asarray(errs, float)
        mean, mse = float(np.mean(e)), float(np.mean(e**2))
        out.setdefault(m, []).append({"snr_db": snr, "avg_err": mean, "avg_sq_err": mse,
                                      "avg_err_db": 10 * math.log10(mean),
                                      "avg_sq_err_db": 10 * math.log10(mse)})
    return out


def doa_accuracy(records: Iterable[ExperimentRecord]) -> dict[float, float]:
    acc: dict[float, list[bool]] = {}
    for r in records:
        acc.setdefault(r.snr_db, []).append(r.success)
    return {snr: float(np.mean(v)) for snr, v in sorted(acc.items())}
