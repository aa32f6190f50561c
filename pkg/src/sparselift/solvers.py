"""ADMM solvers for the lifted l1 programs.

All four programs share one pattern: proximal steps on the objective
terms, and either an exact projection onto ``{Phi v = y}`` (through the
whitened operator ``Psi = R^{-1} Phi`` with orthonormal rows) or a
noise-ball split ``r = Phi v - y`` handled through ``(I + Phi Phi^*)^{-1}``.

Equality-constrained runs periodically try to *polish*: restrict to the
current support, solve the least-squares system there, and accept the
result only if a dual vector certifies it as an exact minimiser.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.linalg as sla

from .lifting import LiftedOperator, support_columns, unvec, vec

__all__ = [
    "SolverError",
    "SolverOptions",
    "SolverResult",
    "prox_l1_complex",
    "prox_nuclear",
    "prox_l21_columns",
    "project_ball",
    "norm_l1",
    "norm_l21",
    "norm_nuclear",
    "solve_bp",
    "solve_bpdn",
    "solve_l1_nuclear",
    "solve_l21",
]

_TINY = 1e-300


class SolverError(RuntimeError):
    pass


@dataclass
class SolverOptions:
    """ADMM settings.

    Residuals are relative (see ``SolverResult``). ``relax`` is the
    over-relaxation factor; ``polish_every`` sets how often the
    equality-constrained solvers attempt an exact support refit.
    """

    rho: float = 1.0
    tol_primal: float = 1e-9
    tol_dual: float = 1e-9
    max_iters: int = 50_000
    adaptive_rho: bool = True
    relax: float = 1.6
    polish: bool = True
    polish_every: int = 20
    telemetry: str | Path | None = None
    record_history: bool = False

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if self.tol_primal < 0 or self.tol_dual < 0:
            raise ValueError("tolerances must be nonnegative")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not 0 < self.relax < 2:
            raise ValueError("relax must lie in (0, 2)")

    @classmethod
    def noisy(cls, **kw) -> "SolverOptions":
        kw.setdefault("tol_primal", 1e-7)
        kw.setdefault("tol_dual", 1e-7)
        return cls(**kw)


@dataclass
class SolverResult:
    """Solution of one solver run.

    ``primal_residual`` and ``dual_residual`` are relative to the iterate
    and dual magnitudes. ``dual`` is the L-vector ``u`` with ``Phi^* u``
    approximating a subgradient of the objective at ``v_hat``. ``history``
    holds the fixed-point residual ``rho(||dz||^2 + ||du||^2)`` per
    iteration when requested.
    """

    v_hat: np.ndarray
    k: int
    iterations: int
    primal_residual: float
    dual_residual: float
    converged: bool
    objective: float
    dual: np.ndarray | None = None
    polished: bool = False
    status: str = ""
    history: list[float] = field(default_factory=list)

    @property
    def X_hat(self) -> np.ndarray:
        return unvec(self.v_hat, self.k)


# -- proximal maps -----------------------------------------------------------

def prox_l1_complex(z: np.ndarray, tau: float) -> np.ndarray:
    """Complex soft-thresholding ``z * max(1 - tau/|z|, 0)``."""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    z = np.asarray(z)
    mag = np.abs(z)
    return z * np.maximum(1.0 - tau / np.maximum(mag, _TINY), 0.0)


def prox_nuclear(X: np.ndarray, tau: float) -> np.ndarray:
    """Singular value soft-thresholding."""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    try:
        U, s, Vh = np.linalg.svd(X, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"SVD failed in nuclear prox: {exc}") from exc
    return (U * np.maximum(s - tau, 0.0)) @ Vh


def prox_l21_columns(X: np.ndarray, tau: float) -> np.ndarray:
    """Group soft-thresholding of each column of ``X``."""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    X = np.asarray(X)
    norms = np.linalg.norm(X, axis=0)
    return X * np.maximum(1.0 - tau / np.maximum(norms, _TINY), 0.0)


def project_ball(r: np.ndarray, eta: float) -> np.ndarray:
    nr = np.linalg.norm(r)
    return r if nr <= eta else r * (eta / nr)


def norm_l1(v) -> float:
    return float(np.sum(np.abs(v)))


def norm_l21(X) -> float:
    return float(np.sum(np.linalg.norm(X, axis=0)))


def norm_nuclear(X) -> float:
    return float(np.sum(np.linalg.svd(X, compute_uv=False)))


# -- shared plumbing ---------------------------------------------------------

class _Telemetry:
    def __init__(self, path):
        self._fh = None
        if path is not None:
            self._fh = open(path, "w", newline="")
            self._w = csv.writer(self._fh)
            self._w.writerow(["iteration", "primal_residual", "dual_residual", "objective", "rho"])

    def log(self, it, r, s, obj, rho):
        if self._fh is not None:
            self._w.writerow([it, repr(r), repr(s), repr(obj), repr(rho)])

    def close(self):
        if self._fh is not None:
            self._fh.close()


def _group_prox(k: int) -> Callable[[np.ndarray, float], np.ndarray]:
    return lambda v, t: vec(prox_l21_columns(unvec(v, k), t))


def _sgn(z: np.ndarray) -> np.ndarray:
    mag = np.abs(z)
    return np.where(mag > 0, z / np.maximum(mag, _TINY), 0)


def _polish(op: LiftedOperator, y: np.ndarray, z: np.ndarray, nu_guess: np.ndarray,
            group: bool) -> tuple[np.ndarray, np.ndarray] | None:
    """Least-squares refit on the support of ``z`` plus a KKT check.

    Returns ``(v, nu)`` when ``Phi v = y`` holds, ``Phi^* nu`` equals the
    objective's gradient on the support of ``v`` and has dual norm at most
    one off it; ``None`` otherwise.
    """
    k = op.k
    if group:
        cols = np.flatnonzero(np.linalg.norm(unvec(z, k), axis=0))
    else:
        cols = None
    S = support_columns(k, cols) if group else np.flatnonzero(z)
    ynorm = max(float(np.linalg.norm(y)), _TINY)
    for _ in range(2):
        if not 0 < S.size <= op.L:
            return None
        PS = op.Phi[:, S]
        w = np.linalg.lstsq(PS, y, rcond=None)[0]
        if group:
            wn = np.linalg.norm(w.reshape(-1, k), axis=1)
            keep = wn > 1e-9 * wn.max()
            if keep.all():
                break
            cols = cols[keep]
            S = support_columns(k, cols)
        else:
            keep = np.abs(w) > 1e-9 * np.abs(w).max()
            if keep.all():
                break
            S = S[keep]
    else:
        return None
    if np.linalg.norm(PS @ w - y) > 1e-10 * ynorm:
        return None
    if group:
        W = w.reshape(-1, k)
        g = (W / np.linalg.norm(W, axis=1, keepdims=True)).ravel()
    else:
        g = _sgn(w)
    PSH = PS.conj().T
    nu = nu_guess + np.linalg.lstsq(PSH, g - PSH @ nu_guess, rcond=None)[0]
    if np.linalg.norm(PSH @ nu - g) > 1e-9 * math.sqrt(S.size):
        return None
    q = op.PhiH @ nu
    off = np.ones(q.size, dtype=bool)
    off[S] = False
    if group:
        colnorm = np.linalg.norm(unvec(q, k), axis=0)
        colnorm[cols] = 0.0
        ok = colnorm.max(initial=0.0) <= 1.0 + 1e-9
    else:
        ok = np.abs(q[off]).max(initial=0.0) <= 1.0 + 1e-9
    if not ok:
        return None
    v = np.zeros(op.Phi.shape[1], dtype=y.dtype)
    v[S] = w
    return v, nu


def _adapt(rho, r_abs, s_abs, scaled_duals):
    # balancing factor below ~2 makes rho oscillate
    if r_abs > 3.0 * s_abs:
        return rho * 2.0, [u / 2.0 for u in scaled_duals]
    if s_abs > 3.0 * r_abs:
        return rho / 2.0, [u * 2.0 for u in scaled_duals]
    return rho, scaled_duals


def _check_y(op: LiftedOperator, y) -> np.ndarray:
    # iterates are real only when both the operator and the data are real
    y = np.asarray(y).ravel()
    y = y.astype(complex if np.iscomplexobj(op.Phi) or np.iscomplexobj(y) else float)
    if y.size != op.L:
        raise ValueError(f"y has length {y.size}, operator has {op.L} rows")
    return y


# -- equality-constrained splitting ------------------------------------------

def _solve_equality(op: LiftedOperator, y: np.ndarray, opts: SolverOptions,
                    prox: Callable, objective: Callable, group: bool) -> SolverResult:
    R, Psi, jittered = op.whitened
    PsiH = Psi.conj().T
    yt = sla.solve_triangular(R, y, lower=True)
    n = op.Phi.shape[1]
    z = np.zeros(n, dtype=y.dtype)
    u = np.zeros(n, dtype=y.dtype)
    rho = opts.rho
    tel = _Telemetry(opts.telemetry)
    history: list[float] = []
    r_rel = s_rel = math.inf
    converged = False
    last_polish_support = None
    it = 0
    status = "max_iters"
    try:
        for it in range(1, opts.max_iters + 1):
            w = z - u
            v = w - PsiH @ (Psi @ w - yt)
            v_rel = opts.relax * v + (1.0 - opts.relax) * z
            z_old, u_old = z, u
            z = prox(v_rel + u, 1.0 / rho)
            u = u + v_rel - z
            r_abs = float(np.linalg.norm(v - z))
            s_abs = rho * float(np.linalg.norm(z - z_old))
            r_rel = r_abs / max(float(np.linalg.norm(v)), float(np.linalg.norm(z)), _TINY)
            s_rel = s_abs / max(rho * float(np.linalg.norm(u)), _TINY)
            if opts.record_history:
                history.append(rho * (float(np.linalg.norm(z - z_old)) ** 2
                                      + float(np.linalg.norm(u - u_old)) ** 2))
            tel.log(it, r_rel, s_rel, objective(z), rho)
            if r_rel <= opts.tol_primal and s_rel <= opts.tol_dual:
                converged = True
                status = "converged"
                break
            if opts.polish and it % opts.polish_every == 0:
                supp = np.flatnonzero(z)
                key = (supp.size, hash(supp.tobytes()))
                if key != last_polish_support:
                    last_polish_support = key
                    nu_guess = sla.solve_triangular(R, Psi @ (rho * u), lower=True, trans="C")
                    res = _polish(op, y, z, nu_guess, group)
                    if res is not None:
                        v_pol, nu = res
                        tel.close()
                        return SolverResult(v_hat=v_pol, k=op.k, iterations=it, primal_residual=0.0,
                                            dual_residual=0.0, converged=True,
                                            objective=objective(v_pol), dual=nu, polished=True,
                                            status="polished", history=history)
            if opts.adaptive_rho and it % 10 == 0:
                rho, (u,) = _adapt(rho, r_abs, s_abs, [u])
    finally:
        tel.close()
    nu = sla.solve_triangular(R, Psi @ (rho * u), lower=True, trans="C")
    if jittered:
        status += ";jittered_gram"
    return SolverResult(v_hat=v, k=op.k, iterations=it, primal_residual=r_rel, dual_residual=s_rel,
                        converged=converged, objective=objective(v), dual=nu, status=status,
                        history=history)


def _solve_ball(op: LiftedOperator, y: np.ndarray, eta: float, opts: SolverOptions,
                prox: Callable, objective: Callable) -> SolverResult:
    Lc = op.shifted_cholesky
    Phi, PhiH = op.Phi, op.PhiH
    n = Phi.shape[1]
    z = np.zeros(n, dtype=y.dtype)
    r = np.zeros(op.L, dtype=y.dtype)
    u1 = np.zeros(n, dtype=y.dtype)
    u2 = np.zeros(op.L, dtype=y.dtype)
    rho = opts.rho
    tel = _Telemetry(opts.telemetry)
    history: list[float] = []
    r_rel = s_rel = math.inf
    converged = False
    status = "max_iters"
    it = 0
    try:
        for it in range(1, opts.max_iters + 1):
            rhs = (z - u1) + PhiH @ (y + r - u2)
            t = sla.cho_solve((Lc, True), Phi @ rhs)
            v = rhs - PhiH @ t
            Phiv = t
            a = opts.relax
            v_rel = a * v + (1.0 - a) * z
            fit_rel = a * (Phiv - y) + (1.0 - a) * r
            z_old, r_old, u1_old, u2_old = z, r, u1, u2
            z = prox(v_rel + u1, 1.0 / rho)
            r = project_ball(fit_rel + u2, eta)
            res_fit = Phiv - y - r
            u1 = u1 + v_rel - z
            u2 = u2 + fit_rel - r
            r_abs = math.hypot(float(np.linalg.norm(v - z)), float(np.linalg.norm(res_fit)))
            dz, dr = z - z_old, r - r_old
            s_abs = rho * float(np.linalg.norm(dz + PhiH @ dr))
            scale_p = max(math.hypot(float(np.linalg.norm(v)), float(np.linalg.norm(Phiv))),
                          math.hypot(float(np.linalg.norm(z)), float(np.linalg.norm(r + y))), _TINY)
            scale_d = max(rho * math.hypot(float(np.linalg.norm(u1)), float(np.linalg.norm(PhiH @ u2))),
                          _TINY)
            r_rel, s_rel = r_abs / scale_p, s_abs / scale_d
            if opts.record_history:
                history.append(rho * (float(np.linalg.norm(dz)) ** 2 + float(np.linalg.norm(dr)) ** 2
                                      + float(np.linalg.norm(u1 - u1_old)) ** 2
                                      + float(np.linalg.norm(u2 - u2_old)) ** 2))
            tel.log(it, r_rel, s_rel, objective(z), rho)
            if r_rel <= opts.tol_primal and s_rel <= opts.tol_dual:
                converged = True
                status = "converged"
                break
            if opts.adaptive_rho and it % 10 == 0:
                rho, (u1, u2) = _adapt(rho, r_abs, s_abs, [u1, u2])
    finally:
        tel.close()
    # z is the sparse iterate; at convergence it sits within tolerance of the ball
    return SolverResult(v_hat=z, k=op.k, iterations=it, primal_residual=r_rel, dual_residual=s_rel,
                        converged=converged, objective=objective(z), dual=rho * u2, status=status,
                        history=history)


# -- public programs ---------------------------------------------------------

def solve_bp(op: LiftedOperator, y, opts: SolverOptions | None = None) -> SolverResult:
    """Minimise ``||v||_1`` subject to ``Phi v = y``.

    Parameters
    ----------
    op : LiftedOperator
        Lifted measurement operator.
    y : array_like
        Length-L measurement vector, assumed to lie in the range of ``Phi``.
    opts : SolverOptions, optional
        Defaults to noiseless tolerances (``1e-9``).

    Returns
    -------
    SolverResult
        Non-convergence is reported through ``converged``; the last
        (feasible) iterate is still returned.
    """
    opts = opts or SolverOptions()
    y = _check_y(op, y)
    return _solve_equality(op, y, opts, prox_l1_complex, norm_l1, group=False)


def solve_bpdn(op: LiftedOperator, y, eta: float, opts: SolverOptions | None = None) -> SolverResult:
    """Minimise ``||v||_1`` subject to ``||Phi v - y|| <= eta``.

    ``eta = 0`` runs :func:`solve_bp`.
    """
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    y = _check_y(op, y)
    if eta == 0:
        return solve_bp(op, y, opts)
    opts = opts or SolverOptions.noisy()
    if np.linalg.norm(y) <= eta:
        zero = np.zeros(op.Phi.shape[1], dtype=y.dtype)
        return SolverResult(v_hat=zero, k=op.k, iterations=0, primal_residual=0.0, dual_residual=0.0,
                            converged=True, objective=0.0, status="zero_feasible")
    return _solve_ball(op, y, eta, opts, prox_l1_complex, norm_l1)


def solve_l21(op: LiftedOperator, y, opts: SolverOptions | None = None,
              eta: float | None = None) -> SolverResult:
    """Minimise the sum of column norms of ``X`` under the equality or ball constraint."""
    y = _check_y(op, y)
    k = op.k
    prox = _group_prox(k)
    objective = lambda v: norm_l21(unvec(v, k))  # noqa: E731
    if not eta:
        return _solve_equality(op, y, opts or SolverOptions(), prox, objective, group=True)
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    opts = opts or SolverOptions.noisy()
    if np.linalg.norm(y) <= eta:
        zero = np.zeros(op.Phi.shape[1], dtype=y.dtype)
        return SolverResult(v_hat=zero, k=k, iterations=0, primal_residual=0.0, dual_residual=0.0,
                            converged=True, objective=0.0, status="zero_feasible")
    return _solve_ball(op, y, eta, opts, prox, objective)


def solve_l1_nuclear(op: LiftedOperator, y, lam: float, opts: SolverOptions | None = None,
                     weight: str = "nuclear") -> SolverResult:
    """Equality-constrained ``l1`` + nuclear norm minimisation.

    With ``weight="nuclear"`` (default) the objective is
    ``||X||_1 + lam ||X||_*``; with ``weight="l1"`` it is
    ``||X||_* + lam ||X||_1``. Solved by three-block consensus ADMM
    (entrywise shrinkage, singular value thresholding, affine projection).

    ``rho`` stays fixed here whatever ``opts.adaptive_rho`` says: residual
    balancing across three blocks makes the iteration wander rather than
    converge.
    """
    if not lam > 0:
        raise ValueError("lam must be positive")
    if weight == "nuclear":
        w_l1, w_nuc = 1.0, float(lam)
    elif weight == "l1":
        w_l1, w_nuc = float(lam), 1.0
    else:
        raise ValueError(f"weight must be 'nuclear' or 'l1', got {weight!r}")
    # dividing the objective by its largest weight leaves the minimiser
    # unchanged and keeps the fixed rho well scaled for extreme lam
    scale = max(w_l1, w_nuc)
    t_l1, t_nuc = w_l1 / scale, w_nuc / scale
    opts = opts or SolverOptions()
    y = _check_y(op, y)
    k, N = op.k, op.N
    R, Psi, _ = op.whitened
    PsiH = Psi.conj().T
    yt = sla.solve_triangular(R, y, lower=True)

    def objective(v):
        X = unvec(v, k)
        return w_l1 * norm_l1(v) + w_nuc * norm_nuclear(X)

    n = k * N
    Z = np.zeros(n, dtype=y.dtype)
    U = [np.zeros(n, dtype=y.dtype) for _ in range(3)]
    rho = opts.rho
    tel = _Telemetry(opts.telemetry)
    history: list[float] = []
    r_rel = s_rel = math.inf
    converged = False
    status = "max_iters"
    it = 0
    try:
        for it in range(1, opts.max_iters + 1):
            X1 = prox_l1_complex(Z - U[0], t_l1 / rho)
            X2 = vec(prox_nuclear(unvec(Z - U[1], k), t_nuc / rho))
            w = Z - U[2]
            X3 = w - PsiH @ (Psi @ w - yt)
            Xs = (X1, X2, X3)
            Z_old = Z
            Z = (X1 + X2 + X3 + U[0] + U[1] + U[2]) / 3.0
            U_old = U
            U = [Ui + Xi - Z for Ui, Xi in zip(U, Xs)]
            r_abs = math.sqrt(sum(float(np.linalg.norm(Xi - Z)) ** 2 for Xi in Xs))
            s_abs = rho * math.sqrt(3.0) * float(np.linalg.norm(Z - Z_old))
            r_rel = r_abs / max(math.sqrt(3.0) * float(np.linalg.norm(Z)), _TINY)
            s_rel = s_abs / max(rho * math.sqrt(sum(float(np.linalg.norm(Ui)) ** 2 for Ui in U)), _TINY)
            if opts.record_history:
                history.append(rho * (3 * float(np.linalg.norm(Z - Z_old)) ** 2
                                      + sum(float(np.linalg.norm(a - b)) ** 2 for a, b in zip(U, U_old))))
            tel.log(it, r_rel, s_rel, objective(X3), rho)
            if r_rel <= opts.tol_primal and s_rel <= opts.tol_dual:
                converged = True
                status = "converged"
                break
    finally:
        tel.close()
    return SolverResult(v_hat=X3, k=k, iterations=it, primal_residual=r_rel, dual_residual=s_rel,
                        converged=converged, objective=objective(X3), status=status, history=history)
