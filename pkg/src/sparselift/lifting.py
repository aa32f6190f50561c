"""The lifted operator ``X -> {b_l^* X a_l}`` and its L x kN matrix form.

``vec`` stacks columns of the k x N matrix ``X``, so column ``j*k + i`` of
``Phi`` is the elementwise product of ``B[:, i]`` and ``A[:, j]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable

import numpy as np
import scipy.linalg as sla

__all__ = [
    "LiftedOperator",
    "stack_real",
    "GeometryScalars",
    "build_phi",
    "apply_lift",
    "apply_adjoint",
    "restrict_support",
    "support_columns",
    "vec",
    "unvec",
    "spectral_norm",
    "power_iteration_norm",
    "coherence",
    "geometry_scalars",
    "gamma_bound",
]

DEFAULT_MAX_ENTRIES = 2**27


def vec(X: np.ndarray) -> np.ndarray:
    return np.asarray(X).reshape(-1, order="F")


def unvec(v: np.ndarray, k: int) -> np.ndarray:
    return np.asarray(v).reshape((k, -1), order="F")


@dataclass(frozen=True, eq=False)
class LiftedOperator:
    """Explicit matrix ``Phi`` with ``Phi @ vec(X) == A(X)``.

    Treated as immutable; the Gram factorisations used by the solvers are
    computed lazily and cached on the instance.
    """

    Phi: np.ndarray
    L: int
    N: int
    k: int

    @property
    def shape(self) -> tuple[int, int]:
        return self.Phi.shape

    def column_index(self, i: int, j: int) -> int:
        return j * self.k + i

    def matvec(self, v: np.ndarray) -> np.ndarray:
        return self.Phi @ v

    def rmatvec(self, u: np.ndarray) -> np.ndarray:
        return self.PhiH @ u

    @cached_property
    def PhiH(self) -> np.ndarray:
        return np.ascontiguousarray(self.Phi.conj().T)

    @cached_property
    def gram_rows(self) -> np.ndarray:
        """``Phi Phi^*`` (L x L)."""
        return self.Phi @ self.PhiH

    @cached_property
    def whitened(self) -> tuple[np.ndarray, np.ndarray, bool]:
        """``(R, Psi, jittered)`` with ``R R^* = Phi Phi^*`` and ``Psi = R^{-1} Phi``.

        ``Psi`` has orthonormal rows. A diagonal jitter of ``1e-12 * max diag``
        is added when ``Phi Phi^*`` is numerically singular.
        """
        G = self.gram_rows
        jittered = False
        try:
            R = np.linalg.cholesky(G)
        except np.linalg.LinAlgError:
            jittered = True
            R = np.linalg.cholesky(G + 1e-12 * np.max(np.real(np.diag(G))) * np.eye(self.L))
        Psi = sla.solve_triangular(R, self.Phi, lower=True)
        return R, Psi, jittered

    @cached_property
    def shifted_cholesky(self) -> np.ndarray:
        """Lower Cholesky factor of ``I + Phi Phi^*``."""
        return np.linalg.cholesky(np.eye(self.L) + self.gram_rows)

    def real_form(self) -> "LiftedOperator":
        """Real operator for real ``X``: rows ``[Re Phi; Im Phi]``.

        When ``X`` is known to be real, the ``L`` complex equations are
        ``2L`` real ones, and ``stack_real(y)`` is the matching right-hand
        side. ``L`` of the result counts these real rows.
        """
        return LiftedOperator(Phi=np.vstack([self.Phi.real, self.Phi.imag]), L=2 * self.L, N=self.N, k=self.k)


def stack_real(y: np.ndarray) -> np.ndarray:
    """``[Re y; Im y]``, which has the same Euclidean norm as ``y``."""
    y = np.asarray(y).ravel()
    return np.concatenate([y.real, y.imag])


def build_phi(A: np.ndarray, B: np.ndarray, max_entries: int = DEFAULT_MAX_ENTRIES) -> LiftedOperator:
    A, B = np.asarray(A, dtype=complex), np.asarray(B, dtype=complex)
    if A.ndim != 2 or B.ndim != 2 or A.shape[0] != B.shape[0]:
        raise ValueError(f"A and B must share their row count, got {A.shape} and {B.shape}")
    L, N = A.shape
    k = B.shape[1]
    if L * k * N > max_entries:
        raise MemoryError(f"Phi would have {L * k * N} entries (cap {max_entries})")
    Phi = (A[:, :, None] * B[:, None, :]).reshape(L, N * k)
    return LiftedOperator(Phi=Phi, L=L, N=N, k=k)


def apply_lift(A: np.ndarray, B: np.ndarray, X: np.ndarray) -> np.ndarray:
    """``out_l = b_l^* X a_l`` without forming ``Phi``."""
    X = np.asarray(X)
    if X.shape != (B.shape[1], A.shape[1]):
        raise ValueError(f"X must be {B.shape[1]}x{A.shape[1]}, got {X.shape}")
    return np.einsum("li,lj,ij->l", B, A, X)


def apply_adjoint(A: np.ndarray, B: np.ndarray, u: np.ndarray) -> np.ndarray:
    """``sum_l u_l b_l a_l^*`` as a k x N matrix."""
    u = np.asarray(u).ravel()
    if u.size != A.shape[0]:
        raise ValueError(f"u must have length {A.shape[0]}, got {u.size}")
    return (B.conj().T * u) @ A.conj()


def support_columns(k: int, omega_x: Iterable[int], N: int | None = None) -> np.ndarray:
    """Lifted column indices ``{j*k + i : j in omega_x, 0 <= i < k}`` in order."""
    omega = np.asarray(list(omega_x), dtype=int)
    if N is not None and omega.size and (omega.min() < 0 or omega.max() >= N):
        raise IndexError(f"support index out of range [0, {N})")
    return (omega[:, None] * k + np.arange(k)[None, :]).ravel()


def restrict_support(op: LiftedOperator, omega_x: Iterable[int]) -> np.ndarray:
    """Columns of ``Phi`` on the lifted support of ``omega_x`` (L x kn)."""
    return op.Phi[:, support_columns(op.k, omega_x, op.N)]


def power_iteration_norm(M: np.ndarray, tol: float = 1e-10, max_iters: int = 10_000,
                         seed: int = 0) -> float:
    """Largest singular value of ``M`` by power iteration on ``M^* M``."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(M.shape[1]) + 1j * rng.standard_normal(M.shape[1])
    x /= np.linalg.norm(x)
    MH = M.conj().T
    lam = 0.0
    for _ in range(max_iters):
        z = MH @ (M @ x)
        lam_new = float(np.linalg.norm(z))
        if lam_new == 0.0:
            return 0.0
        x = z / lam_new
        if abs(lam_new - lam) <= tol * lam_new:
            lam = lam_new
            break
        lam = lam_new
    return math.sqrt(lam)


def spectral_norm(M: np.ndarray, method: str = "auto") -> float:
    """Operator 2-norm; dense eigensolver on the small Gram side below 2048."""
    M = np.asarray(M)
    if M.size == 0:
        return 0.0
    if method == "power" or (method == "auto" and min(M.shape) > 2048):
        return power_iteration_norm(M)
    G = M @ M.conj().T if M.shape[0] <= M.shape[1] else M.conj().T @ M
    return math.sqrt(max(float(np.linalg.eigvalsh(G)[-1]), 0.0))


def coherence(Phi: np.ndarray, normalized: bool = False, block: int = 1024) -> float:
    """Largest ``|<phi_a, phi_b>|`` over distinct columns, computed blockwise."""
    P = np.asarray(Phi)
    if normalized:
        norms = np.linalg.norm(P, axis=0)
        P = P / np.where(norms > 0, norms, 1.0)
    m = P.shape[1]
    PH = P.conj().T
    best = 0.0
    for start in range(0, m, block):
        G = np.abs(PH[start:start + block] @ P)
        rows = np.arange(start, min(start + block, m))
        G[rows - start, rows] = 0.0
        best = max(best, float(G.max()))
    return best


def gamma_bound(N: int, k: int, L: int, matrix: str, alpha: float = 1.0) -> float:
    """High-probability upper bound on the operator norm for random ``A``."""
    if matrix == "fourier":
        return math.sqrt(2 * N * (math.log(2 * k * N) + 1) + 1)
    if matrix == "gaussian":
        return math.sqrt(N * math.log(N * L / 2) + alpha * math.log(L))
    raise ValueError(f"no norm bound for matrix kind {matrix!r}")


@dataclass(frozen=True)
class GeometryScalars:
    mu: float
    mu_normalized: float
    mu_max: float
    gamma: float
    delta: float


def geometry_scalars(op: LiftedOperator, B: np.ndarray, omega_x: Iterable[int] | None = None,
                     with_coherence: bool = True) -> GeometryScalars:
    """Coherence, subspace incoherence, operator norm and local isometry defect.

    ``delta`` is ``nan`` when no support is given.
    """
    B = np.asarray(B)
    mu_max = math.sqrt(B.shape[0]) * float(np.max(np.abs(B)))
    gamma = spectral_norm(op.Phi)
    if omega_x is not None:
        P_om = restrict_support(op, omega_x)
        G = P_om.conj().T @ P_om
        delta = spectral_norm(G - np.eye(G.shape[0]))
    else:
        delta = float("nan")
    if with_coherence:
        mu, mu_n = coherence(op.Phi), coherence(op.Phi, normalized=True)
    else:
        mu = mu_n = float("nan")
    return GeometryScalars(mu=mu, mu_normalized=mu_n, mu_max=mu_max, gamma=gamma, delta=delta)
