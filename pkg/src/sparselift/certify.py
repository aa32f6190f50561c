"""Numerical checks of the sufficient conditions for exact lifted recovery.

Two groups of conditions are measured:

* geometry: the local isometry defect ``delta = ||Phi_O^* Phi_O - I||`` on
  the lifted support ``O`` and the operator norm ``gamma = ||Phi||``;
* a dual vector ``q = Phi^* p`` whose restriction to ``O`` is close to
  ``sgn(X0)`` and which is small (at most 1/2 in modulus) off ``O``.

Candidates for ``q`` come either from a least-squares fit on ``O`` or from
the golfing iteration over disjoint blocks of measurements.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .lifting import LiftedOperator, gamma_bound, restrict_support, spectral_norm, support_columns, vec
from .problem import ProblemInstance

__all__ = [
    "BlockPartition",
    "CertificateReport",
    "sgn",
    "check_local_isometry",
    "partition_blocks",
    "golfing_rounds",
    "exact_dual_certificate",
    "golfing_certificate",
    "certify_instance",
]

OFF_SUPPORT_LIMIT = 0.5


def sgn(Z) -> np.ndarray:
    """Entrywise phase ``z / |z|`` with ``sgn(0) = 0``."""
    Z = np.asarray(Z, dtype=complex)
    mag = np.abs(Z)
    out = np.zeros_like(Z)
    nz = mag > 0
    out[nz] = Z[nz] / mag[nz]
    return out


def on_support_limit(gamma: float) -> float:
    return 1.0 / (4.0 * math.sqrt(2.0) * gamma)


@dataclass(frozen=True)
class BlockPartition:
    """Disjoint equal-size row blocks ``Gamma_p`` and their frame deviations.

    ``deviations[p] = ||T_p - (Q/L) I_k||`` with ``T_p = B_p^* B_p``, the sum
    of ``b_l b_l^*`` over the block.
    """

    blocks: tuple[np.ndarray, ...]
    deviations: np.ndarray
    L: int
    Q: int
    scheme: str

    @property
    def P(self) -> int:
        return len(self.blocks)

    @property
    def max_deviation(self) -> float:
        return float(np.max(self.deviations))

    @property
    def within_bound(self) -> bool:
        """Every block deviates from ``(Q/L) I`` by less than ``Q / (4L)``."""
        return self.max_deviation < self.Q / (4.0 * self.L)

    @property
    def within_half_bound(self) -> bool:
        return self.max_deviation <= self.Q / (2.0 * self.L)


@dataclass
class CertificateReport:
    method: str
    delta: float = math.nan
    gamma: float = math.nan
    gamma_bound: float = math.nan
    q_on_support_err: float = math.nan
    q_off_support_inf: float = math.nan
    p_norm: float = math.nan
    W_norm_trace: list[float] = field(default_factory=list)
    singular: bool = False
    partition_max_deviation: float = math.nan

    @property
    def cond1_pass(self) -> bool:
        ok = self.delta <= 0.5
        if math.isfinite(self.gamma_bound):
            ok = ok and self.gamma <= self.gamma_bound
        return bool(ok)

    @property
    def cond2_pass(self) -> bool:
        if self.singular or not math.isfinite(self.gamma):
            return False
        return bool(self.q_on_support_err <= on_support_limit(self.gamma)
                    and self.q_off_support_inf <= OFF_SUPPORT_LIMIT)

    @property
    def passed(self) -> bool:
        return self.cond1_pass and self.cond2_pass

    @property
    def p_norm_ok(self) -> bool:
        """``||p|| <= sqrt(2 kn)``, inferred from ``||W_0|| = sqrt(kn)``."""
        if not self.W_norm_trace:
            return False
        return self.p_norm <= math.sqrt(2.0) * self.W_norm_trace[0]

    def to_row(self) -> dict:
        row = asdict(self)
        row["W_norm_trace"] = ";".join(f"{w:.17g}" for w in self.W_norm_trace)
        row.update(cond1_pass=self.cond1_pass, cond2_pass=self.cond2_pass, passed=self.passed)
        return row


def check_local_isometry(op: LiftedOperator, omega_x: Iterable[int]) -> float:
    omega_x = list(omega_x)
    if not omega_x:
        raise ValueError("support must be nonempty")
    P_om = restrict_support(op, omega_x)
    G = P_om.conj().T @ P_om
    ev = np.linalg.eigvalsh(G)
    return float(max(abs(ev[0] - 1.0), abs(ev[-1] - 1.0)))


def partition_blocks(B: np.ndarray, Q: int, scheme: str = "strided") -> BlockPartition:
    """Split the ``L`` rows of ``B`` into ``L/Q`` blocks of ``Q`` rows.

    ``scheme="strided"`` puts rows ``p, p+P, p+2P, ...`` in block ``p``
    (``P = L/Q``). For DFT columns this makes every ``T_p`` an exact
    multiple of the identity, because each block is itself a full
    period of a coarser DFT. ``scheme="contiguous"`` uses runs of ``Q``
    consecutive rows, which for low-frequency DFT columns can deviate by
    more than half of ``Q/L``.
    """
    B = np.asarray(B)
    L, k = B.shape
    if Q < 1 or L % Q:
        raise ValueError(f"block size Q={Q} must divide L={L}")
    P = L // Q
    if scheme == "strided":
        blocks = tuple(np.arange(p, L, P) for p in range(P))
    elif scheme == "contiguous":
        blocks = tuple(np.arange(p * Q, (p + 1) * Q) for p in range(P))
    else:
        raise ValueError(f"unknown partition scheme {scheme!r}")
    target = (Q / L) * np.eye(k)
    dev = np.array([spectral_norm(B[g].conj().T @ B[g] - target) for g in blocks])
    return BlockPartition(blocks=blocks, deviations=dev, L=L, Q=Q, scheme=scheme)


def golfing_rounds(kn: int, gamma: float) -> int:
    """Smallest ``P`` with ``2^-P sqrt(kn) <= 1/(4 sqrt 2 gamma)``."""
    return max(1, math.ceil(math.log2(4.0 * math.sqrt(2.0 * kn) * gamma)))


def _sign_on_support(op: LiftedOperator, omega_x: Sequence[int], sgn_X0) -> tuple[np.ndarray, np.ndarray]:
    cols = support_columns(op.k, omega_x, op.N)
    s = np.asarray(sgn_X0)
    if s.ndim == 2:
        s = vec(s)[cols]
    elif s.size == op.k * op.N:
        s = s[cols]
    if s.size != cols.size:
        raise ValueError(f"sign pattern has {s.size} entries, lifted support has {cols.size}")
    return cols, s.astype(complex)


def _off_support_inf(q: np.ndarray, cols: np.ndarray) -> float:
    mask = np.ones(q.size, dtype=bool)
    mask[cols] = False
    return float(np.abs(q[mask]).max(initial=0.0))


def exact_dual_certificate(op: LiftedOperator, omega_x: Sequence[int], sgn_X0,
                           gamma: float | None = None) -> CertificateReport:
    """Least-squares certificate ``p = Phi_O (Phi_O^* Phi_O)^{-1} s``, ``q = Phi^* p``.

    ``p`` is the minimum-norm solution of ``Phi_O^* p = s``, so ``q`` matches
    ``s`` on ``O`` up to rounding. A singular (or numerically singular)
    Gram matrix is reported through ``singular`` rather than raised.
    """
    omega_x = list(omega_x)
    cols, s = _sign_on_support(op, omega_x, sgn_X0)
    rep = CertificateReport(method="least-squares")
    rep.gamma = spectral_norm(op.Phi) if gamma is None else float(gamma)
    rep.W_norm_trace = [float(np.linalg.norm(s))]
    P_om = op.Phi[:, cols]
    G = P_om.conj().T @ P_om
    ev = np.linalg.eigvalsh(G)
    rep.delta = float(max(abs(ev[0] - 1.0), abs(ev[-1] - 1.0)))
    if cols.size > op.L or ev[0] <= 1e-12 * max(ev[-1], 1.0):
        rep.singular = True
        return rep
    c = np.linalg.solve(G, s)
    p = P_om @ c
    q = op.PhiH @ p
    rep.p_norm = float(np.linalg.norm(p))
    rep.q_on_support_err = float(np.linalg.norm(q[cols] - s))
    rep.q_off_support_inf = _off_support_inf(q, cols)
    return rep


def golfing_certificate(op: LiftedOperator, omega_x: Sequence[int], sgn_X0, P: int, Q: int,
                        B: np.ndarray | None = None, scheme: str = "strided",
                        partition: BlockPartition | None = None,
                        gamma: float | None = None) -> CertificateReport:
    """Inexact certificate built by golfing over ``P`` disjoint blocks of ``Q`` rows.

    Starting from ``Y_0 = 0`` each round adds
    ``(L/Q) Phi_p^* Phi_{p,O} (s - Y_{p-1,O})`` where ``Phi_p`` keeps the
    rows of block ``p``; ``W_p = Y_{p,O} - s`` is traced. The block
    structure comes from ``partition`` or is built from ``B``.
    """
    L = op.L
    if P * Q != L:
        raise ValueError(f"need P*Q = L, got P={P}, Q={Q}, L={L}")
    if partition is None:
        if B is None:
            raise ValueError("give either B or a partition")
        partition = partition_blocks(B, Q, scheme)
    if partition.L != L or partition.Q != Q or partition.P != P:
        raise ValueError("partition does not match P, Q and L")
    omega_x = list(omega_x)
    cols, s = _sign_on_support(op, omega_x, sgn_X0)
    rep = CertificateReport(method="golfing", partition_max_deviation=partition.max_deviation)
    rep.gamma = spectral_norm(op.Phi) if gamma is None else float(gamma)
    rep.delta = check_local_isometry(op, omega_x)
    scale = L / Q
    p_vec = np.zeros(L, dtype=complex)
    W = -s
    trace = [float(np.linalg.norm(W))]
    for rows in partition.blocks:
        incr = scale * (op.Phi[np.ix_(rows, cols)] @ (-W))
        p_vec[rows] += incr
        Y_on = op.Phi[:, cols].conj().T @ p_vec
        W = Y_on - s
        trace.append(float(np.linalg.norm(W)))
    q = op.PhiH @ p_vec
    rep.W_norm_trace = trace
    rep.p_norm = float(np.linalg.norm(p_vec))
    rep.q_on_support_err = trace[-1]
    rep.q_off_support_inf = _off_support_inf(q, cols)
    return rep


def certify_instance(op: LiftedOperator, instance: ProblemInstance, P: int | None = None,
                     Q: int | None = None, scheme: str = "strided") -> CertificateReport:
    """Geometry checks plus a dual certificate for a noiseless instance.

    The least-squares certificate is used unless both ``P`` and ``Q`` are
    given, in which case the golfing certificate is built instead. The
    measured ``||Phi||`` is the ``gamma`` used in the thresholds; when the
    instance records a random matrix kind, its high-probability norm
    bound is stored as ``gamma_bound`` and enters ``cond1_pass``.
    """
    if not instance.noiseless:
        raise ValueError("certification needs a noiseless instance")
    omega = list(instance.support.indices)
    s = sgn(instance.X0)
    gamma = spectral_norm(op.Phi)
    if P is not None and Q is not None:
        rep = golfing_certificate(op, omega, s, P, Q, B=instance.B, scheme=scheme, gamma=gamma)
    else:
        rep = exact_dual_certificate(op, omega, s, gamma=gamma)
    kind = instance.meta.get("matrix")
    if kind in ("gaussian", "fourier"):
        rep.gamma_bound = gamma_bound(op.N, op.k, op.L, kind)
    return rep
