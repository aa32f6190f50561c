"""Measurement model ``y = diag(B h) A x + w`` and its random generators.

Every generator is a pure function of its arguments and an integer seed;
no module-level RNG state is touched.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

__all__ = [
    "Dimensions",
    "SupportSet",
    "ProblemInstance",
    "gen_gaussian_A",
    "gen_fourier_A",
    "gen_dft_B",
    "gen_circular_array_A",
    "gen_sparse_x",
    "gen_dense_h",
    "measure",
    "add_noise_snr",
    "make_instance",
    "save_instance",
    "load_instance",
    "encode_complex",
    "decode_complex",
]


@dataclass(frozen=True)
class Dimensions:
    """Problem sizes: ``L`` measurements, signal length ``N``, subspace
    dimension ``k`` and sparsity ``n``."""

    L: int
    N: int
    k: int
    n: int

    def __post_init__(self):
        if self.L < 1 or self.N < 1:
            raise ValueError(f"L and N must be positive, got L={self.L}, N={self.N}")
        if not 1 <= self.k <= self.L:
            raise ValueError(f"need 1 <= k <= L, got k={self.k}, L={self.L}")
        if not 1 <= self.n <= self.N:
            raise ValueError(f"need 1 <= n <= N, got n={self.n}, N={self.N}")


@dataclass(frozen=True)
class SupportSet:
    indices: tuple[int, ...]
    N: int

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if list(idx) != sorted(set(idx)):
            raise ValueError("support indices must be sorted and distinct")
        if idx and (idx[0] < 0 or idx[-1] >= self.N):
            raise ValueError(f"support index out of range [0, {self.N})")
        object.__setattr__(self, "indices", idx)

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=int)


@dataclass
class ProblemInstance:
    """One realisation of the self-calibration model.

    ``meta`` carries the provenance needed to regenerate the instance
    (matrix kinds, seeds, SNR); it is echoed verbatim on serialisation.
    """

    A: np.ndarray
    B: np.ndarray
    h0: np.ndarray
    x0: np.ndarray
    w: np.ndarray
    y: np.ndarray
    eta: float = 0.0
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def dims(self) -> Dimensions:
        L, N = self.A.shape
        return Dimensions(L=L, N=N, k=self.B.shape[1], n=max(1, int(np.count_nonzero(self.x0))))

    @property
    def support(self) -> SupportSet:
        return SupportSet(tuple(np.flatnonzero(self.x0)), self.A.shape[1])

    @property
    def X0(self) -> np.ndarray:
        return np.outer(self.h0, self.x0)

    @property
    def noiseless(self) -> bool:
        return self.eta == 0 and not np.any(self.w)

    def to_dict(self) -> dict[str, Any]:
        return {
            "dims": {"L": self.A.shape[0], "N": self.A.shape[1], "k": self.B.shape[1],
                     "n": int(np.count_nonzero(self.x0))},
            "meta": self.meta,
            "eta": float(self.eta),
            "arrays": {name: encode_complex(getattr(self, name))
                       for name in ("A", "B", "h0", "x0", "w", "y")},
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ProblemInstance":
        arrays = {name: decode_complex(val) for name, val in data["arrays"].items()}
        return cls(eta=float(data.get("eta", 0.0)), meta=dict(data.get("meta", {})), **arrays)


def encode_complex(a: np.ndarray) -> dict[str, Any]:
    a = np.asarray(a, dtype=complex)
    # float repr round-trips exactly through json
    return {"shape": list(a.shape),
            "data": [[float(z.real), float(z.imag)] for z in a.ravel()]}


def decode_complex(obj: dict[str, Any]) -> np.ndarray:
    pairs = np.asarray(obj["data"], dtype=float).reshape(-1, 2)
    return (pairs[:, 0] + 1j * pairs[:, 1]).reshape(obj["shape"])


def save_instance(instance: ProblemInstance, path: str | Path) -> None:
    Path(path).write_text(json.dumps(instance.to_dict()))


def load_instance(path: str | Path) -> ProblemInstance:
    return ProblemInstance.from_dict(json.loads(Path(path).read_text()))


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def gen_gaussian_A(dims: Dimensions, seed) -> np.ndarray:
    """iid real N(0, 1) entries, stored as complex."""
    return _rng(seed).standard_normal((dims.L, dims.N)).astype(complex)


def gen_fourier_A(dims: Dimensions, seed) -> np.ndarray:
    """Rows drawn uniformly with replacement from the unnormalised N x N DFT.

    ``F[r, c] = exp(-2j pi r c / N)`` so that ``F^* F = N I``.
    """
    rows = _rng(seed).integers(0, dims.N, size=dims.L)
    return np.exp(-2j * np.pi * np.outer(rows, np.arange(dims.N)) / dims.N)


def gen_dft_B(L: int, k: int) -> np.ndarray:
    """First ``k`` columns of the unitary ``L x L`` DFT matrix."""
    if not 1 <= k <= L:
        raise ValueError(f"need 1 <= k <= L, got k={k}, L={L}")
    return np.exp(-2j * np.pi * np.outer(np.arange(L), np.arange(k)) / L) / math.sqrt(L)


def gen_circular_array_A(L: int, theta_grid_degrees: Sequence[float],
                         spacing_wavelengths: float = 0.5) -> np.ndarray:
    """Steering matrix of a uniform circular array of ``L`` sensors.

    Sensor ``j`` sits at ``r [sin(2 pi j/L), cos(2 pi j/L)]`` with radius
    ``r = spacing / (2 sin(pi/L))``, so neighbouring sensors are
    ``spacing`` wavelengths apart. Column ``t`` is
    ``exp(-2j pi <v(theta_t), u_j>)`` with ``v = [sin theta, cos theta]``.
    """
    if L < 2:
        raise ValueError("circular array needs L >= 2")
    theta = np.deg2rad(np.asarray(theta_grid_degrees, dtype=float))
    if theta.size == 0:
        raise ValueError("empty angle grid")
    if spacing_wavelengths <= 0:
        raise ValueError("spacing must be positive")
    radius = spacing_wavelengths / (2.0 * math.sin(math.pi / L))
    phi = 2.0 * np.pi * np.arange(L) / L
    u = radius * np.stack([np.sin(phi), np.cos(phi)], axis=1)  # L x 2
    v = np.stack([np.sin(theta), np.cos(theta)], axis=0)  # 2 x N
    return np.exp(-2j * np.pi * (u @ v))


def gen_sparse_x(N: int, n: int, seed, complex_values: bool = False) -> tuple[np.ndarray, SupportSet]:
    if not 0 <= n <= N:
        raise ValueError(f"need 0 <= n <= N, got n={n}, N={N}")
    rng = _rng(seed)
    support = np.sort(rng.choice(N, size=n, replace=False))
    x = np.zeros(N, dtype=complex)
    if complex_values:
        x[support] = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / math.sqrt(2)
    else:
        x[support] = rng.standard_normal(n)
    return x, SupportSet(tuple(support), N)


def gen_dense_h(k: int, seed, complex_values: bool = False) -> np.ndarray:
    rng = _rng(seed)
    if complex_values:
        return (rng.standard_normal(k) + 1j * rng.standard_normal(k)) / math.sqrt(2)
    return rng.standard_normal(k).astype(complex)


def measure(A: np.ndarray, B: np.ndarray, h0: np.ndarray, x0: np.ndarray,
            w: np.ndarray | None = None) -> np.ndarray:
    """``y_l = (B h0)_l (a_l^T x0) + w_l``."""
    A, B = np.asarray(A), np.asarray(B)
    h0, x0 = np.asarray(h0).ravel(), np.asarray(x0).ravel()
    L, N = A.shape
    if B.shape[0] != L or B.shape[1] != h0.size or x0.size != N:
        raise ValueError(f"shape mismatch: A{A.shape}, B{B.shape}, h0({h0.size}), x0({x0.size})")
    y = (B @ h0) * (A @ x0)
    if w is not None:
        w = np.asarray(w).ravel()
        if w.size != L:
            raise ValueError(f"noise length {w.size} != L={L}")
        y = y + w
    return y


def add_noise_snr(y_clean: np.ndarray, snr_db: float, X0_frob: float, seed):
    """Add circular complex Gaussian noise at ``SNR = ||X0||_F^2 / ||w||^2``.

    Returns ``(y, sigma, eta)`` where ``sigma^2`` is the per-entry noise
    variance and ``eta = sqrt(L + sqrt(4L)) sigma`` the feasibility radius.
    ``snr_db = inf`` gives the noiseless instance.
    """
    y_clean = np.asarray(y_clean, dtype=complex)
    L = y_clean.size
    if math.isinf(snr_db) and snr_db > 0:
        return y_clean.copy(), 0.0, 0.0
    if not math.isfinite(snr_db):
        raise ValueError(f"snr_db must be finite or +inf, got {snr_db}")
    sigma = X0_frob * 10.0 ** (-snr_db / 20.0) / math.sqrt(L)
    rng = _rng(seed)
    w = sigma * (rng.standard_normal(L) + 1j * rng.standard_normal(L)) / math.sqrt(2)
    eta = math.sqrt(L + math.sqrt(4 * L)) * sigma
    return y_clean + w, sigma, eta


def make_instance(dims: Dimensions, seed: int, matrix: str = "fourier",
                  snr_db: float = math.inf, complex_x: bool = False,
                  complex_h: bool = False, B: np.ndarray | None = None,
                  A: np.ndarray | None = None) -> ProblemInstance:
    """Draw a full instance with independent streams for A, h, x and noise.

    ``A`` or ``B`` may be supplied to override the generated matrices
    (used by the DOA scenario).
    """
    s_A, s_h, s_x, s_w = np.random.SeedSequence(seed).spawn(4)
    if A is None:
        if matrix == "gaussian":
            A = gen_gaussian_A(dims, s_A)
        elif matrix == "fourier":
            A = gen_fourier_A(dims, s_A)
        else:
            raise ValueError(f"unknown matrix kind {matrix!r}")
    if B is None:
        B = gen_dft_B(dims.L, dims.k)
    h0 = gen_dense_h(dims.k, s_h, complex_values=complex_h)
    x0, _ = gen_sparse_x(dims.N, dims.n, s_x, complex_values=complex_x)
    y_clean = measure(A, B, h0, x0)
    X0_frob = float(np.linalg.norm(h0) * np.linalg.norm(x0))
    y, sigma, eta = add_noise_snr(y_clean, snr_db, X0_frob, s_w)
    meta = {"seed": int(seed), "matrix": matrix, "snr_db": snr_db if math.isfinite(snr_db) else "inf",
            "sigma": sigma, "complex_x": complex_x, "complex_h": complex_h}
    return ProblemInstance(A=A, B=B, h0=h0, x0=x0, w=y - y_clean, y=y, eta=eta, meta=meta)
