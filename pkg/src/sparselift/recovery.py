"""Rank-one extraction, gauge alignment and error metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

__all__ = [
    "RecoveryResult",
    "extract_rank_one",
    "align_scale",
    "rel_error",
    "detect_angles",
    "recover",
]


@dataclass(frozen=True)
class RecoveryResult:
    h_hat: np.ndarray
    x_hat: np.ndarray
    sigma1: float
    alpha0: complex
    rel_error_X: float
    err_h: float
    err_x: float
    epsilon: float

    def summary(self) -> dict:
        a = complex(self.alpha0)
        return {"sigma1": self.sigma1, "alpha0": [a.real, a.imag], "rel_error_X": self.rel_error_X,
                "err_h": self.err_h, "err_x": self.err_x, "epsilon": self.epsilon}


def extract_rank_one(X_hat: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Leading singular pair of ``X_hat`` split evenly between the factors.

    ``h_hat = sqrt(s1) u1`` and ``x_hat = sqrt(s1) conj(v1)``, so that
    ``outer(h_hat, x_hat)`` is the best rank-one approximation (the model
    is ``X = h x^T``, not ``h x^*``).
    """
    X_hat = np.asarray(X_hat)
    if X_hat.ndim != 2:
        raise ValueError("X_hat must be a matrix")
    U, s, Vh = np.linalg.svd(X_hat, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        raise ValueError("X_hat is zero; no rank-one factor to extract")
    r = math.sqrt(s[0])
    return r * U[:, 0], r * Vh[0], float(s[0])


def align_scale(h_hat, x_hat, h0, x0) -> tuple[complex, float, float]:
    """Scalar ``alpha0`` minimising the normalised misfit of ``(alpha h_hat, x_hat / alpha)``.

    For a fixed modulus ``|alpha| = t`` the best phase is available in
    closed form: with ``c1 = <h_hat, h0>/||h0||^2`` and
    ``c2 = <x0, x_hat>/||x0||^2``, the cross terms are
    ``-2 Re(e^{-i phi} (t c1 + c2 / t))`` so ``phi = arg(t c1 + c2 / t)``.
    The modulus is then found by a bounded scalar search over ``log t``.

    Returns ``(alpha0, err_h, err_x)`` with ``err_h = ||h0 - alpha0 h_hat||``
    and ``err_x = ||x0 - x_hat / alpha0||``.
    """
    h_hat, x_hat = np.asarray(h_hat, dtype=complex), np.asarray(x_hat, dtype=complex)
    h0, x0 = np.asarray(h0, dtype=complex), np.asarray(x0, dtype=complex)
    nh0, nx0 = float(np.linalg.norm(h0)), float(np.linalg.norm(x0))
    if nh0 == 0 or nx0 == 0:
        raise ValueError("h0 and x0 must be nonzero")
    nh, nx = float(np.linalg.norm(h_hat)), float(np.linalg.norm(x_hat))
    if nh == 0 or nx == 0:
        return complex("nan"), nh0, nx0

    c1 = np.vdot(h_hat, h0) / nh0**2
    c2 = np.vdot(x0, x_hat) / nx0**2
    a, b = nh**2 / nh0**2, nx**2 / nx0**2

    def phase(t):
        z = t * c1 + c2 / t
        return z / abs(z) if abs(z) > 0 else 1.0

    def misfit(s):
        t = math.exp(s)
        return a * t * t + b / (t * t) - 2.0 * abs(t * c1 + c2 / t)

    res = minimize_scalar(misfit, bounds=(-8.0, 8.0), method="bounded",
                          options={"xatol": 1e-10})
    t = math.exp(res.x)
    alpha = t * phase(t)
    err_h = float(np.linalg.norm(h0 - alpha * h_hat))
    err_x = float(np.linalg.norm(x0 - x_hat / alpha))
    return complex(alpha), err_h, err_x


def rel_error(X_hat, X0) -> float:
    X0 = np.asarray(X0)
    d = float(np.linalg.norm(X0))
    if d == 0:
        raise ValueError("X0 must be nonzero")
    return float(np.linalg.norm(np.asarray(X_hat) - X0)) / d


def detect_angles(x_hat, theta_grid: Sequence[float], n_sources: int, radius: int = 1) -> list[float]:
    """Grid angles of the ``n_sources`` strongest peaks of ``|x_hat|``.

    Peaks are picked greedily; after each pick the ``radius`` neighbouring
    bins on either side are suppressed. Fewer than ``n_sources`` angles come
    back only when every bin has been suppressed. The result is sorted.
    """
    mag = np.abs(np.asarray(x_hat)).astype(float)
    grid = np.asarray(theta_grid, dtype=float)
    if mag.size != grid.size:
        raise ValueError(f"x_hat has {mag.size} entries, grid has {grid.size}")
    if not 0 <= n_sources <= mag.size:
        raise ValueError(f"n_sources must be in [0, {mag.size}], got {n_sources}")
    alive = np.ones(mag.size, dtype=bool)
    picked = []
    for _ in range(n_sources):
        if not alive.any():
            break
        i = int(np.argmax(np.where(alive, mag, -np.inf)))
        picked.append(float(grid[i]))
        alive[max(0, i - radius):i + radius + 1] = False
    return sorted(picked)


def recover(X_hat, h0, x0) -> RecoveryResult:
    """Everything in one pass: factor, align and measure against ``h0 x0^T``."""
    X0 = np.outer(h0, x0)
    h_hat, x_hat, s1 = extract_rank_one(X_hat)
    alpha, eh, ex = align_scale(h_hat, x_hat, h0, x0)
    eps = float(np.linalg.norm(np.asarray(X_hat) - X0))
    return RecoveryResult(h_hat=h_hat, x_hat=x_hat, sigma1=s1, alpha0=alpha,
                          rel_error_X=eps / float(np.linalg.norm(X0)), err_h=eh, err_x=ex, epsilon=eps)
