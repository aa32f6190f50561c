"""Reference implementations written independently of the package.

These use scalar loops, brute-force enumeration or dense decompositions
and are only meant for small sizes.
"""

from itertools import combinations

import numpy as np


def measure_loop(A, B, h, x):
    L, N = A.shape
    y = np.zeros(L, dtype=complex)
    for l in range(L):
        gain = sum(B[l, i] * h[i] for i in range(B.shape[1]))
        y[l] = gain * sum(A[l, j] * x[j] for j in range(N))
    return y


def lift_loop(A, B, X):
    """out_l = b_l^* X a_l with b_l^* the l-th row of B."""
    L = A.shape[0]
    k, N = X.shape
    out = np.zeros(L, dtype=complex)
    for l in range(L):
        for i in range(k):
            for j in range(N):
                out[l] += B[l, i] * X[i, j] * A[l, j]
    return out


def phi_loop(A, B):
    L, N = A.shape
    k = B.shape[1]
    Phi = np.zeros((L, k * N), dtype=complex)
    for j in range(N):
        for i in range(k):
            for l in range(L):
                Phi[l, j * k + i] = B[l, i] * A[l, j]
    return Phi


def lp_vertex_bp(Phi, y):
    """min ||v||_1 s.t. Phi v = y for real full-row-rank Phi, by vertex enumeration.

    Splitting v = v+ - v- turns this into a standard-form LP whose basic
    feasible solutions have at most L nonzeros drawn from L linearly
    independent columns; the optimum is attained at one of them.
    """
    L, m = Phi.shape
    best, arg = np.inf, None
    for S in combinations(range(m), L):
        M = Phi[:, S]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        vS = np.linalg.solve(M, y)
        val = np.abs(vS).sum()
        if val < best:
            best, arg = val, (S, vS)
    v = np.zeros(m)
    v[list(arg[0])] = arg[1]
    return best, v


def subgradient_l1_l2(Phi, y, lam, iters=40_000, q=0.9997):
    """min ||v||_1 + lam ||v||_2 over {Phi v = y}, real data.

    Normalised projected subgradient steps in a null-space parametrisation
    with geometrically shrinking step length; returns the best value seen.
    """
    v0 = np.linalg.lstsq(Phi, y, rcond=None)[0]
    Z = np.linalg.svd(Phi)[2][Phi.shape[0]:].T
    def f(v):
        return np.abs(v).sum() + lam * np.linalg.norm(v)
    t = np.zeros(Z.shape[1])
    best, step = f(v0), np.linalg.norm(v0)
    for _ in range(iters):
        v = v0 + Z @ t
        best = min(best, f(v))
        nv = np.linalg.norm(v)
        g = np.sign(v) + (lam * v / nv if nv > 0 else 0.0)
        gz = Z.T @ g
        ng = np.linalg.norm(gz)
        if ng == 0:
            break
        t -= step * gz / ng
        step *= q
    return best


def spectral_norm_eig(M):
    """Largest singular value via a full (non-Hermitian-aware) eigendecomposition of M^* M."""
    ev = np.linalg.eigvals(M.conj().T @ M)
    return float(np.sqrt(np.max(ev.real)))


def hermitian_defect_eig(G):
    """||G - I|| for Hermitian G via the full eigenvector decomposition."""
    w, V = np.linalg.eigh(G - np.eye(G.shape[0]))
    return float(np.max(np.abs(w)))


def peaks_bruteforce(mag, grid, count):
    """Pick peaks by repeatedly scanning every bin and knocking out neighbours."""
    mag = list(map(float, mag))
    taken = [False] * len(mag)
    out = []
    for _ in range(count):
        best, idx = -1.0, None
        for i, m in enumerate(mag):
            if not taken[i] and m > best:
                best, idx = m, i
        if idx is None:
            break
        out.append(float(grid[idx]))
        for d in (-1, 0, 1):
            if 0 <= idx + d < len(mag):
                taken[idx + d] = True
    return sorted(out)
