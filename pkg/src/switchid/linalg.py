"""Small dense matrix analysis used throughout the toolkit."""

from __future__ import annotations

import numpy as np
from scipy.linalg import expm as _scipy_expm

CHARPOLY_MAX_SIZE = 32
RANK_TOL = 1e-9


def expm(M: np.ndarray) -> np.ndarray:
    """Matrix exponential (scaling and squaring with a degree-13 Padé approximant)."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return np.zeros_like(M)
    return _scipy_expm(M)


def char_poly(M, max_size: int = CHARPOLY_MAX_SIZE) -> np.ndarray:
    """Coefficients of ``det(sI - M)`` in descending powers, leading 1.

    Uses the Faddeev-LeVerrier recurrence. Matrices larger than
    ``max_size`` are rejected because the recurrence loses accuracy
    quickly as the order grows.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"char_poly needs a square matrix, got shape {M.shape}")
    n = M.shape[0]
    if n > max_size:
        raise ValueError(f"matrix of order {n} exceeds the characteristic polynomial cap {max_size}")
    coeffs = np.zeros(n + 1)
    coeffs[0] = 1.0
    I = np.eye(n)
    Mk = np.zeros((n, n))
    for k in range(1, n + 1):
        Mk = M @ Mk + coeffs[k - 1] * I
        coeffs[k] = -np.trace(M @ Mk) / k
    return coeffs


def _numerical_rank(X: np.ndarray, tol: float) -> int:
    if X.size == 0:
        return 0
    s = np.linalg.svd(X, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))


def observability_matrix(A, C) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    n = A.shape[0]
    blocks = [C]
    for _ in range(1, n):
        blocks.append(blocks[-1] @ A)
    return np.vstack(blocks)


def check_observability(A, C, tol: float = RANK_TOL) -> bool:
    """True iff ``(A, C)`` is observable at relative rank tolerance ``tol``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    if A.shape[0] != A.shape[1] or C.shape[1] != A.shape[0]:
        raise ValueError(f"incompatible shapes A{A.shape}, C{C.shape}")
    n = A.shape[0]
    if n == 0:
        return True
    return _numerical_rank(observability_matrix(A, C), tol) == n


def markov_parameters(A, B, C, count: int) -> list[np.ndarray]:
    """Return ``[CB, CAB, ..., C A^(count-1) B]``."""
    if count < 1:
        raise ValueError("count must be at least 1")
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    C = np.asarray(C, dtype=float).reshape(-1, A.shape[0])
    out = []
    AkB = B
    for _ in range(count):
        out.append(C @ AkB)
        AkB = A @ AkB
    return out


def controllability_staircase(A, B, tol: float = RANK_TOL):
    """Orthogonal staircase reduction of ``(A, B)``.

    Returns ``(T, n_c)`` with ``T`` orthogonal such that ``T.T @ A @ T`` is
    block upper triangular and its leading ``n_c`` by ``n_c`` block is the
    controllable part. Rank decisions are taken relative to
    ``max(|A|, |B|)``, not to each shrinking sub-block.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    B = np.asarray(B, dtype=float).reshape(n, -1)
    scale = max(np.linalg.norm(A, 2) if A.size else 0.0, np.linalg.norm(B, 2) if B.size else 0.0)
    T = np.eye(n)
    if scale == 0.0 or n == 0:
        return T, 0
    threshold = tol * scale
    Aw = A.copy()
    Bblk = B
    k = 0
    while k < n:
        U, s, _ = np.linalg.svd(Bblk, full_matrices=True)
        r = int(np.sum(s > threshold))
        if r == 0:
            break
        Q = np.eye(n)
        Q[k:, k:] = U
        Aw = Q.T @ Aw @ Q
        T = T @ Q
        Bblk = Aw[k + r:, k:k + r]
        k += r
    return T, k


def uncontrollable_charpoly(A, B, tol: float = RANK_TOL) -> np.ndarray:
    """Characteristic polynomial of the uncontrollable part of ``(A, B)``.

    Returns ``[1.0]`` when the pair is controllable.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    T, n_c = controllability_staircase(A, B, tol)
    At = T.T @ A @ T
    return char_poly(At[n_c:, n_c:])
