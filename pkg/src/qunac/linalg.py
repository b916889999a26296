"""Small dense linear-algebra helpers shared by the update formulas.

Blocks are plain ``numpy`` arrays: an ``n x q`` sampling block ``S`` and a
second block of the same shape holding ``W @ S`` (or ``Q @ S``).  Full
``n x n`` weighting or target matrices are never needed here.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

PIVOT_RTOL = 1e-14


class NotPositiveDefinite(np.linalg.LinAlgError):
    """Raised when a Gram matrix has a pivot at or below tolerance.

    ``pivot`` is the 1-based position of the failing pivot, so the leading
    ``pivot - 1`` columns of the sampling block are still usable.
    """

    def __init__(self, pivot: int, value: float):
        self.pivot = pivot
        self.value = value
        super().__init__(f"non-positive pivot {value:.3e} at index {pivot}")


def symmetrize(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def as_block(S) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    if S.ndim == 1:
        S = S[:, None]
    if S.ndim != 2:
        raise ValueError(f"expected a vector or an n x q block, got shape {S.shape}")
    return S


def gram(S, B) -> np.ndarray:
    """Return the symmetrized q x q matrix ``S.T @ B``."""
    S, B = as_block(S), as_block(B)
    if S.shape != B.shape:
        raise ValueError(f"block shapes differ: {S.shape} vs {B.shape}")
    return symmetrize(S.T @ B)


@dataclass(frozen=True)
class GramFactor:
    """Lower Cholesky factor ``L`` with ``M = L @ L.T``."""

    L: np.ndarray

    @property
    def size(self) -> int:
        return self.L.shape[0]

    def solve(self, y):
        y = np.asarray(y, dtype=float)
        z = solve_triangular(self.L, y, lower=True, check_finite=False)
        return solve_triangular(self.L.T, z, lower=False, check_finite=False)

    def inv_sqrt_T(self, B):
        """Return ``B @ L^{-T}``; maps a block onto one with identity Gram."""
        B = as_block(B)
        return solve_triangular(self.L, B.T, lower=True, check_finite=False).T


def gram_solve_factor(M) -> GramFactor:
    """Cholesky factorization of a small symmetric matrix.

    Pivots must exceed ``1e-14`` times the largest diagonal entry; otherwise
    :class:`NotPositiveDefinite` is raised carrying the failing pivot.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    q = M.shape[0]
    if M.shape != (q, q):
        raise ValueError(f"Gram matrix must be square, got {M.shape}")
    if q == 0:
        return GramFactor(np.zeros((0, 0)))
    scale = np.max(np.abs(np.diag(M)))
    tol = PIVOT_RTOL * scale
    L = np.zeros_like(M)
    for j in range(q):
        d = M[j, j] - L[j, :j] @ L[j, :j]
        if not np.isfinite(d) or d <= tol:
            raise NotPositiveDefinite(j + 1, float(d))
        L[j, j] = np.sqrt(d)
        L[j + 1:, j] = (M[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return GramFactor(L)


def leading_factor(M) -> tuple[GramFactor, int]:
    """Factor the largest leading principal block of ``M`` that is positive definite.

    Returns the factor and the number of retained leading columns, which may
    be zero.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    q = M.shape[0]
    while q > 0:
        try:
            return gram_solve_factor(M[:q, :q]), q
        except NotPositiveDefinite as exc:
            q = exc.pivot - 1
    return GramFactor(np.zeros((0, 0))), 0


def proj_apply(S, factor: GramFactor, v):
    """Apply ``S (S^T W S)^{-1} S^T`` to a vector or block ``v``."""
    S = as_block(S)
    return S @ factor.solve(S.T @ v)
