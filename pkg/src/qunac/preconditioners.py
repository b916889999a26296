"""Inverse-Hessian preconditioners built from PCG sampling blocks.

Both forms assume the block columns are normalized so ``S.T @ S_bar == I``
where ``S_bar`` is the recorded Hessian action on ``S``.  PCG output meets
this in exact arithmetic; :func:`conjugate_normalize` restores it when
round-off has eroded conjugacy.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .linalg import as_block, gram, leading_factor, symmetrize
from .updates import RankDeficientSampling

CONTRACT_TOL = 1e-6


class ContractViolation(ValueError):
    pass


class CurvatureError(ValueError):
    pass


@dataclass(frozen=True)
class ScaledIdentity:
    scale: float = 1.0

    def __call__(self, v):
        return self.scale * np.asarray(v, dtype=float)


@dataclass(frozen=True)
class FullMemoryPrecond:
    H: np.ndarray

    def __call__(self, v):
        return self.H @ v


def normalization_error(S, S_bar) -> float:
    S, S_bar = as_block(S), as_block(S_bar)
    if S.shape[1] == 0:
        return 0.0
    return float(np.max(np.abs(S.T @ S_bar - np.eye(S.shape[1]))))


def conjugate_normalize(S, S_bar, tol: float = 1e-8) -> tuple[np.ndarray, np.ndarray]:
    """Change basis within ``span(S)`` so that ``S.T @ S_bar == I``.

    The inverse update depends only on the span, so this leaves the updated
    preconditioner unchanged in exact arithmetic.  Trailing columns are
    dropped while the Gram matrix is numerically singular or the
    transformed block misses the identity by more than ``tol``.
    """
    S, S_bar = as_block(S), as_block(S_bar)
    factor, q = leading_factor(gram(S, S_bar))
    if q == 0:
        if S.shape[1] > 0:
            raise RankDeficientSampling("S^T Q S", 1)
        return S, S_bar
    S, S_bar = factor.inv_sqrt_T(S[:, :q]), factor.inv_sqrt_T(S_bar[:, :q])
    err = np.abs(S.T @ S_bar - np.eye(q))
    # the transform is triangular, so each leading prefix is normalized on its own
    prefix_err = np.maximum.accumulate(np.maximum(err.max(axis=0), err.max(axis=1)))
    keep = int(np.searchsorted(prefix_err > tol, True))
    if keep == 0:
        raise RankDeficientSampling("S^T Q S", 1)
    return S[:, :keep], S_bar[:, :keep]


def _check_contract(S, S_bar, tol):
    err = normalization_error(S, S_bar)
    if err > tol:
        raise ContractViolation(f"S^T S_bar deviates from identity by {err:.2e} (tolerance {tol:.0e})")


def full_memory_update(H, S, S_bar, *, tol: float = CONTRACT_TOL) -> np.ndarray:
    """Inverse update of an explicit matrix from a normalized block, O(n^2 q)."""
    H = np.asarray(H, dtype=float)
    S, S_bar = as_block(S), as_block(S_bar)
    if S.shape != S_bar.shape or S.shape[0] != H.shape[0]:
        raise ValueError(f"incompatible shapes: H {H.shape}, S {S.shape}, S_bar {S_bar.shape}")
    q = S.shape[1]
    if q == 0:
        return H.copy()
    _check_contract(S, S_bar, tol)
    H_under = H @ S_bar
    H_over = H_under @ S.T
    E = S @ (np.eye(q) + S_bar.T @ H_under) @ S.T - H_over - H_over.T
    return symmetrize(H + E)


@dataclass(frozen=True)
class LimitedMemoryPrecond:
    """``H0`` followed by one or more stored blocks, newest last.

    With a single block this is the usual limited-memory operator; more
    blocks chain the update, each block using the previous operator as its
    base.
    """

    H0: Callable[[np.ndarray], np.ndarray]
    blocks: tuple = field(default=())

    @property
    def q(self) -> int:
        return sum(S.shape[1] for S, _ in self.blocks)

    def with_block(self, S, S_bar, *, keep: int = 1, tol: float = CONTRACT_TOL) -> "LimitedMemoryPrecond":
        S, S_bar = as_block(S), as_block(S_bar)
        if S.shape != S_bar.shape:
            raise ValueError(f"block shapes differ: {S.shape} vs {S_bar.shape}")
        if S.shape[1] == 0:
            return self
        _check_contract(S, S_bar, tol)
        blocks = (self.blocks + ((S, S_bar),))[-keep:] if keep > 0 else ()
        return LimitedMemoryPrecond(self.H0, blocks)

    def __call__(self, v):
        return lqunac_apply(self, v)


def _lqunac_step(base, S, S_bar, v):
    vS = S.T @ v
    z = v - S_bar @ vS
    r = base(z)
    rS = S_bar.T @ r
    return r + S @ (vS - rS)


def lqunac_apply(pre: LimitedMemoryPrecond, v):
    """Apply the limited-memory inverse estimate to ``v`` (vector or block)."""
    v = np.asarray(v, dtype=float)

    def level(j, w):
        if j < 0:
            return pre.H0(w)
        S, S_bar = pre.blocks[j]
        if w.shape[0] != S.shape[0]:
            raise ValueError(f"vector has length {w.shape[0]}, expected {S.shape[0]}")
        return _lqunac_step(lambda u: level(j - 1, u), S, S_bar, w)

    return level(len(pre.blocks) - 1, v)


def two_loop_apply(H0, pairs: Sequence[tuple[np.ndarray, np.ndarray]], v, *, normalized: bool):
    """Classic two-loop recursion over ``(s, s_bar)`` pairs, oldest first.

    ``normalized=True`` assumes ``s @ s_bar == 1`` (PCG output); otherwise the
    pairs are raw secant pairs ``(delta, gamma)`` and ``rho = 1 / gamma @ delta``
    is applied.
    """
    q_vec = np.array(v, dtype=float)
    rhos, alphas = [], []
    for s, y in pairs:
        if normalized:
            rhos.append(1.0)
        else:
            sy = y @ s
            if not sy > 0:
                raise CurvatureError(f"pair has non-positive curvature {sy:.3e}")
            rhos.append(1.0 / sy)
    for (s, y), rho in zip(reversed(pairs), reversed(rhos)):
        a = rho * (s @ q_vec)
        q_vec -= a * y
        alphas.append(a)
    r = H0(q_vec)
    for (s, y), rho, a in zip(pairs, rhos, reversed(alphas)):
        b = rho * (y @ r)
        r += (a - b) * s
    return r
