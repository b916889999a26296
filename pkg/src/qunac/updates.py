"""Action-constrained symmetric matrix updates.

Every function takes the previous estimate, a sampling block ``S`` and the
recorded action ``QS`` of the target on that block.  The target matrix
itself is never formed.

* :func:`least_change_update` -- nearest symmetric matrix (weighted Frobenius
  norm) with ``G_new @ S == QS``; rank at most ``3q``.
* :func:`qunac_direct` -- the positive-definiteness preserving special case
  with weighting ``W S = Q S`` (block DFP on the direct estimate).
* :func:`qunac_inverse` -- the same formula with the roles of ``S`` and
  ``QS`` swapped, estimating the inverse (block BFGS).
* :func:`qunac_direct_inverse` -- inverse of :func:`qunac_direct` obtained
  through two Woodbury steps, working only with ``H``.
* :func:`family_blend` -- convex combination of the two inverse updates.

If the Gram matrix of the sampling block is singular (dependent columns,
lost curvature) the trailing columns are dropped until it factors, unless
``trim=False`` is passed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import GramFactor, NotPositiveDefinite, as_block, gram, gram_solve_factor, leading_factor, symmetrize


class RankDeficientSampling(ValueError):
    """No usable columns remain after factoring the Gram matrix."""

    def __init__(self, which: str, pivot: int):
        self.which = which
        self.pivot = pivot
        super().__init__(f"Gram matrix {which} is not positive definite (pivot {pivot})")


@dataclass(frozen=True)
class UpdateResult:
    matrix: np.ndarray
    rank_bound: int
    q: int


@dataclass(frozen=True)
class SamplingBlock:
    """Sampling directions, their recorded action and (optionally) curvatures."""

    S: np.ndarray
    action: np.ndarray
    curvatures: np.ndarray | None = None

    def __post_init__(self):
        if self.S.shape != self.action.shape:
            raise ValueError(f"block shapes differ: {self.S.shape} vs {self.action.shape}")
        if self.curvatures is not None and np.any(self.curvatures <= 0):
            raise ValueError("curvatures must be positive")

    @property
    def q(self) -> int:
        return self.S.shape[1]

    @classmethod
    def empty(cls, n: int) -> "SamplingBlock":
        return cls(np.zeros((n, 0)), np.zeros((n, 0)), np.zeros(0))


def _factor(S, B, which: str, trim: bool) -> tuple[GramFactor, int]:
    M = gram(S, B)
    if not trim:
        try:
            return gram_solve_factor(M), M.shape[0]
        except NotPositiveDefinite as exc:
            raise RankDeficientSampling(which, exc.pivot) from exc
    factor, q = leading_factor(M)
    if q == 0:
        raise RankDeficientSampling(which, 1)
    return factor, q


def _blocks(M, S, QS):
    M = np.asarray(M, dtype=float)
    S, QS = as_block(S), as_block(QS)
    n = M.shape[0]
    if M.shape != (n, n) or S.shape[0] != n or S.shape != QS.shape:
        raise ValueError(f"incompatible shapes: matrix {M.shape}, S {S.shape}, QS {QS.shape}")
    return M, S, QS


def least_change_update(G, S, QS, WS, *, trim: bool = True) -> UpdateResult:
    """Least-change update with general positive definite weighting ``W``.

    Computes ``Q + (I - W P)(G - Q)(I - P W)`` with ``P = S (S^T W S)^{-1} S^T``
    from the products ``G S``, ``Q S`` and ``W S`` only.
    """
    G, S, QS = _blocks(G, S, QS)
    WS = as_block(WS)
    if WS.shape != S.shape:
        raise ValueError(f"WS has shape {WS.shape}, expected {S.shape}")
    factor, q = _factor(S, WS, "S^T W S", trim)
    S, QS, WS = S[:, :q], QS[:, :q], WS[:, :q]

    Y = G @ S - QS  # (G - Q) S
    K_WS = factor.solve(WS.T)  # (S^T W S)^{-1} (W S)^T, q x n
    inner = factor.solve(S.T @ Y)  # (S^T W S)^{-1} S^T (G - Q) S
    cross = WS @ factor.solve(Y.T)  # W P (G - Q)
    new = G - cross - cross.T + WS @ inner @ K_WS
    return UpdateResult(symmetrize(new), 3 * q, q)


def _qunac(G, X, Y, which: str, trim: bool) -> UpdateResult:
    # G_new = Y K Y^T + (I - Y K X^T) G (I - X K Y^T),  K = (X^T Y)^{-1}
    factor, q = _factor(X, Y, which, trim)
    X, Y = X[:, :q], Y[:, :q]
    GX = G @ X
    KYt = factor.solve(Y.T)
    B = Y @ factor.solve(GX.T)  # Y K (G X)^T
    new = G + Y @ KYt - B - B.T + Y @ factor.solve(X.T @ GX) @ KYt
    return UpdateResult(symmetrize(new), 2 * q, q)


def qunac_direct(G, S, QS, *, trim: bool = True) -> UpdateResult:
    """Direct estimate update imposing ``G_new @ S == QS``."""
    G, S, QS = _blocks(G, S, QS)
    return _qunac(G, S, QS, "S^T Q S", trim)


def qunac_inverse(H, S, QS, *, trim: bool = True) -> UpdateResult:
    """Inverse estimate update imposing ``H_new @ QS == S``."""
    H, S, QS = _blocks(H, S, QS)
    return _qunac(H, QS, S, "S^T Q S", trim)


def qunac_direct_inverse(H, S, QS, *, trim: bool = True) -> UpdateResult:
    """Inverse of the direct update, written in terms of ``H = G^{-1}``.

    ``H + S (S^T Q S)^{-1} S^T - H Q S (S^T Q H Q S)^{-1} S^T Q H``.
    """
    H, S, QS = _blocks(H, S, QS)
    HQS = H @ QS
    f1, q1 = _factor(S, QS, "S^T Q S", trim)
    f2, q2 = _factor(QS[:, :q1], HQS[:, :q1], "S^T Q H Q S", trim)
    if q2 < q1:
        # leading blocks of a positive definite matrix stay positive definite
        f1 = gram_solve_factor(gram(S[:, :q2], QS[:, :q2]))
    S, HQS = S[:, :q2], HQS[:, :q2]
    new = H + S @ f1.solve(S.T) - HQS @ f2.solve(HQS.T)
    return UpdateResult(symmetrize(new), 2 * q2, q2)


def family_blend(H, S, QS, lam: float, *, trim: bool = True) -> UpdateResult:
    """``lam * direct_inverse + (1 - lam) * inverse``; ``lam`` in ``[0, 1]``."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lam must lie in [0, 1], got {lam}")
    if lam == 0.0:
        return qunac_inverse(H, S, QS, trim=trim)
    if lam == 1.0:
        return qunac_direct_inverse(H, S, QS, trim=trim)
    H, S, QS = _blocks(H, S, QS)
    direct = qunac_direct_inverse(H, S, QS, trim=trim)
    inverse = qunac_inverse(H, S[:, :direct.q], QS[:, :direct.q], trim=trim)
    blended = lam * direct.matrix + (1.0 - lam) * inverse.matrix
    return UpdateResult(symmetrize(blended), max(direct.rank_bound, inverse.rank_bound), inverse.q)


def family_correction(H, S, QS) -> np.ndarray:
    """Factor ``V`` (n x q) with ``inverse - direct_inverse = V V^T``.

    Members of the blended family therefore differ by at most rank ``q``:
    ``family_blend(H, S, QS, lam) == qunac_inverse(H, S, QS) - lam * V V^T``.
    """
    H, S, QS = _blocks(H, S, QS)
    HQS = H @ QS
    f1 = gram_solve_factor(gram(S, QS))
    f2 = gram_solve_factor(gram(QS, HQS))
    # (P Q - I) H Q S (S^T Q H Q S)^{-1/2}, using the Cholesky factor as the square root
    V = S @ f1.solve(QS.T @ HQS) - HQS
    return f2.inv_sqrt_T(V)
