"""Preconditioned CG for one Newton system, harvesting conjugate directions.

The loop solves ``A y = -r0`` from ``y = 0``.  Every direction of positive
curvature is stored scaled to unit ``A``-norm together with its (already
computed) action, so the caller can update a preconditioner for free.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .updates import SamplingBlock

Operator = Callable[[np.ndarray], np.ndarray]


class NumericalBreakdown(ArithmeticError):
    def __init__(self, message: str, iteration: int | None = None):
        self.iteration = iteration
        super().__init__(message if iteration is None else f"{message} (iteration {iteration})")


class CGStatus(str, enum.Enum):
    CONVERGED = "converged"
    MAX_ITERATIONS = "max-iterations"
    NEGATIVE_CURVATURE_LATER = "negative-curvature-later"
    NEGATIVE_CURVATURE_FIRST = "negative-curvature-first"


@dataclass(frozen=True)
class CGConfig:
    max_q: int = 20
    tol: float = 1e-2

    def __post_init__(self):
        if self.max_q < 1:
            raise ValueError("max_q must be at least 1")
        if not 0.0 <= self.tol < 1.0:
            raise ValueError("tol must lie in [0, 1)")


@dataclass
class CGResult:
    sampling: SamplingBlock
    step: np.ndarray
    status: CGStatus
    inner_iterations: int
    final_relative_residual: float
    operator_applications: int = 0
    # unscaled conjugate directions, kept for diagnostics
    directions: np.ndarray = field(repr=False, default=None)


def pcg_tolerance(grad_norm: float) -> float:
    """Forcing term ``min(0.01, sqrt(||grad||))`` (superlinear inexact Newton)."""
    if grad_norm < 0:
        raise ValueError("grad_norm must be nonnegative")
    return min(0.01, math.sqrt(grad_norm))


def identity(v):
    return v


def pcg_collect(A: Operator, M_inv: Operator | None, r0, config: CGConfig) -> CGResult:
    """Run PCG on ``A y = -r0`` with preconditioner ``M_inv``.

    Stops on relative residual ``||r|| / ||r0|| < config.tol``, after
    ``config.max_q`` iterations, or on non-positive curvature.  Negative
    curvature on the very first direction returns that direction as the
    step and an empty sampling block.
    """
    M_inv = identity if M_inv is None else M_inv
    r = np.array(r0, dtype=float)
    n = r.shape[0]
    r0_norm = np.linalg.norm(r)
    if not np.isfinite(r0_norm):
        raise NumericalBreakdown("non-finite initial residual", 0)
    if r0_norm == 0.0:
        return CGResult(SamplingBlock.empty(n), np.zeros(n), CGStatus.CONVERGED, 0, 0.0, 0, np.zeros((n, 0)))

    z = M_inv(r)
    p = -z
    rz = r @ z
    y = np.zeros(n)
    S, AS, P, curv = [], [], [], []
    status = CGStatus.MAX_ITERATIONS
    rel = 1.0
    applications = 0
    for i in range(config.max_q):
        Ap = A(p)
        applications += 1
        c = p @ Ap
        if not np.isfinite(c):
            raise NumericalBreakdown("non-finite curvature", i)
        if c <= 0.0:
            if i == 0:
                return CGResult(SamplingBlock.empty(n), p, CGStatus.NEGATIVE_CURVATURE_FIRST, 0, 1.0, 1,
                                np.zeros((n, 0)))
            status = CGStatus.NEGATIVE_CURVATURE_LATER
            break
        alpha = rz / c
        y += alpha * p
        r += alpha * Ap
        scale = 1.0 / math.sqrt(c)
        S.append(scale * p)
        AS.append(scale * Ap)
        P.append(p)
        curv.append(c)

        rel = np.linalg.norm(r) / r0_norm
        if not np.isfinite(rel):
            raise NumericalBreakdown("non-finite residual", i)
        if rel < config.tol or rel == 0.0:
            status = CGStatus.CONVERGED
            break
        z = M_inv(r)
        rz_new = r @ z
        p = -z + (rz_new / rz) * p
        rz = rz_new

    q = len(S)
    block = SamplingBlock(np.column_stack(S), np.column_stack(AS), np.array(curv))
    return CGResult(block, y, status, q, float(rel), applications, np.column_stack(P))
