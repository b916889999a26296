"""Reference methods: dense BFGS, L-BFGS and unpreconditioned Newton-CG.

The solvers themselves run through :func:`qunac.driver.minimize`; this module
holds the secant-pair machinery and convenience entry points.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .linalg import symmetrize
from .preconditioners import CurvatureError

SECANT_RTOL = 1e-12


@dataclass(frozen=True)
class SecantPair:
    delta: np.ndarray
    gamma: np.ndarray

    @property
    def curvature(self) -> float:
        return float(self.gamma @ self.delta)

    def acceptable(self, rtol: float = SECANT_RTOL) -> bool:
        return self.curvature > rtol * np.linalg.norm(self.gamma) * np.linalg.norm(self.delta)


def bfgs_update(H, pair: SecantPair) -> np.ndarray:
    """Textbook inverse BFGS update; raises :class:`CurvatureError` if ``gamma^T delta <= 0``."""
    H = np.asarray(H, dtype=float)
    d, g = pair.delta, pair.gamma
    sy = pair.curvature
    if not sy > 0:
        raise CurvatureError(f"gamma^T delta = {sy:.3e}; skip the update")
    rho = 1.0 / sy
    Hg = H @ g
    # (I - rho d g^T) H (I - rho g d^T) + rho d d^T, expanded
    new = H - rho * (np.outer(d, Hg) + np.outer(Hg, d)) + (rho * rho * (g @ Hg) + rho) * np.outer(d, d)
    return symmetrize(new)


def lbfgs_method(problem, config=None):
    from .driver import Method, NewtonConfig, minimize

    config = NewtonConfig() if config is None else config
    return minimize(problem, replace(config, method=Method.LBFGS))


def newton_cg_method(problem, config=None):
    from .driver import Method, NewtonConfig, minimize

    config = NewtonConfig() if config is None else config
    return minimize(problem, replace(config, method=Method.NEWTON_CG))


def bfgs_method(problem, config=None):
    from .driver import Method, NewtonConfig, minimize

    config = NewtonConfig() if config is None else config
    return minimize(problem, replace(config, method=Method.BFGS))
