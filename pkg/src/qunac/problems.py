"""Test problems exposing value, gradient and Hessian-vector products."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .libsvm import SvmDataset

Vector = np.ndarray


@dataclass(frozen=True)
class ProblemInstance:
    name: str
    start: Vector
    value: Callable[[Vector], float]
    gradient: Callable[[Vector], Vector]
    hess_vec: Callable[[Vector, Vector], Vector]
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.start.shape[0]


def quadratic(Q, b=None, start=None, name="quadratic") -> ProblemInstance:
    """``f(x) = x^T Q x / 2 - b^T x`` with dense symmetric ``Q``."""
    Q = np.asarray(Q, dtype=float)
    n = Q.shape[0]
    b = np.zeros(n) if b is None else np.asarray(b, dtype=float)
    start = np.ones(n) if start is None else np.asarray(start, dtype=float)
    return ProblemInstance(
        name=name,
        start=start,
        value=lambda x: 0.5 * x @ (Q @ x) - b @ x,
        gradient=lambda x: Q @ x - b,
        hess_vec=lambda x, v: Q @ v,
        meta={"Q": Q, "b": b},
    )


def hilbert_matrix(n: int) -> np.ndarray:
    i = np.arange(1, n + 1)
    return 2.0 / (i[:, None] + i[None, :] - 1)


def hilbert_quadratic(n: int) -> ProblemInstance:
    if n < 1:
        raise ValueError("n must be positive")
    return quadratic(hilbert_matrix(n), None, np.ones(n), name=f"hilbert:{n}")


def tridiag_matrix(n: int) -> np.ndarray:
    return 4.0 * np.eye(n) - 2.0 * np.eye(n, k=1) - 2.0 * np.eye(n, k=-1)


def tridiag_quadratic(n: int) -> ProblemInstance:
    """Diagonal 4, off-diagonals -2, ``b = e1``, started from all ones."""
    if n < 2:
        raise ValueError("n must be at least 2")
    Q = tridiag_matrix(n)
    if np.linalg.eigvalsh(Q)[0] <= 0:
        raise ArithmeticError("tridiagonal matrix is not positive definite")
    b = np.zeros(n)
    b[0] = 1.0
    return quadratic(Q, b, np.ones(n), name=f"tridiag:{n}")


def ext_rosenbrock(n: int) -> ProblemInstance:
    """Extended Rosenbrock: ``sum 100 (x_{2i} - x_{2i-1}^2)^2 + (1 - x_{2i-1})^2``."""
    if n < 2 or n % 2:
        raise ValueError(f"extended Rosenbrock needs an even dimension, got {n}")

    def value(x):
        a, b = x[0::2], x[1::2]
        return float(np.sum(100.0 * (b - a * a) ** 2 + (1.0 - a) ** 2))

    def gradient(x):
        a, b = x[0::2], x[1::2]
        t = b - a * a
        g = np.empty_like(x, dtype=float)
        g[0::2] = -400.0 * a * t - 2.0 * (1.0 - a)
        g[1::2] = 200.0 * t
        return g

    def hess_vec(x, v):
        a, b = x[0::2], x[1::2]
        va, vb = v[0::2], v[1::2]
        haa = 1200.0 * a * a - 400.0 * b + 2.0
        hab = -400.0 * a
        out = np.empty_like(v, dtype=float)
        out[0::2] = haa * va + hab * vb
        out[1::2] = hab * va + 200.0 * vb
        return out

    start = np.tile([-1.2, 1.0], n // 2)
    return ProblemInstance(f"rosenbrock:{n}", start, value, gradient, hess_vec)


def ext_powell(n: int) -> ProblemInstance:
    """Extended Powell singular function on blocks of four variables."""
    if n < 4 or n % 4:
        raise ValueError(f"extended Powell needs a dimension divisible by 4, got {n}")

    def parts(x):
        return x[0::4], x[1::4], x[2::4], x[3::4]

    def value(x):
        x1, x2, x3, x4 = parts(x)
        return float(np.sum((x1 + 10 * x2) ** 2 + 5 * (x3 - x4) ** 2 + (x2 - 2 * x3) ** 4 + 10 * (x1 - x4) ** 4))

    def gradient(x):
        x1, x2, x3, x4 = parts(x)
        s, d, u, w = x1 + 10 * x2, x3 - x4, x2 - 2 * x3, x1 - x4
        g = np.empty_like(x, dtype=float)
        g[0::4] = 2 * s + 40 * w ** 3
        g[1::4] = 20 * s + 4 * u ** 3
        g[2::4] = 10 * d - 8 * u ** 3
        g[3::4] = -10 * d - 40 * w ** 3
        return g

    def hess_vec(x, v):
        x1, x2, x3, x4 = parts(x)
        v1, v2, v3, v4 = parts(v)
        u2 = (x2 - 2 * x3) ** 2
        w2 = (x1 - x4) ** 2
        out = np.empty_like(v, dtype=float)
        out[0::4] = (2 + 120 * w2) * v1 + 20 * v2 - 120 * w2 * v4
        out[1::4] = 20 * v1 + (200 + 12 * u2) * v2 - 24 * u2 * v3
        out[2::4] = -24 * u2 * v2 + (10 + 48 * u2) * v3 - 10 * v4
        out[3::4] = -120 * w2 * v1 - 10 * v3 + (10 + 120 * w2) * v4
        return out

    start = np.tile([3.0, -1.0, 0.0, 1.0], n // 4)
    return ProblemInstance(f"powell:{n}", start, value, gradient, hess_vec)


@dataclass(frozen=True)
class L2:
    def value(self, w):
        return float(w @ w)

    def gradient(self, w):
        return 2.0 * w

    def hess_diag(self, w):
        return np.full_like(w, 2.0, dtype=float)


@dataclass(frozen=True)
class PseudoHuber:
    """Smooth l1 surrogate ``mu * sum(sqrt(1 + w^2 / mu^2) - 1)``."""

    mu: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.mu < 1.0:
            raise ValueError(f"mu must lie in (0, 1), got {self.mu}")

    def _root(self, w):
        return np.sqrt(1.0 + (w / self.mu) ** 2)

    def value(self, w):
        # mu * (sqrt(1 + t^2) - 1) written to avoid cancellation for small t
        t2 = (w / self.mu) ** 2
        return float(self.mu * np.sum(t2 / (self._root(w) + 1.0)))

    def gradient(self, w):
        return w / (self.mu * self._root(w))

    def hess_diag(self, w):
        return self._root(w) ** -3 / self.mu


def logistic_svm(data: SvmDataset, reg=None, lam: float = 1.0) -> ProblemInstance:
    """Regularized logistic loss ``sum log(1 + exp(-y_i <x_i, w>)) + lam * R(w)``."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    reg = L2() if reg is None else reg
    X = sp.csr_matrix(data.X)
    XT = X.T.tocsr()
    y = np.asarray(data.y, dtype=float)
    cache = {}

    def margins(w):
        return y * (X @ w)

    def curvature(w):
        key = w.tobytes()
        if cache.get("key") != key:
            sig = expit(margins(w))
            cache.update(key=key, D=sig * (1.0 - sig))
        return cache["D"]

    def value(w):
        return float(np.sum(np.logaddexp(0.0, -margins(w))) + lam * reg.value(w))

    def gradient(w):
        # d/dt log(1 + exp(-t)) = -(1 - sigma(t))
        return XT @ (-y * expit(-margins(w))) + lam * reg.gradient(w)

    def hess_vec(w, v):
        return XT @ (curvature(w) * (X @ v)) + lam * reg.hess_diag(w) * v

    label = "l2" if isinstance(reg, L2) else f"huber{reg.mu:g}"
    return ProblemInstance(f"svm[{data.source}|{label}|{lam:g}]", np.zeros(X.shape[1]), value, gradient, hess_vec,
                           meta={"data": data, "reg": reg, "lam": lam})


BUILTIN = {
    "hilbert": hilbert_quadratic,
    "tridiag": tridiag_quadratic,
    "rosenbrock": ext_rosenbrock,
    "powell": ext_powell,
}


def builtin_problem(spec: str) -> ProblemInstance:
    """Build a problem from ``name:size``, e.g. ``hilbert:8``."""
    name, _, size = spec.partition(":")
    if name not in BUILTIN:
        raise ValueError(f"unknown problem {name!r}; choose from {', '.join(sorted(BUILTIN))}")
    try:
        n = int(size)
    except ValueError:
        raise ValueError(f"problem spec {spec!r} needs an integer size, e.g. {name}:10") from None
    return BUILTIN[name](n)


@dataclass
class DerivativeReport:
    gradient_error: float
    hess_vec_error: float
    linearity_error: float


def _rel(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1.0))


def check_derivatives(p: ProblemInstance, x, h: float = 1e-5, n_dirs: int = 3, rng=None) -> DerivativeReport:
    """Central differences of ``value`` and ``gradient`` against the analytic ones.

    Errors are relative to ``max(||analytic||, 1)``.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    rng = np.random.default_rng(rng)
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    g = p.gradient(x)
    fd = np.empty(n)
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        fd[i] = (p.value(x + e) - p.value(x - e)) / (2 * h)
    grad_err = _rel(fd, g)

    hv_err = lin_err = 0.0
    for _ in range(n_dirs):
        v = rng.standard_normal(n)
        v /= np.linalg.norm(v)
        hv = p.hess_vec(x, v)
        fd_hv = (p.gradient(x + h * v) - p.gradient(x - h * v)) / (2 * h)
        hv_err = max(hv_err, _rel(fd_hv, hv))
        a = rng.uniform(-3, 3)
        lin_err = max(lin_err, _rel(p.hess_vec(x, a * v), a * hv))
    return DerivativeReport(grad_err, hv_err, lin_err)
