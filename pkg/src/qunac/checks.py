"""Randomized property checks shared by the test suite and ``qunac selftest``.

Each check draws its own instances from a seeded generator and returns a
:class:`CheckResult` with the worst observed error.  The helpers for random
instances and the dense least-change oracle live here too so tests can reuse
them.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as sla

from .baselines import SecantPair, bfgs_update
from .libsvm import synthetic_dataset
from .linalg import gram, gram_solve_factor, proj_apply
from .pcg import CGConfig, pcg_collect
from .preconditioners import LimitedMemoryPrecond, ScaledIdentity, full_memory_update, lqunac_apply, two_loop_apply
from .problems import (
    PseudoHuber,
    check_derivatives,
    ext_powell,
    ext_rosenbrock,
    hilbert_quadratic,
    logistic_svm,
    tridiag_quadratic,
)
from .updates import (
    RankDeficientSampling,
    family_blend,
    least_change_update,
    qunac_direct,
    qunac_direct_inverse,
    qunac_inverse,
)


def rel_fro(A, B) -> float:
    """``||A - B||_F / max(||B||_F, tiny)``."""
    den = max(np.linalg.norm(B), np.finfo(float).tiny)
    return float(np.linalg.norm(np.asarray(A) - np.asarray(B)) / den)


def random_spd(rng, n: int, cond: float | None = None) -> np.ndarray:
    """Random SPD matrix; with ``cond`` the eigenvalues are log-spaced in ``[1, cond]``."""
    U, _ = np.linalg.qr(rng.standard_normal((n, n)))
    if cond is None:
        lam = rng.uniform(0.5, 5.0, n)
    else:
        lam = np.logspace(0.0, np.log10(cond), n)
        rng.shuffle(lam)
    return (U * lam) @ U.T


def conjugate_columns(rng, Q, q: int) -> np.ndarray:
    """``q`` random columns made mutually ``Q``-orthogonal (unit ``Q``-norm)."""
    S = rng.standard_normal((Q.shape[0], q))
    L = np.linalg.cholesky(S.T @ Q @ S)
    return sla.solve_triangular(L, S.T, lower=True).T


def dfp_inverse(H, delta, gamma) -> np.ndarray:
    """Textbook inverse DFP: ``H + d d^T / g^T d - H g g^T H / g^T H g``."""
    Hg = H @ gamma
    return H + np.outer(delta, delta) / (gamma @ delta) - np.outer(Hg, Hg) / (gamma @ Hg)


def dfp_direct(B, delta, gamma) -> np.ndarray:
    """Textbook direct DFP on the Hessian estimate ``B``."""
    rho = 1.0 / (gamma @ delta)
    V = np.eye(B.shape[0]) - rho * np.outer(gamma, delta)
    return V @ B @ V.T + rho * np.outer(gamma, gamma)


def _sym_basis(n: int) -> list[np.ndarray]:
    basis = []
    for i in range(n):
        for j in range(i, n):
            E = np.zeros((n, n))
            E[i, j] = E[j, i] = 1.0
            basis.append(E)
    return basis


def least_change_oracle(G, Q, W, S) -> np.ndarray:
    """Dense solve of ``min ||W^{-1/2} E W^{-1/2}||_F`` over symmetric ``E`` with ``(G + E) S = Q S``.

    ``E`` is parametrized over the symmetric basis; the constraint is
    eliminated with a null-space basis and the rest solved by least squares.
    """
    n = G.shape[0]
    basis = _sym_basis(n)
    Wm = sla.sqrtm(np.linalg.inv(W)).real
    A = np.column_stack([(Wm @ E @ Wm).ravel() for E in basis])
    C = np.column_stack([(E @ S).ravel() for E in basis])
    r = ((Q - G) @ S).ravel()
    e0 = np.linalg.lstsq(C, r, rcond=None)[0]
    N = sla.null_space(C)
    if N.shape[1]:
        z = np.linalg.lstsq(A @ N, -A @ e0, rcond=None)[0]
        e0 = e0 + N @ z
    return sum(c * E for c, E in zip(e0, basis))


def feasible_competitor(rng, E, S) -> np.ndarray:
    """``E`` plus a random symmetric perturbation that annihilates ``span(S)``."""
    n = E.shape[0]
    Qs, _ = np.linalg.qr(S)
    Pc = np.eye(n) - Qs @ Qs.T
    M = rng.standard_normal((n, n))
    return E + Pc @ (M + M.T) @ Pc


def weighted_norm(E, W) -> float:
    Wm = sla.sqrtm(np.linalg.inv(W)).real
    return float(np.linalg.norm(Wm @ E @ Wm))


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    worst: float
    tol: float
    detail: str = ""

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return f"{tag}  {self.name:<34} worst={self.worst:.3e} tol={self.tol:.0e}{extra}"


def _result(name, errors, tol, detail=""):
    worst = float(max(errors)) if len(errors) else 0.0
    return CheckResult(name, bool(worst <= tol), worst, tol, detail)


def check_projection(rng, trials=20):
    errs = []
    for _ in range(trials):
        n = int(rng.integers(2, 31))
        q = int(rng.integers(1, min(n, 8) + 1))
        S = rng.standard_normal((n, q))
        W = random_spd(rng, n)
        factor = gram_solve_factor(gram(S, W @ S))
        PW = np.column_stack([proj_apply(S, factor, W @ e) for e in np.eye(n)])
        errs.append(rel_fro(PW @ PW, PW))
    return _result("projection idempotence", errs, 1e-10)


def check_action_constraints(rng, trials=20):
    errs = []
    for _ in range(trials):
        n = int(rng.integers(2, 31))
        q = int(rng.integers(1, min(n, 8) + 1))
        Q = random_spd(rng, n)
        S = rng.standard_normal((n, q))
        QS = Q @ S
        G = random_spd(rng, n)
        errs.append(rel_fro(qunac_direct(G, S, QS).matrix @ S, QS))
        for lam in (0.0, 0.25, 0.5, 1.0):
            errs.append(rel_fro(family_blend(G, S, QS, lam).matrix @ QS, S))
    return _result("action constraints", errs, 1e-10)


def check_least_change(rng, trials=50, competitors=100):
    errs, beaten = [], 0
    for _ in range(trials):
        n = int(rng.integers(2, 11))
        q = int(rng.integers(1, min(n, 3) + 1))
        G = rng.standard_normal((n, n))
        G = G + G.T
        Q = rng.standard_normal((n, n))
        Q = Q + Q.T
        W = random_spd(rng, n)
        S = rng.standard_normal((n, q))
        E = least_change_update(G, S, Q @ S, W @ S).matrix - G
        errs.append(rel_fro(E, least_change_oracle(G, Q, W, S)))
        base = weighted_norm(E, W)
        for _ in range(competitors):
            if weighted_norm(feasible_competitor(rng, E, S), W) < base - 1e-9:
                beaten += 1
    if beaten:
        return CheckResult("least-change optimality", False, float(max(errs)), 1e-7, f"{beaten} competitors won")
    return _result("least-change optimality", errs, 1e-7)


def check_single_column(rng, trials=100):
    errs = []
    for _ in range(trials):
        n = int(rng.integers(2, 16))
        Q = random_spd(rng, n)
        H = random_spd(rng, n)
        d = rng.standard_normal(n)
        g = Q @ d
        errs.append(rel_fro(qunac_inverse(H, d, g).matrix, bfgs_update(H, SecantPair(d, g))))
        errs.append(rel_fro(qunac_direct(H, d, g).matrix, dfp_direct(H, d, g)))
        errs.append(rel_fro(qunac_direct_inverse(H, d, g).matrix, dfp_inverse(H, d, g)))
    return _result("single-column BFGS/DFP", errs, 1e-12)


def check_unraveling(rng, trials=50, n=20, q=5):
    errs = []
    for _ in range(trials):
        Q = random_spd(rng, n)
        S = conjugate_columns(rng, Q, q)
        QS = Q @ S
        G = random_spd(rng, n)
        seq_d, seq_i = G, G
        for j in range(q):
            seq_d = qunac_direct(seq_d, S[:, j], QS[:, j]).matrix
            seq_i = bfgs_update(seq_i, SecantPair(S[:, j], QS[:, j]))
        errs.append(rel_fro(qunac_direct(G, S, QS).matrix, seq_d))
        errs.append(rel_fro(qunac_inverse(G, S, QS).matrix, seq_i))
    return _result("unraveling", errs, 1e-10)


def check_woodbury(rng, trials=50):
    errs = []
    for _ in range(trials):
        n = int(rng.integers(3, 13))
        q = int(rng.integers(1, min(n, 4) + 1))
        Q = random_spd(rng, n, cond=10.0 ** rng.uniform(0, 4))
        H = random_spd(rng, n, cond=10.0 ** rng.uniform(0, 2))
        S = rng.standard_normal((n, q))
        QS = Q @ S
        dense = np.linalg.inv(qunac_direct(np.linalg.inv(H), S, QS).matrix)
        errs.append(rel_fro(qunac_direct_inverse(H, S, QS).matrix, dense))
    return _result("Woodbury direct-inverse", errs, 1e-8)


def check_positive_definite(rng, chains=20, steps=10):
    """Returns the worst ratio ``margin_tol / lambda_min``; at most 1 means PD with margin."""
    ratios = []
    for _ in range(chains):
        n = int(rng.integers(3, 16))
        G = random_spd(rng, n)
        H = random_spd(rng, n)
        for _ in range(steps):
            Q = random_spd(rng, n)
            S = rng.standard_normal((n, int(rng.integers(1, min(n, 4) + 1))))
            G = qunac_direct(G, S, Q @ S).matrix
            H = qunac_inverse(H, S, Q @ S).matrix
            for M in (G, H):
                lo = np.linalg.eigvalsh(M)[0]
                margin = 1e-12 * np.linalg.norm(M, 2)
                ratios.append(np.inf if lo <= 0 else margin / lo)
    return _result("positive definiteness", ratios, 1.0, "ratio of required margin to min eigenvalue")


def check_hereditary(rng, trials=10):
    errs = []
    for _ in range(trials):
        n = int(rng.integers(2, 17))
        Q = random_spd(rng, n)
        S = conjugate_columns(rng, Q, n)
        G = random_spd(rng, n)
        cuts = np.sort(rng.choice(np.arange(1, n), size=min(n - 1, 3), replace=False)) if n > 1 else []
        for blk in np.split(np.arange(n), cuts):
            G = qunac_direct(G, S[:, blk], Q @ S[:, blk]).matrix
        errs.append(rel_fro(G, Q))
    return _result("quadratic hereditary", errs, 1e-8)


def pcg_block(rng, n, max_q=None, tol=1e-2, cond=None):
    """PCG on a random SPD system.

    Conjugacy of the harvested directions degrades like ``eps / ||r||``, so
    the equivalence checks use the driver's forcing tolerance.
    """
    Q = random_spd(rng, n, cond=cond)
    res = pcg_collect(lambda v: Q @ v, None, rng.standard_normal(n), CGConfig(max_q or n, tol))
    return Q, res


def check_pcg(rng, trials=20):
    errs = []
    for _ in range(trials):
        n = int(rng.integers(2, 51))
        Q, res = pcg_block(rng, n, tol=1e-6)
        S, AS = res.sampling.S, res.sampling.action
        C = S.T @ Q @ S
        errs.append(np.max(np.abs(C - np.eye(res.sampling.q))))
        errs.append(rel_fro(AS, Q @ S))
    return _result("pcg conjugacy and action", errs, 1e-8)


def check_lqunac_two_loop(rng, trials=100):
    errs = []
    for _ in range(trials):
        n = int(rng.integers(2, 31))
        Q, res = pcg_block(rng, n, max_q=int(rng.integers(1, n + 1)))
        S, Sb = res.sampling.S, res.sampling.action
        H0 = ScaledIdentity(float(rng.uniform(0.1, 2.0)))
        v = rng.standard_normal(n)
        pairs = [(S[:, j], Sb[:, j]) for j in range(S.shape[1])]
        ref = two_loop_apply(H0, pairs, v, normalized=True)
        errs.append(rel_fro(lqunac_apply(LimitedMemoryPrecond(H0, ((S, Sb),)), v), ref))
    return _result("lqunac vs two-loop", errs, 1e-12)


def check_operator_matrix(rng, trials=20):
    errs = []
    for _ in range(trials):
        n = int(rng.integers(2, 31))
        Q, res = pcg_block(rng, n, max_q=int(rng.integers(1, n + 1)))
        S, Sb = res.sampling.S, res.sampling.action
        c = float(rng.uniform(0.1, 2.0))
        pre = LimitedMemoryPrecond(ScaledIdentity(c), ((S, Sb),))
        dense = lqunac_apply(pre, np.eye(n))
        H = full_memory_update(c * np.eye(n), S, Sb)
        errs.append(rel_fro(dense, H))
        errs.append(rel_fro(pre(Sb), S))
    return _result("limited vs full memory", errs, 1e-10)


def derivative_problems(rng):
    data = synthetic_dataset(m=40, n=6, seed=int(rng.integers(1 << 30)))
    return [
        hilbert_quadratic(6),
        tridiag_quadratic(8),
        ext_rosenbrock(8),
        ext_powell(8),
        logistic_svm(data),
        logistic_svm(data, PseudoHuber(0.1)),
    ]


def check_derivatives_all(rng, points=6):
    errs = []
    for p in derivative_problems(rng):
        xs = [p.start] + [p.start + rng.standard_normal(p.dim) for _ in range(points - 1)]
        for x in xs:
            rep = check_derivatives(p, x, h=1e-5, rng=rng)
            errs += [rep.gradient_error, rep.hess_vec_error]
    return _result("derivative checks", errs, 1e-5)


def check_rank_deficient(rng):
    """Dependent sampling columns must raise when trimming is disabled and be trimmed otherwise."""
    n = 6
    Q = random_spd(rng, n)
    s = rng.standard_normal(n)
    S = np.column_stack([s, 2.0 * s])
    try:
        qunac_direct(np.eye(n), S, Q @ S, trim=False)
    except RankDeficientSampling:
        raised = True
    else:
        raised = False
    kept = qunac_direct(np.eye(n), S, Q @ S).q
    ok = raised and kept == 1
    return CheckResult("rank-deficient sampling", ok, 0.0 if ok else 1.0, 0.0,
                       "expected failure handled" if ok else f"raised={raised} kept={kept}")


CHECKS: dict[str, Callable] = {
    "projection": check_projection,
    "action": check_action_constraints,
    "least-change": check_least_change,
    "single-column": check_single_column,
    "unraveling": check_unraveling,
    "woodbury": check_woodbury,
    "positive-definite": check_positive_definite,
    "hereditary": check_hereditary,
    "pcg": check_pcg,
    "lqunac-two-loop": check_lqunac_two_loop,
    "limited-vs-full": check_operator_matrix,
    "derivatives": check_derivatives_all,
    "rank-deficient": check_rank_deficient,
}


def run_checks(seed: int = 0, names=None) -> list[CheckResult]:
    results = []
    for name in names or CHECKS:
        rng = np.random.default_rng([seed, list(CHECKS).index(name)])
        try:
            results.append(CHECKS[name](rng))
        except Exception as exc:  # a crash is a failed property, not an aborted run
            results.append(CheckResult(name, False, float("nan"), 0.0, f"{type(exc).__name__}: {exc}"))
    return results
