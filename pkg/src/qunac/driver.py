"""Outer Newton loop with backtracking line search.

All five methods share the loop; they differ only in how the next search
direction is produced after a step:

* ``inverse-qunac`` / ``inverse-lqunac``: PCG preconditioned by the current
  inverse estimate, whose conjugate directions then update the estimate
  (explicit matrix or limited-memory operator).
* ``newton-cg``: the same PCG loop with no preconditioner.
* ``bfgs`` / ``lbfgs``: secant updates from consecutive iterates.
"""
from __future__ import annotations

import enum
import logging
import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .baselines import SecantPair, bfgs_update
from .pcg import CGConfig, CGStatus, NumericalBreakdown, pcg_collect, pcg_tolerance
from .preconditioners import (
    LimitedMemoryPrecond,
    ScaledIdentity,
    conjugate_normalize,
    full_memory_update,
    normalization_error,
    two_loop_apply,
)
from .updates import RankDeficientSampling

log = logging.getLogger(__name__)

RENORMALIZE_TOL = 1e-8


class Method(str, enum.Enum):
    INVERSE_QUNAC = "inverse-qunac"
    INVERSE_LQUNAC = "inverse-lqunac"
    NEWTON_CG = "newton-cg"
    BFGS = "bfgs"
    LBFGS = "lbfgs"


class StopReason(str, enum.Enum):
    CONVERGED = "converged"
    SMALL_STEP = "small-step"
    TIMEOUT = "timeout"
    MAX_ITERATIONS = "max-iterations"
    NUMERICAL_BREAKDOWN = "numerical-breakdown"


class SmallStep(Exception):
    def __init__(self, step: float):
        self.step = step
        super().__init__(f"line search step fell to {step:.3e}")


@dataclass(frozen=True)
class NewtonConfig:
    method: Method = Method.INVERSE_QUNAC
    eps: float = 1e-8
    max_q: int = 20
    c1: float = 1e-4
    backtrack_factor: float = 0.5
    max_backtracks: int = 60
    max_time_seconds: float | None = None
    max_outer_iterations: int | None = None
    small_step: float = 1e-14
    reset_enabled: bool = False
    memory: int | None = None  # L-BFGS pairs; defaults to max_q
    memory_blocks: int = 1  # blocks kept by the limited-memory preconditioner
    cg_tol: float | None = None  # fixed forcing term instead of min(0.01, sqrt(||g||))
    record_blocks: bool = False

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if not 0 < self.c1 < 1:
            raise ValueError("c1 must lie in (0, 1)")
        if not 0 < self.backtrack_factor < 1:
            raise ValueError("backtrack_factor must lie in (0, 1)")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.max_q < 1:
            raise ValueError("max_q must be at least 1")


@dataclass(frozen=True)
class IterationRecord:
    k: int
    f: float
    gnorm: float
    rel_gnorm: float
    q: int
    step: float
    cum_hv: int
    seconds: float
    events: tuple = ()


@dataclass
class SolveReport:
    x: np.ndarray
    stop_reason: StopReason
    trace: list
    message: str = ""
    converged_by: str | None = None
    blocks: list = field(default_factory=list, repr=False)

    @property
    def f(self) -> float:
        return self.trace[-1].f

    @property
    def rel_gnorm(self) -> float:
        return self.trace[-1].rel_gnorm

    @property
    def outer_iterations(self) -> int:
        return self.trace[-1].k

    @property
    def total_inner(self) -> int:
        return sum(r.q for r in self.trace)

    @property
    def seconds(self) -> float:
        return self.trace[-1].seconds

    def events(self) -> set:
        return {e for r in self.trace for e in r.events}


def initial_scaling(grad0, H_op) -> float:
    """``g^T g / g^T He g``; falls back to 1 when the curvature is not positive."""
    g = np.asarray(grad0, dtype=float)
    num = g @ g
    den = g @ H_op(g)
    if not (den > 0 and np.isfinite(den) and num > 0):
        return 1.0
    return float(num / den)


def descent_check(d, g, eps: float) -> bool:
    """True iff the cosine between ``d`` and ``-g`` exceeds ``eps``."""
    nd, ng = np.linalg.norm(d), np.linalg.norm(g)
    if nd == 0 or ng == 0:
        return False
    return bool(-(d @ g) / (nd * ng) > eps)


def line_search(f_eval, x, d, g, config: NewtonConfig = NewtonConfig(), fx=None):
    """Backtrack from ``a = 1`` until ``f(x + a d) - f(x) <= c1 a d^T g``.

    Raises :class:`SmallStep` when ``d`` is not a descent direction or the
    step drops below ``config.small_step``.
    """
    fx = f_eval(x) if fx is None else fx
    slope = d @ g
    if not slope < 0:
        raise SmallStep(0.0)
    a = 1.0
    for _ in range(config.max_backtracks + 1):
        if a < config.small_step:
            break
        x_new = x + a * d
        f_new = f_eval(x_new)
        if np.isfinite(f_new) and f_new - fx <= config.c1 * a * slope:
            return a, x_new, f_new
        a *= config.backtrack_factor
    raise SmallStep(a)


class _Counter:
    def __init__(self, problem):
        self.problem = problem
        self.count = 0

    def at(self, x):
        def op(v):
            self.count += 1
            return self.problem.hess_vec(x, v)

        return op


class _QuNac:
    def __init__(self, cfg, scale, hv, n, limited):
        self.cfg, self.hv, self.limited = cfg, hv, limited
        self.scale0 = scale
        self.blocks = []
        self.reset(n)

    def reset(self, n):
        if self.limited:
            self.H = LimitedMemoryPrecond(ScaledIdentity(self.scale0))
        else:
            self.H = self.scale0 * np.eye(n)

    def apply(self, v):
        return self.H(v) if self.limited else self.H @ v

    def first(self, x, g):
        return -self.scale0 * g, 0, []

    def next(self, x, g, pair, k):
        op = self.hv.at(x)
        tol = self.cfg.cg_tol if self.cfg.cg_tol is not None else pcg_tolerance(float(np.linalg.norm(g)))
        res = pcg_collect(op, self.apply, g, CGConfig(self.cfg.max_q, tol))
        events = []
        if res.status is CGStatus.NEGATIVE_CURVATURE_FIRST:
            return res.step, 0, ["neg-curvature-first", "estimate-repeated"]
        if res.status is CGStatus.NEGATIVE_CURVATURE_LATER:
            events.append("neg-curvature")
        block = res.sampling
        if block.q == 0:
            return res.step, 0, events + ["estimate-repeated"]
        if self.cfg.record_blocks:
            self.blocks.append((k, block.S.copy(), block.action.copy()))
        S, S_bar = block.S, block.action
        if normalization_error(S, S_bar) > RENORMALIZE_TOL:
            try:
                S, S_bar = conjugate_normalize(S, S_bar, RENORMALIZE_TOL)
            except RankDeficientSampling:
                return res.step, res.inner_iterations, events + ["estimate-repeated"]
            events.append("renormalized")
        if self.limited:
            base = ScaledIdentity(initial_scaling(g, op))
            self.H = LimitedMemoryPrecond(base, self.H.blocks).with_block(S, S_bar, keep=self.cfg.memory_blocks)
        else:
            self.H = full_memory_update(self.H, S, S_bar)
        return res.step, res.inner_iterations, events

    def reset_direction(self, x, g):
        self.reset(g.shape[0])
        return -self.scale0 * g


class _NewtonCG:
    def __init__(self, cfg, hv, n):
        self.cfg, self.hv, self.n = cfg, hv, n
        self.blocks = []

    def _solve(self, x, g):
        tol = self.cfg.cg_tol if self.cfg.cg_tol is not None else pcg_tolerance(float(np.linalg.norm(g)))
        res = pcg_collect(self.hv.at(x), None, g, CGConfig(self.n, tol))
        events = []
        if res.status is CGStatus.NEGATIVE_CURVATURE_FIRST:
            events.append("neg-curvature-first")
        elif res.status is CGStatus.NEGATIVE_CURVATURE_LATER:
            events.append("neg-curvature")
        return res.step, res.inner_iterations, events

    def first(self, x, g):
        return self._solve(x, g)

    def next(self, x, g, pair, k):
        return self._solve(x, g)

    def reset_direction(self, x, g):
        return -g


class _BFGS:
    def __init__(self, cfg, scale, n):
        self.scale0 = scale
        self.H = scale * np.eye(n)
        self.blocks = []

    def first(self, x, g):
        return -self.H @ g, 0, []

    def next(self, x, g, pair, k):
        events = []
        if pair.acceptable():
            self.H = bfgs_update(self.H, pair)
        else:
            events.append("update-skipped")
        return -self.H @ g, 0, events

    def reset_direction(self, x, g):
        self.H = self.scale0 * np.eye(g.shape[0])
        return -self.H @ g


class _LBFGS:
    def __init__(self, cfg, scale):
        self.scale0 = self.scale = scale
        self.pairs = deque(maxlen=cfg.memory or cfg.max_q)
        self.blocks = []

    def _direction(self, g):
        pairs = [(p.delta, p.gamma) for p in self.pairs]
        return -two_loop_apply(ScaledIdentity(self.scale), pairs, g, normalized=False)

    def first(self, x, g):
        return self._direction(g), 0, []

    def next(self, x, g, pair, k):
        events = []
        if pair.acceptable():
            self.pairs.append(pair)
            self.scale = pair.curvature / float(pair.gamma @ pair.gamma)
        else:
            events.append("update-skipped")
        return self._direction(g), 0, events

    def reset_direction(self, x, g):
        self.pairs.clear()
        self.scale = self.scale0
        return self._direction(g)


def minimize(problem, config: NewtonConfig | None = None) -> SolveReport:
    """Minimize ``problem`` from its start point with the configured method.

    Stops when ``||g|| / ||g0|| < eps`` (or ``||g|| < 1e-3 eps``), on a small
    line-search step, on timeout or on the outer-iteration cap.
    """
    cfg = NewtonConfig() if config is None else config
    t0 = time.perf_counter()
    hv = _Counter(problem)
    x = np.array(problem.start, dtype=float)
    n = x.shape[0]
    f = problem.value(x)
    g = problem.gradient(x)
    g0 = float(np.linalg.norm(g))
    trace = []

    def record(k, q, step, events):
        gn = float(np.linalg.norm(g))
        rel = gn / g0 if g0 > 0 else 0.0
        trace.append(IterationRecord(k, float(f), gn, rel, int(q), float(step), hv.count,
                                     time.perf_counter() - t0, tuple(events)))

    def done(reason, message="", by=None):
        return SolveReport(x, reason, trace, message, by, stepper.blocks if stepper else [])

    def converged():
        gn = np.linalg.norm(g)
        if g0 == 0 or gn / g0 < cfg.eps:
            return "relative"
        if gn < cfg.eps * 1e-3:
            return "absolute"
        return None

    stepper = None
    if not (np.isfinite(f) and np.all(np.isfinite(g))):
        record(0, 0, 0.0, [])
        return done(StopReason.NUMERICAL_BREAKDOWN, "non-finite value at start point")
    if g0 == 0:
        record(0, 0, 0.0, [])
        return done(StopReason.CONVERGED, "zero gradient at start point", "absolute")

    scale = initial_scaling(g, hv.at(x))
    method = cfg.method
    if method in (Method.INVERSE_QUNAC, Method.INVERSE_LQUNAC):
        stepper = _QuNac(cfg, scale, hv, n, limited=method is Method.INVERSE_LQUNAC)
    elif method is Method.NEWTON_CG:
        stepper = _NewtonCG(cfg, hv, n)
    elif method is Method.BFGS:
        stepper = _BFGS(cfg, scale, n)
    else:
        stepper = _LBFGS(cfg, scale)

    try:
        d, q, events = stepper.first(x, g)
    except NumericalBreakdown as exc:
        record(0, 0, 0.0, [])
        return done(StopReason.NUMERICAL_BREAKDOWN, str(exc))
    record(0, q, 0.0, events)

    k = 0
    while True:
        events = []
        if cfg.reset_enabled and not descent_check(d, g, cfg.eps):
            d = stepper.reset_direction(x, g)
            events.append("reset")
        try:
            a, x_new, f_new = line_search(problem.value, x, d, g, cfg, fx=f)
        except SmallStep as exc:
            log.debug("small step at k=%d: %s", k, exc)
            return done(StopReason.SMALL_STEP, str(exc))
        g_new = problem.gradient(x_new)
        if not np.all(np.isfinite(g_new)):
            return done(StopReason.NUMERICAL_BREAKDOWN, f"non-finite gradient at iteration {k + 1}")
        pair = SecantPair(x_new - x, g_new - g)
        x, f, g = x_new, f_new, g_new
        k += 1

        by = converged()
        if by:
            record(k, 0, a, events)
            return done(StopReason.CONVERGED, by=by)
        try:
            d, q, more = stepper.next(x, g, pair, k)
        except NumericalBreakdown as exc:
            record(k, 0, a, events)
            return done(StopReason.NUMERICAL_BREAKDOWN, str(exc))
        record(k, q, a, events + more)

        if cfg.max_time_seconds is not None and time.perf_counter() - t0 > cfg.max_time_seconds:
            return done(StopReason.TIMEOUT)
        if cfg.max_outer_iterations is not None and k >= cfg.max_outer_iterations:
            return done(StopReason.MAX_ITERATIONS)
