"""Successive convex approximation (SCA-I and SCA-II).

The rate of pair p is log2(a_p.y + t_p) - log2(d_p.y + t_p) with
a_p = h_p e_p + d_p. The subtracted concave term is replaced by its tangent
at y0, which leaves a concave program that a log-barrier Newton method
solves exactly. SCA-I keeps every admissible pair and enforces all SIC rows;
SCA-II first keeps the strongest user per beam.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .channel import EffectiveGains
from .reformulation import (LN2, ActiveSet, Allocation, ProblemData, SolverReport,
                            build_problem, check_feasible, objective, recover_assignment,
                            zero_allocation)

logger = logging.getLogger(__name__)


@dataclass
class SCAConfig:
    variant: str = "II"
    outer_tol: float = 1e-4
    max_outer: int = 50
    barrier_tol: float = 1e-9
    barrier_mu: float = 10.0
    newton_tol: float = 1e-10
    max_newton: int = 100
    warm_start: bool = False

    def __post_init__(self):
        self.variant = str(self.variant).upper()
        if self.variant not in ("I", "II"):
            raise ValueError(f"variant must be 'I' or 'II', got {self.variant!r}")
        if not self.outer_tol > 0:
            raise ValueError("outer_tol must be > 0")
        if self.max_outer < 1:
            raise ValueError("max_outer must be >= 1")


def schedule_max_gain(g: EffectiveGains, s: ActiveSet) -> ActiveSet:
    """Keep the admitted user with the largest hS on each beam (lowest j on ties)."""
    kept = []
    for k in range(s.K):
        users = [j for j, kk in s.pairs if kk == k]
        if users:
            kept.append((max(users, key=lambda j: (g.hS[j, k], -j)), k))
    return ActiveSet(tuple(kept), s.M, s.K)


def affine_system(pd: ProblemData) -> tuple[np.ndarray, np.ndarray]:
    """QoS, guard, every SIC row and the budget as A y <= b (sign dropped)."""
    A = np.vstack([pd.E, pd.guard_E, pd.F, np.ones((1, pd.n))])
    b = np.concatenate([-pd.cvals, -pd.guard_c, -pd.bvals, [pd.P_max]])
    return A, b


@dataclass
class SCASubproblem:
    """max  sum log2(a_p.y + t_p) - slope.y + const  s.t.  A y <= b, y >= 0."""

    y0: np.ndarray
    a: np.ndarray
    t: np.ndarray
    slope: np.ndarray
    const: float
    A: np.ndarray
    b: np.ndarray

    def value(self, y) -> float:
        y = np.asarray(y, dtype=float)
        return float(np.sum(np.log2(self.a @ y + self.t)) - self.slope @ y + self.const)


def build_subproblem(pd: ProblemData, y0) -> SCASubproblem:
    y0 = np.asarray(y0, dtype=float)
    a = np.diag(pd.h) + pd.D
    den0 = pd.D @ y0 + pd.t
    slope = (pd.D / (LN2 * den0)[:, None]).sum(axis=0)
    const = float(-np.sum(np.log2(den0)) + slope @ y0)
    A, b = affine_system(pd)
    return SCASubproblem(y0, a, pd.t.copy(), slope, const, A, b)


@dataclass
class InnerResult:
    y: np.ndarray
    status: str
    newton_steps: int


def _interior_start(A: np.ndarray, b: np.ndarray, n: int):
    """Free variables and a strictly interior point of {y >= 0, A y <= b}.

    Every row has nonnegative coefficients and right-hand side, so a row with
    b_r = 0 pins the variables it touches to zero and a small uniform point
    is strictly inside everything else.
    """
    scale = np.max(np.abs(A), axis=1)
    scale[scale == 0] = 1.0
    An, bn = A / scale[:, None], b / scale
    tight = bn <= 1e-12
    free = ~np.any(An[tight] > 0, axis=0) if tight.any() else np.ones(n, dtype=bool)
    rows = ~tight & np.any(An[:, free] > 0, axis=1)
    if not free.any():
        return free, rows, np.zeros(0)
    load = An[rows][:, free].sum(axis=1)
    theta = 0.5 * np.min(bn[rows] / load) if rows.any() else 1.0
    return free, rows, np.full(int(free.sum()), theta)


def solve_subproblem(sub: SCASubproblem, cfg: SCAConfig | None = None) -> InnerResult:
    """Log-barrier method with damped Newton steps."""
    cfg = cfg or SCAConfig()
    n = len(sub.y0)
    y_full = np.zeros(n)
    if n == 0:
        return InnerResult(y_full, "ok", 0)
    free, rows, y = _interior_start(sub.A, sub.b, n)
    if y.size == 0:
        return InnerResult(y_full, "ok", 0)
    a = sub.a[:, free]
    # scale the log arguments so that t is O(1)
    A = np.vstack([sub.A[rows][:, free], -np.eye(y.size)])
    b = np.concatenate([sub.b[rows], np.zeros(y.size)])
    rs = np.max(np.abs(A), axis=1)
    A, b = A / rs[:, None], b / rs
    slope = sub.slope[free]
    m = len(b)

    def phi(v):
        return np.sum(np.log(a @ v + sub.t)) / LN2 - slope @ v

    tau = 1.0
    steps = 0
    status = "ok"
    while True:
        for _ in range(cfg.max_newton):
            u = a @ y + sub.t
            s = b - A @ y
            grad = tau * ((a / u[:, None]).sum(axis=0) / LN2 - slope) - (A / s[:, None]).sum(axis=0)
            au = a / u[:, None]
            As = A / s[:, None]
            hess = -tau * (au.T @ au) / LN2 - As.T @ As
            try:
                step = np.linalg.solve(-hess, grad)
            except np.linalg.LinAlgError:
                status = "stalled"
                break
            dec = float(grad @ step)
            if not np.isfinite(dec):
                status = "stalled"
                break
            if dec / 2 <= cfg.newton_tol:
                break
            steps += 1
            f0 = tau * phi(y) + np.sum(np.log(s))
            lr = 1.0
            As_step = A @ step
            neg = As_step > 0
            if neg.any():
                lr = min(1.0, 0.99 * float(np.min(s[neg] / As_step[neg])))
            while lr > 1e-14:
                y_try = y + lr * step
                s_try = b - A @ y_try
                if np.all(s_try > 0):
                    f1 = tau * phi(y_try) + np.sum(np.log(s_try))
                    if f1 >= f0 + 0.25 * lr * dec:
                        break
                lr *= 0.5
            else:
                status = "stalled"
                break
            y = y_try
        if status != "ok" or m / tau < cfg.barrier_tol:
            break
        tau *= cfg.barrier_mu
    y_full[free] = y
    return InnerResult(y_full, status, steps)


def _warm_point(A: np.ndarray, b: np.ndarray, n: int, P_max: float) -> np.ndarray:
    """Uniform split of the budget, scaled back along the ray until feasible."""
    y = np.full(n, P_max / n)
    lo, hi = 0.0, 1.0
    if np.all(A @ y <= b):
        return y
    for _ in range(60):
        mid = (lo + hi) / 2
        lo, hi = (mid, hi) if np.all(A @ (mid * y) <= b) else (lo, mid)
    return lo * y


@dataclass
class SCAResult:
    allocation: Allocation
    report: SolverReport
    problem: ProblemData
    trace: list[float] = field(default_factory=list)


def run_sca(pd: ProblemData, cfg: SCAConfig | None = None) -> SCAResult:
    """Iterate tangent models from y0 = 0 until the true objective settles."""
    cfg = cfg or SCAConfig()
    t0 = time.perf_counter()
    name = f"sca{len(cfg.variant)}"
    work = pd
    if cfg.variant == "II" and pd.gains is not None and pd.n:
        work = build_problem(pd.gains, schedule_max_gain(pd.gains, pd.active), pd.xi)
    if work.n == 0:
        alloc = recover_assignment(work, np.zeros(0)) if work.gains is not None \
            else zero_allocation(pd.active.M, pd.active.K)
        rep = SolverReport(name, 0.0, 0, time.perf_counter() - t0, 0.0, "ok", [0.0])
        return SCAResult(alloc, rep, work, [0.0])
    A, b = affine_system(work)
    y = _warm_point(A, b, work.n, work.P_max) if cfg.warm_start else np.zeros(work.n)
    val = objective(work, y)
    trace = [val]
    status = "ok"
    it = 0
    while it < cfg.max_outer:
        it += 1
        inner = solve_subproblem(build_subproblem(work, y), cfg)
        new_val = objective(work, inner.y)
        if inner.status != "ok":
            status = inner.status
        if new_val < val - 1e-8:
            # the tangent model guarantees ascent; a drop means the inner
            # solve was inaccurate, so keep the previous iterate
            logger.warning("SCA ascent violated: %.3e -> %.3e", val, new_val)
            status = "stalled"
            break
        y, change, val = inner.y, new_val - val, new_val
        trace.append(val)
        if abs(change) < cfg.outer_tol or status != "ok":
            break
    alloc = recover_assignment(work, y)
    resid = check_feasible(work, y).max_violation
    rep = SolverReport(name, alloc.sum_rate, it, time.perf_counter() - t0, resid, status, trace)
    return SCAResult(alloc, rep, work, trace)


def write_trace(result: SCAResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "objective"])
        for i, v in enumerate(result.trace):
            w.writerow([i, repr(float(v))])
