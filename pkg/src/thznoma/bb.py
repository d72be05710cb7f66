"""Branch and bound over the box of per-pair SINR targets.

The search minimises f(x) = -sum log2(1 + x_p) over the targets x that some
feasible power vector can meet. A box [x_min, x_max] is bounded by the
monotonicity of f: if x_min is attainable, f(x_max) <= min <= f(x_min).
"""

from __future__ import annotations

import csv
import heapq
import itertools
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .lp import (FractionalProgram, SingularSystem, base_constraints,
                 check_point_feasible, lemma1_solve, solve_fractional, _normalise)
from .reformulation import (Allocation, ProblemData, objective, recover_assignment,
                            zero_allocation)

logger = logging.getLogger(__name__)

PRUNE_GUARD = 1e-12
REDUCE_SLACK = 1e-9


def f_sum(x) -> float:
    return -float(np.sum(np.log2(1.0 + np.asarray(x, dtype=float))))


@dataclass
class Rectangle:
    x_min: np.ndarray
    x_max: np.ndarray
    lb: float = 0.0
    ub: float = 0.0
    witness_y: np.ndarray | None = None
    feasible: bool = False

    @property
    def volume(self) -> float:
        return float(np.prod(self.x_max - self.x_min))


@dataclass
class BBConfig:
    epsilon: float = 0.01
    N_itr: int = 200
    tighten: bool = True
    prune: bool = True
    reduce: bool = False

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if self.N_itr < 1:
            raise ValueError("N_itr must be >= 1")


@dataclass
class BBResult:
    best_y: Allocation
    value: float
    gap: float
    iterations: int
    bound_history: list[tuple[int, float, float, int]] = field(default_factory=list)
    pruned_count: int = 0
    lemma1_fallbacks: int = 0
    converged: bool = True
    wall_time: float = 0.0


@dataclass
class _Stats:
    fallbacks: int = 0


def evaluate_bounds(rect: Rectangle, pd: ProblemData):
    """Plain bounds: (f(x_max), f(x_min), witness) if x_min is attainable,
    otherwise (0, 0, None) so that the box is pruned once U < 0."""
    ok, y = check_point_feasible(pd, rect.x_min, return_witness=True)
    if not ok:
        return 0.0, 0.0, None
    return f_sum(rect.x_max), f_sum(rect.x_min), y


def _coordinate_system(pd: ProblemData, rect: Rectangle, p: int):
    """Inequality/equality rows for maximising SINR_p with the other SINRs
    pinned at x_min and SINR_p capped at x_max[p]."""
    n = pd.n
    x_min, x_max = rect.x_min, rect.x_max
    unit = np.eye(n)
    cap = pd.h[p] * unit[p] - x_max[p] * pd.D[p]
    sic = (x_min > 0) | (np.arange(n) == p)
    A0, b0 = base_constraints(pd, sic)
    A_ub = np.vstack([cap[None, :], A0, -unit])
    b_ub = np.concatenate([[x_max[p] * pd.t[p]], b0, np.zeros(n)])
    # a zero target pins y_i = 0; dropping its column keeps penalty-sized
    # coefficients from swamping the other rows after normalisation
    pinned = (x_min <= 0) & (np.arange(n) != p)
    A_ub[:, pinned] = 0.0
    A_ub, b_ub = _normalise(A_ub, b_ub)
    rest = [i for i in range(n) if i != p]
    A_eq = pd.h[rest, None] * unit[rest] - x_min[rest, None] * pd.D[rest]
    A_eq[:, pinned] = 0.0
    A_eq[pinned[rest], :] = unit[rest][pinned[rest]]
    b_eq = x_min[rest] * pd.t[rest]
    A_eq, b_eq = _normalise(A_eq, b_eq) if rest else (A_eq.reshape(0, n), b_eq)
    return A_ub, b_ub, A_eq, b_eq


def max_coordinate(pd: ProblemData, rect: Rectangle, p: int, stats: _Stats | None = None):
    """Largest SINR_p reachable inside the box with the other targets at
    x_min. Returns (value, y) or (None, None) when no such power exists."""
    A_ub, b_ub, A_eq, b_eq = _coordinate_system(pd, rect, p)
    num = pd.h[p] * np.eye(pd.n)[p]
    den = np.where(rect.x_min <= 0, 0.0, pd.D[p])
    den[p] = pd.D[p, p]
    try:
        sol = lemma1_solve(A_ub, b_ub, A_eq, b_eq, num, den, pd.t[p], p)
        if sol.feasible:
            return sol.value, np.clip(sol.y, 0.0, None)
    except SingularSystem:
        pass
    if stats is not None:
        stats.fallbacks += 1
    fsol = solve_fractional(FractionalProgram(num, den, pd.t[p], A_ub, b_ub, A_eq, b_eq))
    if not fsol.status == "optimal":
        return None, None
    return fsol.value, fsol.y


def tighten(rect: Rectangle, pd: ProblemData, stats: _Stats | None = None):
    """Tightened (lb, ub, witness) from the per-coordinate maxima of SINR."""
    n = pd.n
    x_t = rect.x_max.copy()
    ys: list[np.ndarray | None] = [None] * n
    for p in range(n):
        val, y = max_coordinate(pd, rect, p, stats)
        if val is None:
            if rect.x_min[p] <= 0:
                x_t[p] = 0.0
            continue
        x_t[p] = min(max(val, rect.x_min[p]), rect.x_max[p])
        ys[p] = y
    lb = f_sum(x_t)
    base = f_sum(rect.x_min)
    gains = np.log2(1 + x_t) - np.log2(1 + rect.x_min)
    ub, witness = f_sum(rect.x_min), None
    for i in np.argsort(-gains, kind="stable"):
        if ys[i] is not None:
            ub = base - gains[i]
            witness = ys[i].copy()
            idle = rect.x_min <= 0
            idle[i] = x_t[i] <= 0
            witness[idle] = 0.0
            # score the point itself so that round-off in the LP cannot
            # claim more than the witness delivers
            ub = max(ub, -float(np.sum(np.log2(1.0 + pd.sinr(witness)))))
            break
    return lb, ub, witness, x_t


def branch(rect: Rectangle) -> tuple[Rectangle, Rectangle]:
    edges = rect.x_max - rect.x_min
    p = int(np.argmax(edges))  # first maximal edge
    mid = rect.x_min[p] + edges[p] / 2
    hi1 = rect.x_max.copy()
    hi1[p] = mid
    lo2 = rect.x_min.copy()
    lo2[p] = mid
    return Rectangle(rect.x_min.copy(), hi1), Rectangle(lo2, rect.x_max.copy())


def _bound(rect: Rectangle, pd: ProblemData, cfg: BBConfig, stats: _Stats) -> list[np.ndarray]:
    """Fill rect bounds in place; return every feasible power vector seen."""
    lb, ub, y = evaluate_bounds(rect, pd)
    rect.lb, rect.ub, rect.witness_y = lb, ub, y
    rect.feasible = y is not None
    seen = [y] if y is not None else []
    if not rect.feasible or not cfg.tighten or np.array_equal(rect.x_min, rect.x_max):
        return seen
    ok, y_max = check_point_feasible(pd, rect.x_max, return_witness=True)
    if ok:
        rect.lb = rect.ub = f_sum(rect.x_max)
        rect.witness_y = y_max
        seen.append(y_max)
        return seen
    lb_t, ub_t, w, x_t = tighten(rect, pd, stats)
    rect.lb = max(rect.lb, lb_t)
    if cfg.reduce:
        # every attainable x in the box satisfies x <= x_t; the slack absorbs
        # round-off in the per-coordinate maxima
        cut = np.minimum(rect.x_max, x_t * (1 + REDUCE_SLACK) + REDUCE_SLACK)
        rect.x_max = np.maximum(cut, rect.x_min)
    if w is not None and ub_t < rect.ub:
        rect.ub, rect.witness_y = ub_t, w
        seen.append(w)
    rect.lb = min(rect.lb, rect.ub)
    return seen


def initial_rectangle(pd: ProblemData, cfg: BBConfig | None = None) -> Rectangle:
    cfg = cfg or BBConfig()
    x_b = pd.P_max * pd.h / pd.t
    rect = Rectangle(np.zeros(pd.n), x_b)
    _bound(rect, pd, cfg, _Stats())
    return rect


def run_bb(pd: ProblemData, cfg: BBConfig | None = None) -> BBResult:
    cfg = cfg or BBConfig()
    t0 = time.perf_counter()
    if pd.n == 0:
        alloc = zero_allocation(pd.active.M, pd.active.K)
        if pd.gains is not None:
            alloc = recover_assignment(pd, np.zeros(0))
        return BBResult(alloc, 0.0, 0.0, 0, [(0, 0.0, 0.0, 0)],
                        wall_time=time.perf_counter() - t0)
    stats = _Stats()
    root = Rectangle(np.zeros(pd.n), pd.P_max * pd.h / pd.t)
    seen = _bound(root, pd, cfg, stats)
    best_y, U = np.zeros(pd.n), 0.0

    def consider(candidates, U, best_y):
        for y in candidates:
            val = -objective(pd, y)
            if val < U:
                U, best_y = val, y
        return U, best_y

    U, best_y = consider(seen, U, best_y)
    if root.feasible:
        U = min(U, root.ub)
    counter = itertools.count()
    heap = [(root.lb, next(counter), root)]
    L = root.lb
    history = [(0, L, U, 1)]
    pruned = 0
    k = 0
    while U - L >= cfg.epsilon and k < cfg.N_itr and heap:
        k += 1
        _, _, rect = heapq.heappop(heap)
        for child in branch(rect):
            seen = _bound(child, pd, cfg, stats)
            child.lb = max(child.lb, rect.lb) if child.feasible else child.lb
            U, best_y = consider(seen, U, best_y)
            if child.feasible:
                U = min(U, child.ub)
            heapq.heappush(heap, (child.lb, next(counter), child))
        if cfg.prune:
            kept = [item for item in heap if item[0] <= U + PRUNE_GUARD]
            pruned += len(heap) - len(kept)
            if len(kept) != len(heap):
                heapq.heapify(kept)
            heap = kept
        L_new = heap[0][0] if heap else U
        L = max(L, min(L_new, U))
        history.append((k, L, U, len(heap)))
    best = recover_assignment(pd, best_y)
    value = objective(pd, best_y)
    return BBResult(best, value, U - L, k, history, pruned, stats.fallbacks,
                    converged=U - L < cfg.epsilon, wall_time=time.perf_counter() - t0)


def write_bound_history(result: BBResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "L", "U", "active"])
        for row in result.bound_history:
            w.writerow([row[0], repr(float(row[1])), repr(float(row[2])), row[3]])
