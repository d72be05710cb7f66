"""Greedy benchmark, the two-user power-split function and brute-force oracles."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass

import numpy as np

from .channel import EffectiveGains
from .reformulation import (ActiveSet, Allocation, build_active_set, true_rates)

logger = logging.getLogger(__name__)

GREEDY_LABEL = "greedy-single-pair"


@dataclass
class GreedyChoice:
    pair: tuple[int, int] | None
    power: float
    rate: float


def clipped_power(g: EffectiveGains, j: int, k: int) -> float:
    return float(max(0.0, min(g.P_max, -g.c[k], -g.b[j, k])))


def _single_pair_allocation(g: EffectiveGains, s: ActiveSet, j: int, k: int, power: float) -> Allocation:
    rho = np.zeros((g.M, g.K))
    rho[j, k] = power
    y = np.array([power if p == (j, k) else 0.0 for p in s.pairs])
    alloc = Allocation(y, rho, rho > 0, 0.0)
    alloc.rates = true_rates(g, alloc)
    alloc.objective = alloc.rates.sum_rate
    return alloc


def greedy_choice(g: EffectiveGains) -> GreedyChoice:
    best = GreedyChoice(None, 0.0, 0.0)
    for k in range(g.K):
        for j in range(g.M):
            power = clipped_power(g, j, k)
            rate = float(np.log2(1 + g.hS[j, k] * power / g.t[j, k]))
            if rate > best.rate:
                best = GreedyChoice((j, k), power, rate)
    return best


def greedy_schedule(g: EffectiveGains, s: ActiveSet | None = None, qos_tol: float = 0.0) -> Allocation:
    """All secondary power on the single best (user, beam) pair.

    The clip keeps the pair's own beam feasible. Leakage onto the primaries
    of other beams is checked on the true rates, and the power is bisected
    down if any target is missed.
    """
    s = build_active_set(g) if s is None else s
    choice = greedy_choice(g)
    if choice.pair is None:
        alloc = Allocation(np.zeros(len(s)), np.zeros((g.M, g.K)),
                           np.zeros((g.M, g.K), dtype=bool), 0.0)
        alloc.rates = true_rates(g, alloc)
        return alloc
    j, k = choice.pair
    alloc = _single_pair_allocation(g, s, j, k, choice.power)
    if alloc.rates.qos_residual <= qos_tol:
        return alloc
    lo, hi = 0.0, choice.power
    for _ in range(100):
        mid = (lo + hi) / 2
        trial = _single_pair_allocation(g, s, j, k, mid)
        if trial.rates.qos_residual <= qos_tol:
            lo = mid
        else:
            hi = mid
    logger.info("greedy power on %s scaled from %.4g to %.4g for cross-beam QoS",
                choice.pair, choice.power, lo)
    return _single_pair_allocation(g, s, j, k, lo)


# -- two-user power split ----------------------------------------------------

def f_alpha(alpha, x_ratio, beta):
    """Sum rate (bits) when a fraction alpha of the power goes to the stronger
    of two users whose gain ratio is x_ratio, beta being the normalised noise."""
    alpha = np.asarray(alpha, dtype=float)
    return (np.log2(1 + x_ratio * alpha / (1 + beta - alpha))
            + np.log2(1 + (1 / x_ratio) * (1 - alpha) / (alpha + beta)))


def falpha_numerator(x_ratio, beta):
    """Numerator of the derivative of f_alpha at alpha = 1 (up to a positive factor)."""
    return (1 + beta) ** 2 * x_ratio ** 2 - beta * x_ratio - beta ** 2


@dataclass
class FalphaReport:
    x: np.ndarray
    beta: np.ndarray
    argmax_alpha: np.ndarray
    numerator: np.ndarray
    slope_at_one: np.ndarray

    @property
    def holds(self) -> bool:
        return bool(np.all(self.argmax_alpha == 1.0) and np.all(self.numerator > 0)
                    and np.all(self.slope_at_one > 0))

    def rows(self):
        for idx in np.ndindex(self.x.shape):
            yield (float(self.x[idx]), float(self.beta[idx]), float(self.argmax_alpha[idx]),
                   float(self.numerator[idx]), float(self.slope_at_one[idx]))


def falpha_sweep(n_x: int = 50, n_beta: int = 50, n_alpha: int = 10001,
                 x_range=(1.0, 100.0), beta_range=(0.01, 100.0), fd_step: float = 1e-6) -> FalphaReport:
    """Grid argmax of f_alpha on a log grid of (x, beta); x excludes its lower end."""
    xs = np.logspace(np.log10(x_range[0]), np.log10(x_range[1]), n_x + 1)[1:]
    betas = np.logspace(np.log10(beta_range[0]), np.log10(beta_range[1]), n_beta)
    alphas = np.linspace(0.0, 1.0, n_alpha)
    X, B = np.meshgrid(xs, betas, indexing="ij")
    arg = np.empty_like(X)
    for i, j in np.ndindex(X.shape):
        vals = f_alpha(alphas, X[i, j], B[i, j])
        arg[i, j] = alphas[int(np.argmax(vals))]
    a_hi, a_lo = 1.0, 1.0 - 2 * fd_step
    slope = (f_alpha(a_hi, X, B) - f_alpha(a_lo, X, B)) / (2 * fd_step)
    return FalphaReport(X, B, arg, falpha_numerator(X, B), slope)


# -- brute force ----------------------------------------------------------------

class OracleSizeError(ValueError):
    pass


@dataclass
class BruteForceResult:
    allocation: Allocation
    value: float
    delta_grid: float
    bound: float
    evaluated: int


def batch_rates(g: EffectiveGains, rho: np.ndarray):
    """Vectorised true rates for a batch of allocations rho[B, M, K] with at
    most one user per beam. Returns (per-user own rates [B, M, K], qos residual [B])."""
    hPd = np.diag(g.hP)
    col = rho.sum(axis=1)  # B, K
    beam_power = g.rho_P + col
    ibi_P = beam_power @ g.hP.T - hPd * beam_power
    R_P = np.log2(1 + hPd * g.rho_P / (hPd * col + ibi_P + g.sigma2))
    ibi_S = (beam_power @ g.hS.T)[:, :, None] - g.hS[None] * beam_power[:, None, :]
    denom = ibi_S + g.sigma2
    R_sic = np.log2(1 + g.hS * g.rho_P / (g.hS * col[:, None, :] + denom))
    own = np.log2(1 + g.hS * rho / denom)
    resid = np.full(rho.shape[0], -np.inf)
    legacy = g.c <= 0
    if legacy.any():
        resid = np.maximum(resid, np.max((g.R_bar - R_P)[:, legacy], axis=1))
    sched = rho > 0
    miss = np.where(sched, g.R_bar[None, None, :] - R_sic, -np.inf)
    resid = np.maximum(resid, miss.reshape(len(rho), -1).max(axis=1))
    return own, resid


def _grid_points(a: int, grid_n: int):
    """Integer points of {0..grid_n}^a with sum <= grid_n, in chunks."""
    if a == 1:
        yield np.arange(grid_n + 1)[:, None]
        return
    last = np.arange(grid_n + 1)
    for head in itertools.product(range(grid_n + 1), repeat=a - 2):
        room = grid_n - sum(head)
        if room < 0:
            continue
        i, j = np.meshgrid(last[:room + 1], last[:room + 1], indexing="ij")
        keep = i + j <= room
        pts = np.column_stack([np.tile(head, (int(keep.sum()), 1)), i[keep], j[keep]])
        yield pts


def brute_force(g: EffectiveGains, s: ActiveSet | None = None, grid_n: int = 200,
                qos_tol: float = 1e-12) -> BruteForceResult:
    """Exhaustive search over beam assignments and a power grid of step P_max/grid_n.

    ``delta_grid`` certifies the grid gap: the continuous optimum is at most
    value + delta_grid. It uses that the feasible powers of one assignment
    form a down-closed set and that each rate rises in its own power and
    falls in every other one, so from the grid point below the optimum the
    sum rate can gain at most the one-step own-rate increments.
    """
    s = build_active_set(g) if s is None else s
    if (g.M + 1) ** g.K > 256 or len(s) > 4:
        raise OracleSizeError(f"brute force limited to (M+1)^K <= 256 and |S| <= 4, "
                              f"got M={g.M}, K={g.K}, |S|={len(s)}")
    step = g.P_max / grid_n
    best_val, best_rho, evaluated = 0.0, np.zeros((g.M, g.K)), 0
    bound = 0.0
    options = [[None] + (list(range(g.M)) if g.c[k] <= 0 else []) for k in range(g.K)]
    for pick in itertools.product(*options):
        act = [(j, k) for k, j in enumerate(pick) if j is not None]
        if not act or g.P_max <= 0:
            continue
        jj = np.array([j for j, _ in act])
        kk = np.array([k for _, k in act])
        for pts in _grid_points(len(act), grid_n):
            rho = np.zeros((len(pts), g.M, g.K))
            rho[:, jj, kk] = pts * step
            own, resid = batch_rates(g, rho)
            ok = resid <= qos_tol
            evaluated += len(pts)
            if not ok.any():
                continue
            total = own.reshape(len(pts), -1).sum(axis=1)
            rates = own[:, jj, kk]
            gain = np.zeros(len(pts))
            for q in range(len(act)):
                up = rho.copy()
                up[:, jj[q], kk[q]] += step
                own_up, _ = batch_rates(g, up)
                gain += own_up[:, jj[q], kk[q]] - rates[:, q]
            bound = max(bound, float(np.max((total + gain)[ok])))
            i = int(np.argmax(np.where(ok, total, -np.inf)))
            if total[i] > best_val:
                best_val, best_rho = float(total[i]), rho[i].copy()
    y = np.array([best_rho[j, k] for j, k in s.pairs])
    alloc = Allocation(y, best_rho, best_rho > 0, best_val)
    alloc.rates = true_rates(g, alloc)
    bound = max(bound, best_val)
    return BruteForceResult(alloc, best_val, bound - best_val, bound, evaluated)
