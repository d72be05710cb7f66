"""Matrix form of the beam/power allocation problem.

Variables are the powers ``y`` of the admissible (secondary user, beam) pairs.
Pairs are 0-indexed ``(j, k)`` and ordered beam-major (all users of beam 0,
then beam 1, ...), which matches the stacking of the full power vector
``rho = R @ y`` with ``rho[M * k + j]``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .channel import EffectiveGains

logger = logging.getLogger(__name__)

LN2 = np.log(2.0)


@dataclass(frozen=True)
class ActiveSet:
    pairs: tuple[tuple[int, int], ...]
    M: int
    K: int

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def as_matrix(self) -> np.ndarray:
        return np.array(self.pairs, dtype=int).reshape(-1, 2)

    def index(self, j: int, k: int) -> int:
        return self.pairs.index((j, k))


def build_active_set(g: EffectiveGains) -> ActiveSet:
    """Pairs with b_jk <= 0 and c_k <= 0, beam-major order."""
    pairs = tuple((j, k) for k in range(g.K) if g.c[k] <= 0
                  for j in range(g.M) if g.b[j, k] <= 0)
    return ActiveSet(pairs, g.M, g.K)


def mapping_matrix(s: ActiveSet) -> np.ndarray:
    R = np.zeros((s.M * s.K, len(s)))
    for p, (j, k) in enumerate(s.pairs):
        R[s.M * k + j, p] = 1.0
    return R


@dataclass
class ProblemData:
    """Coefficients of the reformulated problem over the active set.

    ``D``, ``E`` and ``F`` hold the rows ``d_p^T R``, ``e_p^T R`` and
    ``f_p^T R``; ``guard_E``/``guard_c`` keep the primary QoS of legacy-feasible
    beams that have no admissible secondary user.
    """

    active: ActiveSet
    h: np.ndarray
    dP: np.ndarray
    eP: np.ndarray
    fP: np.ndarray
    R: np.ndarray
    t: np.ndarray
    cvals: np.ndarray
    bvals: np.ndarray
    P_max: float
    xi: float
    guard_E: np.ndarray
    guard_c: np.ndarray
    gains: EffectiveGains | None = field(default=None, repr=False)

    def __post_init__(self):
        self.D = self.dP @ self.R
        self.E = self.eP @ self.R
        self.F = self.fP @ self.R

    @property
    def n(self) -> int:
        return len(self.active)

    @property
    def pairs(self):
        return self.active.pairs

    @property
    def cP(self) -> np.ndarray:
        return np.diag(self.h)

    def sinr(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return self.h * y / (self.D @ y + self.t)

    def to_dict(self) -> dict:
        return {
            "M": self.active.M, "K": self.active.K,
            "pairs": [list(p) for p in self.pairs],
            "h": self.h.tolist(), "dP": self.dP.tolist(), "eP": self.eP.tolist(),
            "fP": self.fP.tolist(), "R": self.R.tolist(), "t": self.t.tolist(),
            "cvals": self.cvals.tolist(), "bvals": self.bvals.tolist(),
            "P_max": self.P_max, "xi": self.xi,
            "guard_E": self.guard_E.tolist(), "guard_c": self.guard_c.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ProblemData":
        n = len(d["pairs"])
        km = d["M"] * d["K"]
        active = ActiveSet(tuple(tuple(p) for p in d["pairs"]), d["M"], d["K"])
        mat = lambda key, shape: np.asarray(d[key], dtype=float).reshape(shape)  # noqa: E731
        return cls(active, mat("h", n), mat("dP", (n, km)), mat("eP", (n, km)),
                   mat("fP", (n, km)), mat("R", (km, n)), mat("t", n),
                   mat("cvals", n), mat("bvals", n), float(d["P_max"]), float(d["xi"]),
                   mat("guard_E", (len(d["guard_c"]), n)), mat("guard_c", -1))


def build_problem(g: EffectiveGains, s: ActiveSet, xi: float | None = None) -> ProblemData:
    xi = g.xi if xi is None else xi
    M, K = g.M, g.K
    n = len(s)
    dP = np.zeros((n, M * K))
    eP = np.zeros((n, M * K))
    fP = np.zeros((n, M * K))
    for p, (j, k) in enumerate(s.pairs):
        for i in range(K):
            block = slice(M * i, M * (i + 1))
            if i == k:
                dP[p, block] = xi * g.hS[j, k]
                dP[p, M * k + j] = 0.0
                eP[p, M * k + j] = 1.0
                fP[p, M * k + j] = 1.0
            else:
                dP[p, block] = g.hS[j, i]
                eP[p, block] = g.hP[k, i] / g.hP[k, k]
                fP[p, block] = g.hS[j, i] / g.hS[j, k]
    R = mapping_matrix(s)
    h = np.array([g.hS[j, k] for j, k in s.pairs])
    t = np.array([g.t[j, k] for j, k in s.pairs])
    cvals = np.array([g.c[k] for _, k in s.pairs])
    bvals = np.array([g.b[j, k] for j, k in s.pairs])

    covered = {k for _, k in s.pairs}
    guard_rows, guard_c = [], []
    for k in range(K):
        if g.c[k] <= 0 and k not in covered:
            row = np.zeros(M * K)
            for i in range(K):
                if i != k:
                    row[M * i:M * (i + 1)] = g.hP[k, i] / g.hP[k, k]
            guard_rows.append(row @ R)
            guard_c.append(g.c[k])
    guard_E = np.array(guard_rows, dtype=float).reshape(len(guard_rows), n)
    return ProblemData(s, h, dP, eP, fP, R, t, cvals, bvals, float(g.P_max), float(xi),
                       guard_E, np.array(guard_c, dtype=float), gains=g)


def objective(pd: ProblemData, y) -> float:
    """Penalised sum rate sum_p log2(1 + c_p^T y / (d_p^T R y + t_p))."""
    if pd.n == 0:
        return 0.0
    return float(np.sum(np.log2(1.0 + pd.sinr(y))))


@dataclass
class FeasibilityReport:
    qos: float
    sic: float
    budget: float
    negativity: float
    tol: float

    @property
    def max_violation(self) -> float:
        return max(self.qos, self.sic, self.budget, self.negativity)

    @property
    def feasible(self) -> bool:
        return self.max_violation <= self.tol


def check_feasible(pd: ProblemData, y, tol: float = 1e-7) -> FeasibilityReport:
    """Residuals in watts; sign(0) = 0 so idle pairs never violate the SIC row."""
    y = np.asarray(y, dtype=float)
    qos = -np.inf
    if pd.n:
        qos = float(np.max(pd.E @ y + pd.cvals))
        active = y > 0
        sic = float(np.max(np.where(active, pd.F @ y + pd.bvals, -np.inf)))
    else:
        sic = -np.inf
    if len(pd.guard_c):
        qos = max(qos, float(np.max(pd.guard_E @ y + pd.guard_c)))
    budget = float(np.sum(y) - pd.P_max)
    neg = float(np.max(-y)) if pd.n else 0.0
    return FeasibilityReport(max(qos, 0.0) if qos > -np.inf else 0.0,
                             max(sic, 0.0) if sic > -np.inf else 0.0,
                             max(budget, 0.0), max(neg, 0.0), tol)


@dataclass
class RateReport:
    R_P: np.ndarray
    R_sic: np.ndarray
    R_S: np.ndarray
    qos_residual: float
    budget_residual: float

    @property
    def sum_rate(self) -> float:
        return float(np.sum(self.R_S))


@dataclass
class Allocation:
    y: np.ndarray
    rho: np.ndarray
    assignment: np.ndarray
    objective: float
    penalty_leak: bool = False
    rates: RateReport | None = None

    @property
    def powers(self) -> list[tuple[int, int, float]]:
        return [(int(j), int(k), float(self.rho[j, k]))
                for k in range(self.rho.shape[1]) for j in range(self.rho.shape[0])
                if self.assignment[j, k]]

    @property
    def sum_rate(self) -> float:
        return self.rates.sum_rate if self.rates is not None else self.objective

    def to_dict(self) -> dict:
        d = {"y": self.y.tolist(), "rho": self.rho.tolist(),
             "assignment": self.assignment.astype(int).tolist(),
             "powers": [list(p) for p in self.powers],
             "objective": self.objective, "penalty_leak": self.penalty_leak}
        if self.rates is not None:
            d["rates"] = {"R_P": self.rates.R_P.tolist(),
                          "R_sic": np.nan_to_num(self.rates.R_sic, nan=-1.0).tolist(),
                          "R_S": self.rates.R_S.tolist(),
                          "qos_residual": self.rates.qos_residual,
                          "budget_residual": self.rates.budget_residual}
        return d


def true_rates(g: EffectiveGains, allocation: Allocation) -> RateReport:
    """Rates of the original signal model for an allocation with at most one
    secondary user per beam.

    ``qos_residual`` is max(R_bar - rate) over legacy-feasible primaries and the
    SIC rates of scheduled pairs; nonpositive means every QoS target holds.
    """
    rho_s = np.asarray(allocation.rho, dtype=float)
    sched = np.asarray(allocation.assignment, dtype=bool)
    beam_power = g.rho_P + rho_s.sum(axis=0)  # total power radiated on each beam
    hPd = np.diag(g.hP)
    ibi_P = g.hP @ beam_power - hPd * beam_power
    R_P = np.log2(1 + hPd * g.rho_P / (hPd * rho_s.sum(axis=0) + ibi_P + g.sigma2))
    ibi_S = g.hS @ beam_power  # M, then subtract own beam per column
    ibi_S = ibi_S[:, None] - g.hS * beam_power[None, :]
    R_sic = g.hS * g.rho_P / (g.hS * rho_s.sum(axis=0)[None, :] + ibi_S + g.sigma2)
    R_sic = np.where(sched, np.log2(1 + R_sic), np.nan)
    R_S = np.where(sched, np.log2(1 + g.hS * rho_s / (ibi_S + g.sigma2)), 0.0)
    resid = [-np.inf]
    legacy_ok = g.c <= 0
    if np.any(legacy_ok):
        resid.append(float(np.max((g.R_bar - R_P)[legacy_ok])))
    if np.any(sched):
        resid.append(float(np.max((g.R_bar[None, :] - R_sic)[sched])))
    return RateReport(R_P, R_sic, R_S, max(resid), float(rho_s.sum() - g.P_max))


def zero_allocation(M: int, K: int, n: int = 0) -> Allocation:
    return Allocation(np.zeros(n), np.zeros((M, K)), np.zeros((M, K), dtype=bool), 0.0)


def recover_assignment(pd: ProblemData, y, power_floor: float | None = None) -> Allocation:
    """Round a (penalised) power vector to at most one user per beam.

    Entries at or below ``power_floor`` (default 1e-6 * P_max) are zeroed.
    If two users of one beam survive, the larger keeps the beam and a
    penalty-leak warning is raised.
    """
    M, K = pd.active.M, pd.active.K
    y = np.clip(np.asarray(y, dtype=float).copy(), 0.0, None)
    floor = 1e-6 * pd.P_max if power_floor is None else power_floor
    y[y <= floor] = 0.0
    leak = False
    for k in range(K):
        idx = [p for p, (_, kk) in enumerate(pd.pairs) if kk == k and y[p] > 0]
        if len(idx) > 1:
            leak = True
            keep = max(idx, key=lambda p: (y[p], -p))
            logger.warning("penalty leak on beam %d: powers %s", k, [float(y[p]) for p in idx])
            for p in idx:
                if p != keep:
                    y[p] = 0.0
    rho = (pd.R @ y).reshape(K, M).T if pd.n else np.zeros((M, K))
    alloc = Allocation(y, rho, rho > 0, objective(pd, y), leak)
    if pd.gains is not None:
        alloc.rates = true_rates(pd.gains, alloc)
    return alloc


@dataclass
class SolverReport:
    solver: str
    objective: float
    iterations: int
    wall_time: float
    residual: float
    status: str = "ok"
    history: list = field(default_factory=list)
