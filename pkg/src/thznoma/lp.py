"""Small dense linear programming.

``solve_lp`` is a two-phase tableau simplex with Bland's rule, so identical
input bits always give the identical vertex. On top of it sit the
feasibility test used for BB bounding, the Charnes-Cooper route for
linear-fractional programs and the closed-form per-coordinate maximiser.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .reformulation import ProblemData

logger = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"

PIVOT_TOL = 1e-11
# rows with any positive entry must take part in the ratio test, or a long
# step drives their basic variable negative
RATIO_TOL = 1e-14
FEAS_TOL = 1e-9
ABS_TOL = 1e-14
SCALE_PASSES = 4
SCALE_FLOOR = 1e-12
VERIFY_TOL = 1e-7


@dataclass
class LinearProgram:
    """maximize c^T x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  lb <= x <= ub."""

    c: np.ndarray
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.A_ub, self.b_ub = _as_system(self.A_ub, self.b_ub, n)
        self.A_eq, self.b_eq = _as_system(self.A_eq, self.b_eq, n)
        self.lb = np.zeros(n) if self.lb is None else np.asarray(self.lb, dtype=float)
        self.ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float)
        if not (np.all(np.isfinite(self.A_ub)) and np.all(np.isfinite(self.A_eq))
                and np.all(np.isfinite(self.b_ub)) and np.all(np.isfinite(self.b_eq))):
            raise ValueError("LP data must be finite")
        if np.any(self.lb > self.ub):
            raise ValueError("lb > ub")

    @property
    def n(self) -> int:
        return self.c.size


def _as_system(A, b, n):
    if A is None:
        return np.zeros((0, n)), np.zeros(0)
    A = np.asarray(A, dtype=float).reshape(-1, n)
    b = np.asarray(b, dtype=float).ravel()
    if b.size != A.shape[0]:
        raise ValueError("row count mismatch between A and b")
    return A, b


@dataclass
class LPSolution:
    status: str
    x: np.ndarray | None = None
    value: float = np.nan
    dual_ub: np.ndarray | None = None
    dual_eq: np.ndarray | None = None
    pivots: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


def _pivot(T: np.ndarray, r: int, col: int) -> None:
    T[r] /= T[r, col]
    colv = T[:, col].copy()
    colv[r] = 0.0
    T -= np.outer(colv, T[r])


def _simplex(T: np.ndarray, basis: np.ndarray, allowed: np.ndarray, max_pivots: int):
    """Maximise the objective stored in row -1 (as reduced costs) of the
    tableau T in place. Returns (status, pivots)."""
    m = T.shape[0] - 1
    pivots = 0
    while True:
        rc = T[-1, :-1]
        cand = np.flatnonzero((rc > PIVOT_TOL) & allowed)
        if cand.size == 0:
            return OPTIMAL, pivots
        col = cand[0]
        a = T[:m, col]
        pos = a > RATIO_TOL
        if not np.any(pos):
            return UNBOUNDED, pivots
        ratios = np.full(m, np.inf)
        ratios[pos] = T[:m, -1][pos] / a[pos]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + 1e-12 * max(1.0, abs(best)))
        r = ties[np.argmin(basis[ties])]
        _pivot(T, r, col)
        basis[r] = col
        pivots += 1
        if pivots >= max_pivots:
            return ITERATION_LIMIT, pivots


def solve_lp(lp: LinearProgram, max_vars: int = 512, max_pivots: int = 50_000) -> LPSolution:
    """Solve with row/column scaling; an optimal point that fails the check
    on the original rows triggers one unscaled re-solve."""
    sol = _solve_lp(lp, max_vars, max_pivots, SCALE_PASSES)
    if sol.optimal and not _satisfies(lp, sol.x):
        logger.debug("scaled simplex returned a point off the feasible set; re-solving unscaled")
        sol = _solve_lp(lp, max_vars, max_pivots, 0)
    return sol


def _satisfies(lp: LinearProgram, x: np.ndarray, tol: float = VERIFY_TOL) -> bool:
    ok = np.all(x >= lp.lb - tol * np.maximum(1.0, np.abs(lp.lb))) and \
        np.all(x <= lp.ub + tol * np.maximum(1.0, np.abs(lp.ub)))
    if lp.A_ub.size:
        ok &= np.all(lp.A_ub @ x - lp.b_ub <= tol * (np.abs(lp.A_ub) @ np.abs(x) + np.abs(lp.b_ub)) + ABS_TOL)
    if lp.A_eq.size:
        ok &= np.all(np.abs(lp.A_eq @ x - lp.b_eq) <= tol * (np.abs(lp.A_eq) @ np.abs(x) + np.abs(lp.b_eq)) + ABS_TOL)
    return bool(ok)


def _geo_scale(absA: np.ndarray, axis: int) -> np.ndarray:
    """sqrt(max * min) of the significant magnitudes along ``axis`` (1 if none)."""
    hi = np.max(absA, axis=axis, initial=0.0)
    # entries far below the largest one (round-off from nulled channels) must
    # not set the scale
    nz = absA > SCALE_FLOOR * np.expand_dims(hi, axis)
    lo = np.min(np.where(nz, absA, np.inf), axis=axis, initial=np.inf)
    out = np.sqrt(hi * lo)
    out[~np.isfinite(out) | (out == 0)] = 1.0
    return out


def _solve_lp(lp: LinearProgram, max_vars: int, max_pivots: int, passes: int) -> LPSolution:
    if lp.n > max_vars:
        raise ValueError(f"LP has {lp.n} variables, cap is {max_vars}")
    n0 = lp.n
    # variable substitution x = shift + sign * x' with x' >= 0, free vars split
    cols, shift = [], np.zeros(n0)
    for i in range(n0):
        lo, hi = lp.lb[i], lp.ub[i]
        if np.isfinite(lo):
            shift[i] = lo
            cols.append((i, 1.0))
        elif np.isfinite(hi):
            shift[i] = hi
            cols.append((i, -1.0))
        else:
            cols.append((i, 1.0))
            cols.append((i, -1.0))
    nx = len(cols)
    Tmap = np.zeros((n0, nx))
    for jj, (i, s) in enumerate(cols):
        Tmap[i, jj] = s
    A_ub = lp.A_ub @ Tmap
    b_ub = lp.b_ub - lp.A_ub @ shift
    A_eq = lp.A_eq @ Tmap
    b_eq = lp.b_eq - lp.A_eq @ shift
    extra = [(i, jj) for jj, (i, s) in enumerate(cols)
             if np.isfinite(lp.lb[i]) and np.isfinite(lp.ub[i])]
    if extra:
        rows = np.zeros((len(extra), nx))
        for r, (i, jj) in enumerate(extra):
            rows[r, jj] = 1.0
        A_ub = np.vstack([A_ub, rows])
        b_ub = np.concatenate([b_ub, [lp.ub[i] - lp.lb[i] for i, _ in extra]])
    c = Tmap.T @ lp.c

    m_ub, m_eq = A_ub.shape[0], A_eq.shape[0]
    A = np.vstack([A_ub, A_eq])
    b = np.concatenate([b_ub, b_eq])
    m = m_ub + m_eq
    # row equilibration
    scale = np.max(np.abs(A), axis=1) if m else np.zeros(0)
    zero_rows = scale == 0
    if np.any(zero_rows):
        is_eq = np.arange(m) >= m_ub
        if (np.any(b[zero_rows & ~is_eq] < -FEAS_TOL)
                or np.any(np.abs(b[zero_rows & is_eq]) > FEAS_TOL)):
            return LPSolution(INFEASIBLE)
        scale[zero_rows] = 1.0
    A = A / scale[:, None]
    b = b / scale
    # geometric-mean scaling of rows and columns, then rows to unit max:
    # penalty-weighted rows span many orders of magnitude and a single
    # max-norm pass leaves entries below the pivot tolerance
    colscale = np.ones(nx)
    if m and nx:
        for _ in range(passes):
            absA = np.abs(A[:, :nx])
            cs = _geo_scale(absA, axis=0)
            A[:, :nx] = A[:, :nx] / cs
            colscale *= cs
            rs = _geo_scale(np.abs(A[:, :nx]), axis=1)
            A = A / rs[:, None]
            b = b / rs
            scale = scale * rs
        c = c / colscale
        rescale = np.max(np.abs(A), axis=1)
        rescale[rescale == 0] = 1.0
        A = A / rescale[:, None]
        b = b / rescale
        scale = scale * rescale
    sign = np.where(b < 0, -1.0, 1.0)
    A *= sign[:, None]
    b *= sign

    # columns: x' (nx) | slacks (m_ub) | artificials (n_art)
    slack = np.zeros((m, m_ub))
    slack[np.arange(m_ub), np.arange(m_ub)] = sign[:m_ub]
    need_art = [i for i in range(m) if i >= m_ub or sign[i] < 0]
    art = np.zeros((m, len(need_art)))
    for a_i, row in enumerate(need_art):
        art[row, a_i] = 1.0
    n_tot = nx + m_ub + len(need_art)
    T = np.zeros((m + 1, n_tot + 1))
    T[:m, :nx] = A
    T[:m, nx:nx + m_ub] = slack
    T[:m, nx + m_ub:n_tot] = art
    T[:m, -1] = b
    basis = np.empty(m, dtype=int)
    for i in range(m_ub):
        basis[i] = nx + i
    for a_i, row in enumerate(need_art):
        basis[row] = nx + m_ub + a_i
    art_cols = np.arange(nx + m_ub, n_tot)
    total_pivots = 0

    if len(need_art):
        # phase 1: maximise -sum(artificials)
        T[-1, :] = 0.0
        for row in need_art:
            T[-1, :] += T[row, :]
        T[-1, art_cols] = 0.0
        allowed = np.ones(n_tot, dtype=bool)
        status, piv = _simplex(T, basis, allowed, max_pivots)
        total_pivots += piv
        if status == ITERATION_LIMIT:
            return LPSolution(ITERATION_LIMIT, pivots=total_pivots)
        if T[-1, -1] > FEAS_TOL * np.abs(b[need_art]).max(initial=0.0) + ABS_TOL:
            return LPSolution(INFEASIBLE, pivots=total_pivots)
        # drive artificials out of the basis
        keep = np.ones(m, dtype=bool)
        for r in range(m):
            if basis[r] >= nx + m_ub:
                cand = np.flatnonzero(np.abs(T[r, :nx + m_ub]) > 1e-9)
                if cand.size:
                    _pivot(T, r, cand[0])
                    basis[r] = cand[0]
                    total_pivots += 1
                else:
                    keep[r] = False
        if not np.all(keep):
            T = np.vstack([T[:m][keep], T[-1:]])
            basis = basis[keep]
            m = int(keep.sum())
    allowed = np.zeros(n_tot, dtype=bool)
    allowed[:nx + m_ub] = True

    # phase 2
    cost = np.zeros(n_tot)
    cost[:nx] = c
    T[-1, :-1] = cost - cost[basis] @ T[:m, :-1]
    T[-1, -1] = -cost[basis] @ T[:m, -1]
    status, piv = _simplex(T, basis, allowed, max_pivots)
    total_pivots += piv
    if status != OPTIMAL:
        return LPSolution(status, pivots=total_pivots)
    xs = np.zeros(n_tot)
    xs[basis] = T[:m, -1]
    x = shift + Tmap @ (xs[:nx] / colscale)
    # duals from the final basis, mapped back to the unscaled, unflipped rows
    Afull = np.zeros((A.shape[0], n_tot))
    Afull[:, :nx] = A
    Afull[:, nx:nx + m_ub] = slack
    Afull[:, nx + m_ub:] = art
    rows_kept = np.arange(A.shape[0])
    if T.shape[0] - 1 < A.shape[0]:
        rows_kept = np.flatnonzero(keep)
    dual_ub = dual_eq = None
    try:
        B = Afull[np.ix_(rows_kept, basis)]
        lam = np.zeros(A.shape[0])
        lam[rows_kept] = np.linalg.solve(B.T, cost[basis])
        lam = lam * sign / scale
        dual_ub, dual_eq = lam[:lp.A_ub.shape[0]], lam[m_ub:]
    except np.linalg.LinAlgError:
        pass
    return LPSolution(OPTIMAL, x, float(lp.c @ x), dual_ub, dual_eq, total_pivots)


# --- problem-specific systems -------------------------------------------------

def _normalise(A: np.ndarray, b: np.ndarray):
    s = np.max(np.abs(A), axis=1)
    s[s == 0] = 1.0
    return A / s[:, None], b / s


def base_constraints(pd: ProblemData, sic_mask) -> tuple[np.ndarray, np.ndarray]:
    """QoS rows, SIC rows for pairs in ``sic_mask`` and the budget, as A y <= b."""
    sic_mask = np.asarray(sic_mask, dtype=bool)
    A = [pd.E, pd.guard_E, pd.F[sic_mask], np.ones((1, pd.n))]
    b = [-pd.cvals, -pd.guard_c, -pd.bvals[sic_mask], [pd.P_max]]
    return np.vstack(A), np.concatenate(b)


MARGIN_TOL = 1e-7
MARGIN_CAP = 1e12
CERT_TOL = 1e-6


def check_point_feasible(pd: ProblemData, x_min, return_witness: bool = False):
    """Is there a power vector y >= 0 with SINR_p(y) >= x_min[p] for all p
    and all affine constraints, the SIC row of p switched by sign(x_min[p])?

    The SINR rows are checked through a scale-free margin: maximise tau <= 1
    subject to (h_p - x_p d_p) y >= tau x_p t_p. The large co-beam penalty
    makes the raw rows so lopsided that an absolute phase-one tolerance
    would accept targets that are missed by orders of magnitude.

    tau is left free up to ``MARGIN_CAP``, so the witness is the point where
    the ray through x_min leaves the feasible set rather than an arbitrary
    vertex; its SINRs dominate x_min.
    """
    x_min = np.asarray(x_min, dtype=float)
    n = pd.n
    if n == 0:
        return (True, np.zeros(0)) if return_witness else True
    on = x_min > 0
    A0, b0 = base_constraints(pd, on)
    rows = np.flatnonzero(on)
    A_sinr = (x_min[rows, None] * pd.D[rows] - pd.h[rows, None] * np.eye(n)[rows])
    A_sinr = A_sinr / (x_min[rows] * pd.t[rows])[:, None]
    A = np.block([[A_sinr, np.ones((len(rows), 1))],
                  [A0, np.zeros((len(A0), 1))]])
    b = np.concatenate([np.zeros(len(rows)), b0])
    A, b = _normalise(A, b)
    c = np.zeros(n + 1)
    c[-1] = 1.0
    ub = np.full(n + 1, np.inf)
    ub[-1] = MARGIN_CAP
    sol = solve_lp(LinearProgram(c, A, b, ub=ub))
    ok = sol.optimal and (not len(rows) or sol.x[-1] >= 1.0 - MARGIN_TOL)
    y = None
    if ok:
        y = np.clip(sol.x[:n], 0.0, None)
        y[~on] = 0.0  # idle pairs need no power; zeroing only relaxes the rest
        ok = _certify(pd, x_min, y, A0, b0)
        if not ok:
            logger.debug("feasibility LP witness failed certification at x=%s", x_min)
            y = None
    return (ok, y) if return_witness else ok


def _certify(pd: ProblemData, x_min, y, A0, b0) -> bool:
    """Re-check a witness on the unscaled rows: SINR targets to a relative
    CERT_TOL and affine rows to a relative CERT_TOL of their own scale."""
    on = x_min > 0
    sinr = pd.sinr(y)
    if np.any(sinr[on] < x_min[on] * (1 - CERT_TOL)):
        return False
    scale = np.abs(A0) @ y + np.abs(b0)
    return bool(np.all(A0 @ y - b0 <= CERT_TOL * scale))


@dataclass
class FractionalProgram:
    """maximize num^T y / (den^T y + t0)  s.t.  A_ub y <= b_ub, A_eq y = b_eq, y >= 0."""

    num: np.ndarray
    den: np.ndarray
    t0: float
    A_ub: np.ndarray
    b_ub: np.ndarray
    A_eq: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    b_eq: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        n = len(self.num)
        self.A_eq = np.asarray(self.A_eq, dtype=float).reshape(-1, n)
        self.b_eq = np.asarray(self.b_eq, dtype=float).ravel()

    def value(self, y) -> float:
        return float(self.num @ y / (self.den @ y + self.t0))


@dataclass
class FractionalSolution:
    status: str
    value: float = np.nan
    y: np.ndarray | None = None


def drop_redundant(A: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Remove rows of A y <= b (y >= 0) implied by the variable bounds that
    the all-nonnegative rows give. Penalty-free QoS rows whose coefficients
    were cancelled to ~1e-34 by zero forcing become such rows, and their huge
    normalised right-hand sides wreck the scaling of a homogenised LP."""
    if A.shape[0] == 0:
        return A, b
    nonneg = np.all(A >= 0, axis=1) & (b >= 0)
    u = np.full(A.shape[1], np.inf)
    for r in np.flatnonzero(nonneg):
        pos = A[r] > 0
        u[pos] = np.minimum(u[pos], b[r] / A[r, pos])
    with np.errstate(invalid="ignore"):
        reach = np.where(A > 0, A * u, 0.0).sum(axis=1)
    implied = np.isfinite(reach) & (reach <= b * (1 - 1e-12))
    return A[~implied], b[~implied]


def solve_fractional(fp: FractionalProgram) -> FractionalSolution:
    """Charnes-Cooper: z = y*w, w = 1/(den^T y + t0) turns the ratio into an LP
    in (z, w)."""
    n = len(fp.num)
    A_red, b_red = drop_redundant(fp.A_ub, fp.b_ub)
    fp = FractionalProgram(fp.num, fp.den, fp.t0, A_red, b_red, fp.A_eq, fp.b_eq)
    # dividing the ratio through by t0 keeps w = t0 / (den^T y + t0) near one;
    # with raw noise-level denominators w is ~1e11 and z spans the same range
    s = fp.t0 if fp.t0 > 0 else max(float(np.max(np.abs(fp.den), initial=0.0)), 1.0)
    A_ub = np.hstack([fp.A_ub, -fp.b_ub[:, None]])
    A_eq = np.vstack([np.hstack([fp.A_eq, -fp.b_eq[:, None]]),
                      np.concatenate([fp.den / s, [fp.t0 / s]])[None, :]])
    b_eq = np.zeros(A_eq.shape[0])
    b_eq[-1] = 1.0
    sol = solve_lp(LinearProgram(np.concatenate([fp.num, [0.0]]), A_ub,
                                 np.zeros(A_ub.shape[0]), A_eq, b_eq))
    if not sol.optimal:
        return FractionalSolution(sol.status)
    z, w = sol.x[:n], sol.x[n]
    if w <= 0:
        return FractionalSolution(UNBOUNDED)
    y = np.clip(z / w, 0.0, None)
    return FractionalSolution(OPTIMAL, fp.value(y), y)


class SingularSystem(Exception):
    """The equality block is too ill-conditioned for the closed form."""


@dataclass
class Lemma1Solution:
    y: np.ndarray
    value: float
    feasible: bool = True


def lemma1_solve(A_ub, b_ub, A_eq, b_eq, num, den, t0, p: int,
                 cond_limit: float = 1e12) -> Lemma1Solution:
    """Closed-form maximiser of a linear-fractional program whose numerator
    only involves y_p and whose |y|-1 equalities fix the remaining coordinates
    as affine functions of y_p.

    Raises SingularSystem when the equality block is near singular or the
    reduction leaves no bounding row; callers fall back to solve_fractional.
    """
    A_ub = np.asarray(A_ub, dtype=float)
    b_ub = np.asarray(b_ub, dtype=float)
    A_eq = np.asarray(A_eq, dtype=float)
    b_eq = np.asarray(b_eq, dtype=float)
    n = A_ub.shape[1]
    rest = np.array([i for i in range(n) if i != p], dtype=int)
    if A_eq.shape != (n - 1, n):
        raise ValueError("closed form needs exactly n-1 equality rows")
    Ae = A_eq[:, rest]
    ae = A_eq[:, p]
    if n > 1:
        s = np.max(np.abs(Ae), axis=1)
        s[s == 0] = 1.0
        Ae_s, ae_s, be_s = Ae / s[:, None], ae / s, b_eq / s
        if np.linalg.cond(Ae_s) > cond_limit:
            raise SingularSystem("equality block ill-conditioned")
        G_b = np.linalg.solve(Ae_s, be_s)
        G_a = np.linalg.solve(Ae_s, ae_s)
    else:
        G_b = G_a = np.zeros(0)
    At = A_ub[:, rest]
    alpha = A_ub[:, p] - At @ G_a
    beta = b_ub - At @ G_b
    scale = np.maximum(np.abs(A_ub).max(axis=1), 1e-300)
    pos = alpha > 1e-12 * scale
    neg = alpha < -1e-12 * scale
    flat = ~(pos | neg)
    if not np.any(pos):
        raise SingularSystem("no bounding row for y_p")
    upper = float(np.min(beta[pos] / alpha[pos]))
    lower = float(np.max(beta[neg] / alpha[neg])) if np.any(neg) else -np.inf
    y_p = max(upper, 0.0)
    feasible = (lower <= y_p + 1e-9 * max(1.0, abs(y_p))
                and np.all(beta[flat] >= -1e-9 * scale[flat]))
    y = np.empty(n)
    y[p] = y_p
    y[rest] = G_b - G_a * y_p
    denom0 = den[rest] @ G_b + t0  # denominator at y_p = 0 must be positive
    if denom0 <= 0:
        raise SingularSystem("denominator not positive at y_p = 0")
    if np.any(y < -1e-9 * max(1.0, np.abs(y).max())):
        feasible = False
    # a clamped y_p = 0 can still violate the bounding row
    resid = A_ub @ y - b_ub
    if np.any(resid > 1e-9 * (np.abs(A_ub) @ np.abs(y) + np.abs(b_ub))):
        feasible = False
    value = float(num @ y / (den @ y + t0))
    return Lemma1Solution(y, value, feasible)
