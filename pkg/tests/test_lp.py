import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from conftest import coordinate_instances, problem_for, toy_gains
from thznoma.lp import (INFEASIBLE, OPTIMAL, UNBOUNDED, FractionalProgram, LinearProgram,
                        SingularSystem, check_point_feasible, drop_redundant, lemma1_solve,
                        solve_fractional, solve_lp)
from thznoma.reformulation import build_active_set, build_problem, check_feasible


def test_trivial_max():
    sol = solve_lp(LinearProgram([1.0], [[1.0]], [1.0]))
    assert sol.status == OPTIMAL and sol.x[0] == pytest.approx(1.0) and sol.value == pytest.approx(1.0)


def test_contradiction_is_infeasible():
    assert solve_lp(LinearProgram([1.0], [[1.0]], [-1.0])).status == INFEASIBLE


def test_unbounded_and_free_variables():
    assert solve_lp(LinearProgram([1.0, 0.0], [[-1.0, 1.0]], [1.0])).status == UNBOUNDED
    sol = solve_lp(LinearProgram([-1.0], [[-1.0]], [3.0], lb=[-np.inf]))
    assert sol.x[0] == pytest.approx(-3.0)
    sol = solve_lp(LinearProgram([1.0, 1.0], A_eq=[[1.0, -1.0]], b_eq=[0.5], lb=[0, 0], ub=[2, 2]))
    assert sol.value == pytest.approx(3.5)


def test_variable_cap_enforced():
    with pytest.raises(ValueError):
        solve_lp(LinearProgram(np.ones(3)), max_vars=2)


def _vertex_oracle(c, A, b):
    """Exact optimum over {x >= 0, A x <= b} by enumerating every basis in
    rational arithmetic (bounded feasible sets only)."""
    m, n = A.shape
    G = [[Fraction(v) for v in row] for row in np.vstack([A, -np.eye(n)])]
    h = [Fraction(v) for v in np.concatenate([b, np.zeros(n)])]
    best = None
    for rows in itertools.combinations(range(m + n), n):
        M = [G[r][:] + [h[r]] for r in rows]
        ok = True
        for col in range(n):  # Gauss-Jordan
            piv = next((r for r in range(col, n) if M[r][col] != 0), None)
            if piv is None:
                ok = False
                break
            M[col], M[piv] = M[piv], M[col]
            for r in range(n):
                if r != col and M[r][col] != 0:
                    f = M[r][col] / M[col][col]
                    M[r] = [a - f * bb for a, bb in zip(M[r], M[col])]
        if not ok:
            continue
        x = [M[i][n] / M[i][i] for i in range(n)]
        if all(sum(G[r][i] * x[i] for i in range(n)) <= h[r] for r in range(m + n)):
            val = sum(Fraction(ci) * xi for ci, xi in zip(c, x))
            best = val if best is None or val > best else best
    return best


def test_random_five_variable_lps_match_vertex_enumeration():
    rng = np.random.default_rng(0)
    for _ in range(8):
        n, m = 5, 4
        A = np.round(rng.uniform(-1, 2, (m, n)), 2)
        A = np.vstack([A, np.ones((1, n))])  # keeps the set bounded
        b = np.round(rng.uniform(0.5, 3, m + 1), 2)
        c = np.round(rng.uniform(-1, 2, n), 2)
        sol = solve_lp(LinearProgram(c, A, b))
        exact = _vertex_oracle(c, A, b)
        assert sol.status == OPTIMAL
        assert sol.value == pytest.approx(float(exact), abs=1e-8)


def test_random_lps_match_highs_with_dual_certificate():
    rng = np.random.default_rng(1)
    for trial in range(60):
        n = int(rng.integers(2, 7))
        m = int(rng.integers(1, 8))
        A = rng.normal(size=(m, n)) * 10.0 ** rng.integers(-3, 4, size=(m, 1))
        b = np.abs(rng.normal(size=m)) * 10.0 ** rng.integers(-3, 4, size=m)
        A = np.vstack([A, np.ones((1, n))])
        b = np.concatenate([b, [5.0]])
        c = rng.normal(size=n)
        sol = solve_lp(LinearProgram(c, A, b))
        ref = linprog(-c, A_ub=A, b_ub=b, method="highs")
        assert sol.status == OPTIMAL and ref.status == 0
        assert sol.value == pytest.approx(-ref.fun, rel=1e-7, abs=1e-9)
        lam = sol.dual_ub
        assert np.all(lam >= -1e-8)
        reduced = c - A.T @ lam
        assert np.all(reduced <= 1e-8 * (1 + np.abs(c).max()))
        assert b @ lam == pytest.approx(sol.value, rel=1e-7, abs=1e-9)
        assert np.all(A @ sol.x - b <= 1e-8 * (1 + np.abs(b).max()))


def test_deterministic_bits():
    rng = np.random.default_rng(2)
    A, b, c = rng.random((4, 6)), rng.random(4), rng.random(6)
    s1, s2 = solve_lp(LinearProgram(c, A, b)), solve_lp(LinearProgram(c, A, b))
    assert s1.x.tobytes() == s2.x.tobytes()


def test_drop_redundant_keeps_binding_rows():
    A = np.array([[1.0, 1.0], [1.0, 0.0], [1e-30, 1e-30], [-1.0, 1.0]])
    b = np.array([1.0, 0.5, 1.0, 0.2])
    A2, b2 = drop_redundant(A, b)
    assert A2.shape[0] == 3
    np.testing.assert_array_equal(A2[-1], [-1.0, 1.0])


# -- fractional programs -------------------------------------------------------

def test_fractional_zero_numerator_and_monotone():
    fp = FractionalProgram(np.zeros(1), np.ones(1), 1.0, np.ones((1, 1)), np.ones(1))
    assert solve_fractional(fp).value == 0.0
    fp = FractionalProgram(np.ones(1), np.ones(1), 1.0, np.ones((1, 1)), np.ones(1))
    sol = solve_fractional(fp)
    assert sol.value == pytest.approx(0.5) and sol.y[0] == pytest.approx(1.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31))
def test_charnes_cooper_round_trip(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    num, den, t0 = rng.random(n), rng.random(n), float(rng.uniform(0.1, 2))
    y0 = rng.random(n)
    w = 1.0 / (den @ y0 + t0)
    z = y0 * w
    np.testing.assert_allclose(z / w, y0, rtol=1e-12)
    assert num @ z == pytest.approx(num @ y0 / (den @ y0 + t0), rel=1e-12)


def test_fractional_matches_dense_scan():
    rng = np.random.default_rng(3)
    for _ in range(10):
        num, den = rng.random(2), rng.random(2)
        fp = FractionalProgram(num, den, 0.3, np.vstack([np.ones(2), rng.random(2)]),
                               np.array([1.0, 0.7]))
        sol = solve_fractional(fp)
        g = np.linspace(0, 1, 801)
        Y = np.array(np.meshgrid(g, g)).reshape(2, -1).T
        ok = np.all(Y @ fp.A_ub.T <= fp.b_ub + 1e-12, axis=1)
        vals = (Y[ok] @ num) / (Y[ok] @ den + 0.3)
        assert sol.value >= vals.max() - 1e-12
        assert sol.value <= vals.max() + 1e-2


# -- closed form ---------------------------------------------------------------

def test_closed_form_decoupled_single_binding_row():
    A_ub = np.array([[2.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    b_ub = np.array([1.0, 3.0, 5.0])
    A_eq = np.array([[0.0, 1.0]])
    b_eq = np.array([0.25])
    sol = lemma1_solve(A_ub, b_ub, A_eq, b_eq, np.array([1.0, 0.0]), np.zeros(2), 1.0, 0)
    assert sol.y[0] == pytest.approx(0.5) and sol.y[1] == pytest.approx(0.25)


def test_closed_form_singular_signal():
    A_eq = np.array([[1.0, 1.0, 1.0], [1.0, 1.0, 1.0 + 1e-14]])
    with pytest.raises(SingularSystem):
        lemma1_solve(np.eye(3), np.ones(3), A_eq, np.ones(2), np.eye(3)[0], np.zeros(3), 1.0, 0)


def test_closed_form_negative_headroom_is_clamped():
    # the other coordinate already exhausts the budget
    A_ub = np.array([[1.0, 1.0]])
    sol = lemma1_solve(A_ub, np.array([1.0]), np.array([[0.0, 1.0]]), np.array([1.5]),
                       np.array([1.0, 0.0]), np.zeros(2), 1.0, 0)
    assert sol.y[0] == 0.0 and not sol.feasible


def test_closed_form_matches_fractional_on_sampled_boxes():
    for A_ub, b_ub, A_eq, b_eq, num, den, t0, p in coordinate_instances(100, seed=7):
        ref = solve_fractional(FractionalProgram(num, den, t0, A_ub, b_ub, A_eq, b_eq))
        assert ref.status == OPTIMAL
        try:
            sol = lemma1_solve(A_ub, b_ub, A_eq, b_eq, num, den, t0, p)
        except SingularSystem:
            continue
        assert sol.feasible
        assert sol.value == pytest.approx(ref.value, rel=1e-6)


# -- point feasibility ------------------------------------------------------------

def test_zero_target_always_feasible():
    for seed in range(10):
        pd = problem_for(seed, M=3, K=4)
        if pd.n:
            ok, y = check_point_feasible(pd, np.zeros(pd.n), return_witness=True)
            assert ok and np.all(y == 0)


def test_target_above_box_bound_is_infeasible():
    for seed in range(10):
        pd = problem_for(seed, M=2, K=4)
        if pd.n == 0:
            continue
        x = np.zeros(pd.n)
        x[0] = 1.01 * pd.P_max * pd.h[0] / pd.t[0]
        assert not check_point_feasible(pd, x)


def test_witness_meets_targets():
    rng = np.random.default_rng(4)
    hits = 0
    for seed in range(20):
        pd = problem_for(seed, M=2, K=2)
        if pd.n == 0:
            continue
        x = rng.uniform(0, 0.3, pd.n) * pd.P_max * pd.h / pd.t
        ok, y = check_point_feasible(pd, x, return_witness=True)
        if ok:
            hits += 1
            assert np.all(pd.sinr(y) >= x * (1 - 1e-6))
            assert check_feasible(pd, y, tol=1e-7 * max(1.0, pd.P_max)).feasible
    assert hits


def test_point_feasibility_agrees_with_grid_on_toy():
    """Two users on separate beams of a toy network: the set of attainable
    SINR pairs is scanned on a P_max/200 power grid."""
    g = toy_gains([[1.0, 0.05], [0.05, 1.0]], [[0.6, 0.02], [0.03, 0.5]],
                  sigma2=1e-2, R_bar=0.5)
    s = build_active_set(g)
    pd = build_problem(g, s)
    grid = np.linspace(0, pd.P_max, 201)
    Y = np.array(np.meshgrid(*[grid] * pd.n)).reshape(pd.n, -1).T
    Y = Y[Y.sum(axis=1) <= pd.P_max]
    ok = np.array([check_feasible(pd, y, tol=0).feasible for y in Y])
    sinr = np.array([pd.sinr(y) for y in Y[ok]])
    rng = np.random.default_rng(5)
    xmax = pd.P_max * pd.h / pd.t
    agree = 0
    for _ in range(40):
        x = rng.uniform(0, 1, pd.n) * xmax * 0.5
        # only pairs on distinct beams; the penalty keeps co-beam targets apart
        grid_ok = np.any(np.all(sinr >= x, axis=1))
        lp_ok = check_point_feasible(pd, x)
        if grid_ok:
            assert lp_ok
        agree += grid_ok == lp_ok
    assert agree >= 36
