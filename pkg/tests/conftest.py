import numpy as np
import pytest

from thznoma.channel import EffectiveGains, SystemConfig, sample_network
from thznoma.bb import Rectangle, _coordinate_system
from thznoma.reformulation import ActiveSet, build_active_set, build_problem, check_feasible


def gains_for(seed: int, **cfg) -> EffectiveGains:
    return sample_network(SystemConfig(**cfg), np.random.default_rng(seed)).gains


def problem_for(seed: int, **cfg):
    g = gains_for(seed, **cfg)
    return build_problem(g, build_active_set(g))


def toy_gains(hP, hS, rho_P=1.0, sigma2=1e-3, R_bar=1.0, P_max=1.0, xi=1e8) -> EffectiveGains:
    """Effective gains assembled directly from gain matrices (no geometry)."""
    hP = np.asarray(hP, dtype=float)
    hS = np.asarray(hS, dtype=float)
    K = hP.shape[0]
    R_bar = np.full(K, float(R_bar)) if np.isscalar(R_bar) else np.asarray(R_bar, dtype=float)
    qos = rho_P / (2.0 ** R_bar - 1.0)
    d = np.diag(hP)
    c = (hP.sum(axis=1) - d) * rho_P / d - qos + sigma2 / d
    cross = (hS.sum(axis=1, keepdims=True) - hS) * rho_P
    b = cross / hS - qos[None, :] + sigma2 / hS
    return EffectiveGains(hP, hS, c, b, cross + sigma2, rho_P, sigma2, R_bar, P_max, xi)


def coordinate_instances(count: int, seed: int = 0):
    """Per-coordinate fractional programs from sampled networks: boxes whose
    lower corner is strictly attainable, |S| in {2, 3, 4}."""
    rng = np.random.default_rng(seed)
    i = 0
    made = 0
    while made < count:
        i += 1
        n_target = int(rng.integers(2, 5))
        M = int(rng.integers(1, 5))
        cfg = SystemConfig(M=M, K=4, R_bar=float(rng.choice([0.1, 0.5, 1.0])))
        g = sample_network(cfg, np.random.default_rng(i)).gains
        s = build_active_set(g)
        if len(s) < n_target:
            continue
        idx = np.sort(rng.choice(len(s), n_target, replace=False))
        pd = build_problem(g, ActiveSet(tuple(s.pairs[q] for q in idx), g.M, g.K))
        y = rng.random(pd.n)
        for _ in range(60):
            if check_feasible(pd, y, tol=0).feasible:
                break
            y *= 0.5
        x_min = pd.sinr(y) * rng.uniform(0.1, 0.9, pd.n)
        rect = Rectangle(x_min, pd.P_max * pd.h / pd.t)
        p = int(rng.integers(pd.n))
        A_ub, b_ub, A_eq, b_eq = _coordinate_system(pd, rect, p)
        made += 1
        yield A_ub, b_ub, A_eq, b_eq, pd.h[p] * np.eye(pd.n)[p], pd.D[p], pd.t[p], p


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=lambda k: (int(k.rstrip("abcdefgh")), k)):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
