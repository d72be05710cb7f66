import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thznoma.channel import (C_LIGHT, DegenerateChannelError, SingularChannelError,
                             SystemConfig, build_beams, build_codebook, compute_effective,
                             dbm_to_watts, path_loss, primary_angles, sample_deployment,
                             sample_network, select_analog_beams, steering_vector,
                             watts_to_dbm, zf_digital)


def test_steering_broadside_is_all_ones():
    np.testing.assert_allclose(steering_vector(0.0, SystemConfig(N=4, K=1)), np.ones(4))


def test_steering_half_wavelength_at_thirty_degrees():
    a = steering_vector(math.pi / 6, SystemConfig(N=2, K=1))
    assert a[0] == 1
    assert abs(a[1] - (-1j)) < 1e-12


@given(st.floats(-10, 10), st.integers(1, 32))
def test_steering_entries_unit_modulus(theta, n):
    a = steering_vector(theta, SystemConfig(N=n, K=1))
    np.testing.assert_allclose(np.abs(a), 1.0, rtol=1e-12)
    assert abs(np.vdot(a, a) - n) < 1e-9


def test_codebook_single_word_and_norms():
    cfg = SystemConfig(N=6, K=1, N_Q=1)
    cb = build_codebook(cfg)
    assert cb.shape == (6, 1)
    np.testing.assert_allclose(cb[:, 0], steering_vector(0.0, cfg) / math.sqrt(6))
    cb = build_codebook(SystemConfig(N=8, K=2, N_Q=13))
    np.testing.assert_allclose(np.linalg.norm(cb, axis=0), 1.0, rtol=1e-12)


def test_codebook_word_two_of_eight_points_at_ninety_degrees():
    cfg = SystemConfig(N=4, K=1, N_Q=8)
    np.testing.assert_allclose(build_codebook(cfg)[:, 2],
                               steering_vector(math.pi / 2, cfg) / 2, atol=1e-12)


def test_selection_exact_match_has_full_correlation():
    cfg = SystemConfig(N=8, K=1, N_Q=16)
    cb = build_codebook(cfg)
    theta = 2 * math.pi * 3 / 16
    idx = select_analog_beams([theta], cb, cfg)
    corr = abs(np.vdot(steering_vector(theta, cfg), cb[:, idx[0]]))
    assert corr == pytest.approx(math.sqrt(8), rel=1e-12)


def test_selection_matches_exhaustive_scan():
    cfg = SystemConfig(N=8, K=1, N_Q=16)
    cb = build_codebook(cfg)
    corr = [abs(np.vdot(steering_vector(0.3, cfg), cb[:, q])) for q in range(16)]
    assert select_analog_beams([0.3], cb, cfg)[0] == int(np.argmax(corr))


def test_selection_ties_go_to_lowest_index():
    # sin(pi/2 - x) = sin(pi/2 + x): codewords 1 and 3 of N_Q = 8 are shifted
    # images around 90 degrees and coincide for a user at 90 degrees
    cfg = SystemConfig(N=4, K=1, N_Q=8)
    cb = build_codebook(cfg)
    cb = cb[:, [1, 3]]
    assert select_analog_beams([math.pi / 2], cb, cfg)[0] == 0


def test_zf_single_user_is_normalised_analog():
    cfg = SystemConfig(N=6, K=1, N_Q=10)
    beams = build_beams([0.2], cfg)
    assert beams.digital.shape == (1, 1)
    np.testing.assert_allclose(np.abs(np.vdot(beams.composite[:, 0], beams.analog[:, 0])), 1.0)


def test_zf_orthogonal_match_is_scaled_identity():
    cfg = SystemConfig(N=4, K=2, N_Q=8)
    cb = build_codebook(cfg)
    analog = cb[:, [0, 2]]  # angles 0 and pi/2 are orthogonal for N=4 half-wave
    G = np.stack([steering_vector(0, cfg), steering_vector(math.pi / 2, cfg)], 1).conj().T @ analog
    P, _, pinv = zf_digital(G, analog)
    assert not pinv
    off = P - np.diag(np.diag(P))
    assert np.max(np.abs(off)) < 1e-12
    np.testing.assert_allclose(np.diag(P), P[0, 0])


def test_zf_suppresses_cross_talk():
    cfg = SystemConfig(N=10, K=3, N_Q=16)
    th = primary_angles(3)
    beams = build_beams(th, cfg)
    A = np.stack([steering_vector(t, cfg) for t in th], 1)
    X = np.abs(A.conj().T @ beams.composite)
    assert np.max(X - np.diag(np.diag(X))) < 1e-10 * np.max(X)
    np.testing.assert_allclose(np.linalg.norm(beams.composite, axis=0), 1.0)


def test_zf_singular_raises_without_fallback():
    cfg = SystemConfig(N=4, K=2, N_Q=4)
    cb = build_codebook(cfg)
    analog = cb[:, [0, 0]]
    G = np.stack([steering_vector(0, cfg), steering_vector(0.1, cfg)], 1).conj().T @ analog
    with pytest.raises(SingularChannelError):
        zf_digital(G, analog)
    _, comp, used = zf_digital(G, analog, allow_pinv=True)
    assert used and np.all(np.isfinite(comp))


def test_six_primaries_on_ten_words_use_pinv():
    assert build_beams(primary_angles(6), SystemConfig(K=6)).pinv_fallback


def test_path_loss_values():
    cfg = SystemConfig()
    pl0 = (4 * math.pi * 300e9 / C_LIGHT) ** 2
    assert path_loss(0.0, cfg) == pytest.approx(pl0, rel=1e-12)
    assert pl0 == pytest.approx(1.579e8, rel=2e-3)
    assert path_loss(10.0, cfg) == pytest.approx(1.579e8 * math.exp(0.05) * 101, rel=2e-3)
    assert path_loss(10.0, cfg) == pytest.approx(16790240986.230303, rel=1e-12)


@given(st.floats(0, 100), st.floats(1e-3, 50))
def test_path_loss_increasing(r, dr):
    cfg = SystemConfig()
    assert path_loss(r + dr, cfg) > path_loss(r, cfg)


def test_primary_angles_two_users():
    th = primary_angles(2)
    assert th[0] == 0.0
    assert th[1] == pytest.approx(math.pi / 2 - 1e-6, abs=1e-15)


def test_deployment_geometry_and_determinism():
    cfg = SystemConfig(K=4, M=6)
    d1 = sample_deployment(cfg, np.random.default_rng(3))
    d2 = sample_deployment(cfg, np.random.default_rng(3))
    for f in ("r_P", "theta_S", "r_S_dist"):
        np.testing.assert_array_equal(getattr(d1, f), getattr(d2, f))
    assert np.all(d1.r_P > 0) and np.all(d1.r_P <= cfg.L_P * math.sqrt(1.25))
    assert np.all(d1.r_S_dist <= cfg.r_S * math.sqrt(1.25))
    assert np.all(np.abs(d1.theta_S) < math.pi / 2)
    np.testing.assert_array_equal(np.abs(d1.a_P), 1.0)


def test_effective_gains_match_raw_quantities():
    cfg = SystemConfig(K=4, M=3)
    net = sample_network(cfg, np.random.default_rng(11))
    g, dep, beams = net.gains, net.deployment, net.beams
    for k in range(cfg.K):
        raw = abs(np.vdot(steering_vector(dep.theta_P[k], cfg), beams.composite[:, k])) ** 2
        raw /= path_loss(dep.r_P[k], cfg)
        assert g.hP[k, k] == pytest.approx(raw, rel=1e-12)
    assert np.all(g.t >= cfg.sigma2)
    assert np.all(g.hP >= 0) and np.all(g.hS >= 0)


def test_c_sign_matches_legacy_rate():
    for seed in range(20):
        g = sample_network(SystemConfig(K=4, M=2, R_bar=3.0), np.random.default_rng(seed)).gains
        for k in range(g.K):
            sinr = g.hP[k, k] * g.rho_P / ((g.hP[k].sum() - g.hP[k, k]) * g.rho_P + g.sigma2)
            assert (g.c[k] <= 0) == (math.log2(1 + sinr) >= g.R_bar[k])


def test_minus_c_is_own_beam_power_at_target():
    # solving R_k^P = R_bar for the secondary power on beam k gives -c_k
    cfg = SystemConfig(K=2, M=1, N_Q=16)
    g = sample_network(cfg, np.random.default_rng(5)).gains
    for k in range(2):
        ibi = (g.hP[k].sum() - g.hP[k, k]) * g.rho_P
        rho = g.rho_P / (2 ** g.R_bar[k] - 1) - (ibi + g.sigma2) / g.hP[k, k]
        assert -g.c[k] == pytest.approx(rho, rel=1e-12)


def test_single_primary_constant():
    cfg = SystemConfig(K=1, M=1)
    net = sample_network(cfg, np.random.default_rng(0))
    g = net.gains
    assert g.c[0] == pytest.approx(g.sigma2 / g.hP[0, 0] - g.rho_P / (2 ** 1.0 - 1))


def test_small_targets_push_constants_down():
    lo = sample_network(SystemConfig(R_bar=1e-6), np.random.default_rng(1)).gains
    hi = sample_network(SystemConfig(R_bar=1.0), np.random.default_rng(1)).gains
    assert np.all(lo.c < hi.c) and np.all(lo.b < hi.b)
    assert np.all(lo.c < -1e5)


@pytest.mark.filterwarnings("ignore:overflow")
def test_degenerate_gain_raises():
    cfg = SystemConfig(K=2, M=1, L_P=1e6, zeta=1.0)
    dep = sample_deployment(cfg, np.random.default_rng(0))
    with pytest.raises(DegenerateChannelError):
        compute_effective(cfg, dep, build_beams(primary_angles(2), cfg))


def test_frozen_seeded_network():
    g = sample_network(SystemConfig(), np.random.default_rng(7)).gains
    assert g.hP[0, 0] == pytest.approx(3.271716347597639e-10, rel=1e-9)
    np.testing.assert_allclose(g.c, [-0.9969435003106725, -0.9983207829774943,
                                     -0.99389378196016, -0.9995865694036178], rtol=1e-9)
    assert g.b[1, 3] == pytest.approx(-0.8632386482150327, rel=1e-9)


def test_config_validation_and_dbm():
    with pytest.raises(ValueError):
        SystemConfig(K=11, N=10)
    with pytest.raises(ValueError):
        SystemConfig(xi=0.5)
    with pytest.raises(ValueError):
        SystemConfig(fading="nakagami")
    assert dbm_to_watts(30) == pytest.approx(1.0)
    assert dbm_to_watts(-90) == pytest.approx(1e-12)
    assert watts_to_dbm(1e-3) == pytest.approx(0.0)
    cfg = SystemConfig.from_dict({"rho_P_dBm": 30, "sigma2_dBm": -90, "M": 2})
    assert cfg.rho_P == pytest.approx(1.0) and cfg.sigma2 == pytest.approx(1e-12)
    assert SystemConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError):
        SystemConfig.from_dict({"bogus": 1})


def test_rayleigh_fading_switch():
    cfg = SystemConfig(fading="rayleigh")
    dep = sample_deployment(cfg, np.random.default_rng(2))
    assert not np.allclose(np.abs(dep.a_P), 1.0)
