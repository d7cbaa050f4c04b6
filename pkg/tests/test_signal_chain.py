import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zxlink.config import NoiseSplit, SystemConfig, paper_config
from zxlink.errors import ConfigError, DimensionError
from zxlink.signal_chain import (
    SampledPulse,
    build_combined_v,
    build_filter_matrix,
    build_operators,
    build_upsampler,
    build_w,
    combined_waveform,
    noise_covariance,
    rc_pulse,
    rrc_pulse,
    sample_pulse,
)

from oracles import rc_rrc_convolution, rc_unit_energy, rrc_unit_energy

ROLLOFF = 0.22


def test_config_derived_sizes():
    cfg = SystemConfig(n_symbols=2, m_rx=2, m_tx=1)
    assert cfg.upsampling == 2
    assert cfg.n_tot == 5
    assert cfg.n_q == 3


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(m_rx=3, m_tx=2),
        dict(n_users=2, n_tx_antennas=1),
        dict(rolloff_tx=0.0),
        dict(rolloff_rx=1.5),
        dict(noise_variance=-1.0),
        dict(n_symbols=0),
        dict(refine=4),
        dict(noise_split="quarter"),
    ],
)
def test_config_rejects_bad_values(kwargs):
    with pytest.raises(ConfigError):
        SystemConfig(**kwargs)


def test_rc_peak_and_nyquist_zero():
    t = np.linspace(-6, 6, 4001)
    assert rc_pulse(0.0, ROLLOFF) == pytest.approx(rc_pulse(t, ROLLOFF).max())
    for k in (1, 2, 3):
        assert abs(rc_pulse(float(k), ROLLOFF)) < 1e-12


def test_rc_singular_point_matches_neighbours():
    ts = 1.0 / (2 * ROLLOFF)
    mid = rc_pulse(ts, ROLLOFF)
    side = 0.5 * (rc_pulse(ts - 1e-7, ROLLOFF) + rc_pulse(ts + 1e-7, ROLLOFF))
    assert np.isfinite(mid)
    assert mid == pytest.approx(side, abs=1e-9)


@pytest.mark.parametrize("t_sing", [0.0, 1.0 / (4 * ROLLOFF), -1.0 / (4 * ROLLOFF)])
def test_rrc_singular_points_match_neighbours(t_sing):
    mid = rrc_pulse(t_sing, ROLLOFF)
    side = 0.5 * (rrc_pulse(t_sing - 1e-7, ROLLOFF) + rrc_pulse(t_sing + 1e-7, ROLLOFF))
    assert mid == pytest.approx(side, abs=1e-9)


@pytest.mark.parametrize("t", [0.0, 0.1, 0.3, 1.0 / (4 * ROLLOFF), 1.0, 1.0 / (2 * ROLLOFF), 2.7])
def test_pulses_match_spectral_oracle(t):
    assert rc_pulse(t, ROLLOFF) == pytest.approx(rc_unit_energy(t, ROLLOFF), abs=1e-9)
    assert rrc_pulse(t, ROLLOFF) == pytest.approx(rrc_unit_energy(t, ROLLOFF), abs=1e-9)


def test_pulse_time_scaling():
    # g(t; T) = g(t/T; 1) / sqrt(T) keeps unit energy
    assert rrc_pulse(0.6, ROLLOFF, T=2.0) == pytest.approx(rrc_pulse(0.3, ROLLOFF) / np.sqrt(2.0))
    assert rc_pulse(0.6, ROLLOFF, T=2.0) == pytest.approx(rc_pulse(0.3, ROLLOFF) / np.sqrt(2.0))


def test_rrc_self_convolution_has_nyquist_zeros():
    h = 1e-3
    t = np.arange(-40000, 40001) * h
    g = rrc_pulse(t, ROLLOFF)
    peak = h * np.dot(g, g)
    assert peak == pytest.approx(1.0, abs=2e-3)
    for k in (1, 2, 3):
        lagged = rrc_pulse(k - t, ROLLOFF)
        assert abs(h * np.dot(g, lagged)) < 1e-3


@pytest.mark.parametrize("m_rx", [2, 3])
def test_sampled_pulses_symmetric(m_rx):
    cfg = paper_config(m_rx)
    for side in ("tx", "rx"):
        p = sample_pulse(cfg, side)
        s = p.samples
        c = p.center_index
        assert s.size == 2 * cfg.n_tot + 1
        assert np.allclose(s[c - np.arange(c + 1)], s[c + np.arange(c + 1)], atol=1e-12)


@pytest.mark.parametrize("m_rx", [2, 3])
@pytest.mark.parametrize("side", ["tx", "rx"])
def test_sampled_energy_is_one_minus_truncated_tail(m_rx, side):
    # the untruncated sampled energy is exactly 1 (pulse bandwidth < sampling
    # rate); the short window loses only the tail outside |k| <= N_tot
    cfg = paper_config(m_rx)
    p = sample_pulse(cfg, side)
    ref = rc_unit_energy if side == "tx" else rrc_unit_energy
    tail = sum(ref(k / m_rx, ROLLOFF) ** 2 for k in range(cfg.n_tot + 1, 40 * m_rx)) * 2 / m_rx
    assert p.energy == pytest.approx(1.0 - tail, abs=1e-6)


def test_sampled_energy_within_two_percent_for_mrx2():
    cfg = paper_config(2)
    for side in ("tx", "rx"):
        assert 0.98 <= sample_pulse(cfg, side).energy <= 1.02


def test_exact_energy_override():
    cfg = paper_config(3, tx_scale_exact_energy=True)
    assert sample_pulse(cfg, "tx").energy == pytest.approx(1.0, abs=1e-14)


def test_sample_pulse_rejects_unknown_side():
    with pytest.raises(ValueError):
        sample_pulse(paper_config(3), "both")


def test_filter_matrix_shape_and_shift():
    cfg = SystemConfig(n_symbols=1, m_rx=2, m_tx=2)
    G = build_filter_matrix(sample_pulse(cfg, "rx"), cfg)
    assert G.shape == (3, 9)
    assert np.array_equal(G[1, 1:], G[0, :-1])
    assert G[1, 0] == 0.0


def test_filter_matrix_all_ones_rows():
    cfg = SystemConfig(n_symbols=1, m_rx=2, m_tx=2)
    ones = SampledPulse(samples=np.ones(2 * cfg.n_tot + 1), spacing=0.5, center_index=cfg.n_tot, scale=1.0)
    G = build_filter_matrix(ones, cfg)
    assert np.all(G.sum(axis=1) == 2 * cfg.n_tot + 1)


def test_filter_matrix_rejects_wrong_length():
    cfg = paper_config(3)
    bad = SampledPulse(samples=np.ones(5), spacing=1 / 3, center_index=2, scale=1.0)
    with pytest.raises(DimensionError):
        build_filter_matrix(bad, cfg)


@pytest.mark.parametrize("m_rx", [2, 3])
def test_filter_matrices_are_toeplitz(m_rx):
    cfg = paper_config(m_rx)
    ops = build_operators(cfg)
    for G in (ops.g_tx_mat, ops.g_rx_mat):
        n, k = G.shape
        for i in range(n):
            for j in range(k):
                if 0 <= j - i <= k - n:
                    assert G[i, j] == G[0, j - i]
                elif j < i:
                    assert G[i, j] == 0.0


@pytest.mark.parametrize("m_rx", [2, 3])
def test_receive_gram_diagonal_is_pulse_energy(m_rx):
    cfg = paper_config(m_rx)
    G = build_operators(cfg).g_rx_mat
    d = np.diag(G @ G.T)
    assert np.allclose(d, d[0], atol=1e-14)
    assert d[0] == pytest.approx(sample_pulse(cfg, "rx").energy, abs=1e-14)


def test_upsampler_identity_when_rates_match():
    cfg = paper_config(3)
    assert np.array_equal(build_upsampler(cfg), np.eye(cfg.n_tot))


def test_upsampler_positions():
    cfg = SystemConfig(n_symbols=2, m_rx=2, m_tx=1)
    U = build_upsampler(cfg)
    assert U.shape == (5, 3)
    ones = {(int(i) + 1, int(j) + 1) for i, j in zip(*np.nonzero(U))}
    assert ones == {(1, 1), (3, 2), (5, 3)}
    assert np.all(U.sum(axis=0) == 1)
    assert set(U.sum(axis=1)) <= {0.0, 1.0}


@pytest.mark.parametrize("m_rx", [2, 3])
def test_combined_v_symmetric_toeplitz_peak_on_diagonal(m_rx):
    cfg = paper_config(m_rx)
    V = build_combined_v(cfg)
    assert np.array_equal(V, V.T)
    assert np.allclose(np.diag(V), V.max())
    for k in range(1, cfg.n_tot):
        assert np.allclose(np.diag(V, k), V[0, k])


@pytest.mark.parametrize("m_rx", [2, 3])
def test_combined_v_matches_frequency_domain_oracle(m_rx):
    cfg = paper_config(m_rx)
    V = build_combined_v(cfg)
    for k in range(cfg.n_tot):
        assert V[0, k] == pytest.approx(rc_rrc_convolution(k / m_rx, ROLLOFF), abs=2e-4)


def test_combined_v_not_nyquist_at_symbol_spacing():
    # RC convolved with RRC keeps a visible tail at t = T
    cfg = paper_config(3)
    v = combined_waveform([0.0, 1.0], cfg)
    assert v[1] / v[0] == pytest.approx(rc_rrc_convolution(1.0, ROLLOFF) / rc_rrc_convolution(0.0, ROLLOFF), abs=1e-4)
    assert 0.02 < v[1] / v[0] < 0.05


@pytest.mark.parametrize("m_rx", [2, 3])
def test_combined_v_grid_convergence(m_rx):
    cfg = paper_config(m_rx)
    assert np.abs(build_combined_v(cfg, refine=64) - build_combined_v(cfg, refine=256)).max() < 1e-4


@pytest.mark.parametrize("cfg", [paper_config(3), paper_config(2), SystemConfig(n_symbols=2, m_rx=2, m_tx=1)])
def test_w_gram_symmetric_psd(cfg):
    ops = build_operators(cfg)
    gram = ops.w_mat.T @ ops.w_mat
    assert ops.w_mat.shape == (3 * cfg.n_tot, cfg.n_q)
    assert np.abs(gram - gram.T).max() <= 1e-12
    assert np.linalg.eigvalsh(gram).min() >= -1e-10


def test_w_equals_transposed_tx_matrix_without_upsampling():
    cfg = paper_config(3)
    ops = build_operators(cfg)
    assert np.array_equal(ops.w_mat, ops.g_tx_mat.T)
    with pytest.raises(DimensionError):
        build_w(cfg, ops.g_tx_mat, np.eye(cfg.n_tot + 1))


def test_noise_covariance_properties():
    cfg = paper_config(3)
    G = build_operators(cfg).g_rx_mat
    S = noise_covariance(cfg, G)
    assert np.abs(S - S.T).max() <= 1e-14
    np.linalg.cholesky(S + 1e-12 * np.eye(S.shape[0]))
    assert np.allclose(np.diag(S), G[0] @ G[0])


def test_noise_covariance_neighbour_lag_near_rc_value():
    # the receive autocorrelation of an RRC is an RC; truncation to the short
    # span shifts the sampled value by a couple of percent
    cfg = paper_config(3)
    S = build_operators(cfg).noise_cov
    rc_norm = rc_unit_energy(1 / 3, ROLLOFF) / rc_unit_energy(0.0, ROLLOFF)
    assert S[0, 1] == pytest.approx(rc_norm, abs=0.03)


def test_noise_covariance_split_and_linearity():
    base = paper_config(3)
    G = build_operators(base).g_rx_mat
    S1 = noise_covariance(base, G)
    S3 = noise_covariance(paper_config(3, noise_variance=3.0), G)
    half = noise_covariance(paper_config(3, noise_split=NoiseSplit.HALF), G)
    assert np.allclose(S3, 3.0 * S1, rtol=1e-14)
    assert np.allclose(half, 0.5 * S1, rtol=1e-14)


def test_operators_are_read_only():
    ops = build_operators(paper_config(3))
    with pytest.raises(ValueError):
        ops.v_mat[0, 0] = 1.0


@settings(max_examples=25, deadline=None)
@given(st.floats(min_value=-8, max_value=8, allow_nan=False), st.sampled_from([0.22, 0.35, 0.5, 1.0]))
def test_pulses_even_and_finite(t, rolloff):
    for f in (rc_pulse, rrc_pulse):
        a, b = f(t, rolloff), f(-t, rolloff)
        assert np.isfinite(a)
        assert a == pytest.approx(b, abs=1e-12)
