"""Discrete-time operators of the band-limited transmission chain.

The transmit filter is a raised cosine (RC) and the receive filter a root
raised cosine (RRC), both normalized to unit energy in continuous time. The
filters are sampled at T/M_Rx over [-T(N + 1/M_Rx), T(N + 1/M_Rx)], which
gives 2*N_tot + 1 taps, and laid out as banded Toeplitz matrices of shape
N_tot x 3*N_tot.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .config import SystemConfig
from .errors import DimensionError

# distance to a removable singularity below which the analytic limit is used
_GUARD = 1e-9


def rc_pulse(t, rolloff: float, T: float = 1.0):
    """Unit-energy raised-cosine impulse response.

    The classic RC pulse ``sinc(t/T) cos(pi*eps*t/T) / (1 - (2*eps*t/T)^2)``
    has energy ``T (1 - eps/4)``; the result is divided by its square root.
    """
    t = np.asarray(t, dtype=float)
    x = t / T
    den = 1.0 - (2.0 * rolloff * x) ** 2
    singular = np.abs(np.abs(x) - 1.0 / (2.0 * rolloff)) < _GUARD
    safe_den = np.where(singular, 1.0, den)
    value = np.sinc(x) * np.cos(np.pi * rolloff * x) / safe_den
    limit = np.pi / 4.0 * np.sinc(1.0 / (2.0 * rolloff))
    value = np.where(singular, limit, value)
    out = value / np.sqrt(T * (1.0 - rolloff / 4.0))
    return out if out.ndim else float(out)


def rrc_pulse(t, rolloff: float, T: float = 1.0):
    """Unit-energy root-raised-cosine impulse response.

    Singular points t = 0 and t = +-T/(4*eps) use their analytic limits.
    """
    t = np.asarray(t, dtype=float)
    x = t / T
    eps = rolloff
    at_zero = np.abs(x) < _GUARD
    at_quarter = np.abs(np.abs(x) - 1.0 / (4.0 * eps)) < _GUARD
    regular = ~(at_zero | at_quarter)
    # placeholder 0.1 is never singular: 1/(4*eps) >= 0.25 for eps <= 1
    xs = np.where(regular, x, 0.1)
    num = np.sin(np.pi * xs * (1.0 - eps)) + 4.0 * eps * xs * np.cos(np.pi * xs * (1.0 + eps))
    den = np.pi * xs * (1.0 - (4.0 * eps * xs) ** 2)
    value = num / den
    zero_limit = 1.0 - eps + 4.0 * eps / np.pi
    quarter_limit = eps / np.sqrt(2.0) * (
        (1.0 + 2.0 / np.pi) * np.sin(np.pi / (4.0 * eps))
        + (1.0 - 2.0 / np.pi) * np.cos(np.pi / (4.0 * eps))
    )
    value = np.where(at_zero, zero_limit, np.where(at_quarter, quarter_limit, value))
    out = value / np.sqrt(T)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class SampledPulse:
    """A pulse sampled on a uniform grid centred on t = 0."""

    samples: np.ndarray
    spacing: float
    center_index: int
    scale: float

    @property
    def energy(self) -> float:
        return float(np.sum((self.scale * self.samples) ** 2))


def sample_pulse(cfg: SystemConfig, side: Literal["tx", "rx"]) -> SampledPulse:
    """Sample the transmit (RC) or receive (RRC) pulse at spacing T/M_Rx.

    The scale is a_Tx = sqrt(T/M_Tx) or a_Rx = sqrt(T/M_Rx). With
    ``cfg.tx_scale_exact_energy`` the transmit scale instead makes the
    sampled vector exactly unit norm.
    """
    T = cfg.symbol_period
    n_tot = cfg.n_tot
    spacing = T / cfg.m_rx
    t = (np.arange(2 * n_tot + 1) - n_tot) * spacing
    if side == "tx":
        samples = rc_pulse(t, cfg.rolloff_tx, T)
        if cfg.tx_scale_exact_energy:
            scale = 1.0 / float(np.linalg.norm(samples))
        else:
            scale = float(np.sqrt(T / cfg.m_tx))
    elif side == "rx":
        samples = rrc_pulse(t, cfg.rolloff_rx, T)
        scale = float(np.sqrt(T / cfg.m_rx))
    else:
        raise ValueError(f"side must be 'tx' or 'rx', got {side!r}")
    return SampledPulse(samples=np.asarray(samples), spacing=spacing, center_index=n_tot, scale=scale)


def build_filter_matrix(pulse: SampledPulse, cfg: SystemConfig) -> np.ndarray:
    """Banded Toeplitz filter matrix of shape (N_tot, 3*N_tot).

    Row i holds ``scale * pulse`` starting at column i.
    """
    n_tot = cfg.n_tot
    taps = pulse.scale * np.asarray(pulse.samples, dtype=float)
    if taps.shape != (2 * n_tot + 1,):
        raise DimensionError(
            f"pulse has {taps.size} taps, expected 2*N_tot+1 = {2 * n_tot + 1}"
        )
    mat = np.zeros((n_tot, 3 * n_tot))
    for i in range(n_tot):
        mat[i, i : i + taps.size] = taps
    return mat


def build_upsampler(cfg: SystemConfig) -> np.ndarray:
    """0/1 matrix U (N_tot x N_q) with U[M(n-1)+1, n] = 1 (1-based)."""
    U = np.zeros((cfg.n_tot, cfg.n_q))
    cols = np.arange(cfg.n_q)
    U[cfg.upsampling * cols, cols] = 1.0
    return U


def combined_waveform(lags, cfg: SystemConfig, refine: int | None = None, span: float = 32.0):
    """v(tau) = (g_Tx * g_Rx)(tau) by a Riemann sum on spacing T/(M_Rx*refine).

    Both pulses are the unit-energy continuous-time responses; the
    integration window is |t| <= span*T.
    """
    refine = cfg.refine if refine is None else refine
    T = cfg.symbol_period
    h = T / (cfg.m_rx * refine)
    n_half = int(round(span * T / h))
    t = np.arange(-n_half, n_half + 1) * h
    g_tx = rc_pulse(t, cfg.rolloff_tx, T)
    lags = np.atleast_1d(np.asarray(lags, dtype=float))
    out = np.empty(lags.shape)
    for k, tau in enumerate(lags):
        out[k] = h * np.dot(g_tx, rrc_pulse(tau - t, cfg.rolloff_rx, T))
    return out


def build_combined_v(cfg: SystemConfig, refine: int | None = None) -> np.ndarray:
    """Symmetric Toeplitz V with V[i, j] = v((j - i) T / M_Rx)."""
    n_tot = cfg.n_tot
    lags = np.arange(n_tot) * cfg.symbol_period / cfg.m_rx
    v = combined_waveform(lags, cfg, refine)
    idx = np.abs(np.subtract.outer(np.arange(n_tot), np.arange(n_tot)))
    return v[idx]


def build_w(cfg: SystemConfig, g_tx_mat: np.ndarray, u_mat: np.ndarray) -> np.ndarray:
    """W = G_Tx^T U, mapping precoder coefficients to the transmit waveform."""
    if g_tx_mat.shape != (cfg.n_tot, 3 * cfg.n_tot) or u_mat.shape != (cfg.n_tot, cfg.n_q):
        raise DimensionError(
            f"G_Tx {g_tx_mat.shape} / U {u_mat.shape} do not match N_tot={cfg.n_tot}, N_q={cfg.n_q}"
        )
    return g_tx_mat.T @ u_mat


def noise_covariance(cfg: SystemConfig, g_rx_mat: np.ndarray) -> np.ndarray:
    """Per-real-dimension covariance of the filtered noise, sigma_r^2 G_Rx G_Rx^T."""
    cov = cfg.noise_var_per_dim * (g_rx_mat @ g_rx_mat.T)
    return 0.5 * (cov + cov.T)


@dataclass(frozen=True)
class SignalOperators:
    """Dense operators for one configuration. Arrays are read-only."""

    cfg: SystemConfig
    g_tx_mat: np.ndarray
    g_rx_mat: np.ndarray
    v_mat: np.ndarray
    u_mat: np.ndarray
    w_mat: np.ndarray
    noise_cov: np.ndarray

    def __post_init__(self) -> None:
        for name in ("g_tx_mat", "g_rx_mat", "v_mat", "u_mat", "w_mat", "noise_cov"):
            getattr(self, name).setflags(write=False)

    @property
    def vu(self) -> np.ndarray:
        return self.v_mat @ self.u_mat


def build_operators(cfg: SystemConfig) -> SignalOperators:
    g_tx = build_filter_matrix(sample_pulse(cfg, "tx"), cfg)
    g_rx = build_filter_matrix(sample_pulse(cfg, "rx"), cfg)
    u = build_upsampler(cfg)
    return SignalOperators(
        cfg=cfg,
        g_tx_mat=g_tx,
        g_rx_mat=g_rx,
        v_mat=build_combined_v(cfg),
        u_mat=u,
        w_mat=build_w(cfg, g_tx, u),
        noise_cov=noise_covariance(cfg, g_rx),
    )
