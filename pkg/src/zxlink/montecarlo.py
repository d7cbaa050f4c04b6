"""Seeded end-to-end link simulation.

Every chunk of blocks draws from its own counter-based stream,
``Philox(SeedSequence(seed, spawn_key=(gamma_index, chunk)))``, so results
do not depend on how chunks are scheduled over workers.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .config import SystemConfig
from .errors import ConfigError
from .precoding import QosCache, zf_precoder
from .signal_chain import SignalOperators, build_operators
from .zx_modem import ZxAlphabet, bit_tables, detect_blocks, forward_map

CHUNK_BLOCKS = 4096
RNG_NAME = "numpy-Philox4x64:SeedSequence(seed,spawn_key=(gamma_index,chunk))"

Channel = Union[str, np.ndarray]


def q1_quantize(y):
    """sign(Re y) + i sign(Im y), with sign(0) = +1."""
    y = np.asarray(y)
    re = np.where(np.real(y) >= 0, 1.0, -1.0)
    im = np.where(np.imag(y) >= 0, 1.0, -1.0)
    return re + 1j * im


@dataclass(frozen=True)
class McConfig:
    """One Monte Carlo point.

    ``channel`` is ``"identity"``, ``"iid-gaussian"`` (drawn once from the
    seed) or a fixed complex N_u x N_t matrix. With ``known_pilot`` the
    receiver replaces the received pilot sample by the transmitted one.
    """

    system: SystemConfig
    gamma: float
    n_blocks: int
    seed: int = 0
    channel: Channel = "identity"
    known_pilot: bool = False
    chunk_blocks: int = CHUNK_BLOCKS

    def __post_init__(self) -> None:
        if isinstance(self.n_blocks, bool) or int(self.n_blocks) != self.n_blocks or self.n_blocks < 1:
            raise ConfigError("n_blocks must be a positive integer")
        if not self.gamma > 0:
            raise ConfigError("gamma must be positive")
        if self.chunk_blocks < 1:
            raise ConfigError("chunk_blocks must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must fit in 64 bits")
        _, _, _, per_unit = bit_tables(self.system.m_rx)
        if self.system.n_symbols % per_unit:
            raise ConfigError(
                f"M_Rx={self.system.m_rx} carries bits over {per_unit} symbols; n_symbols must be a multiple"
            )
        if isinstance(self.channel, str) and self.channel not in ("identity", "iid-gaussian"):
            raise ConfigError(f"unknown channel {self.channel!r}")


@dataclass(frozen=True)
class McResult:
    gamma: float
    ser: float
    ber: float
    symbol_errors: int
    symbols: int
    bit_errors: int
    bits: int
    ci95_ser: float
    pilot_errors: int = field(default=0, compare=False)

    @classmethod
    def from_counts(cls, gamma, symbol_errors, symbols, bit_errors, bits, pilot_errors=0) -> "McResult":
        ser = symbol_errors / symbols
        return cls(
            gamma=float(gamma),
            ser=ser,
            ber=bit_errors / bits,
            symbol_errors=int(symbol_errors),
            symbols=int(symbols),
            bit_errors=int(bit_errors),
            bits=int(bits),
            ci95_ser=1.96 * float(np.sqrt(ser * (1.0 - ser) / symbols)),
            pilot_errors=int(pilot_errors),
        )


def channel_matrix(cfg: McConfig) -> np.ndarray:
    n_u, n_t = cfg.system.n_users, cfg.system.n_tx_antennas
    if isinstance(cfg.channel, str):
        if cfg.channel == "identity":
            return np.eye(n_u, n_t, dtype=complex)
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(cfg.seed), spawn_key=(2**32 - 1,))))
        return (rng.standard_normal((n_u, n_t)) + 1j * rng.standard_normal((n_u, n_t))) / np.sqrt(2.0)
    H = np.atleast_2d(np.asarray(cfg.channel, dtype=complex))
    if H.shape != (n_u, n_t):
        raise ConfigError(f"channel is {H.shape}, expected ({n_u}, {n_t})")
    return H


class _Link:
    """Per-configuration state shared by all chunks: operators, channel, QP cache."""

    def __init__(self, cfg: McConfig, ops: SignalOperators | None = None, cache: QosCache | None = None):
        sysc = cfg.system
        self.ops = build_operators(sysc) if ops is None else ops
        self.cache = QosCache(self.ops) if cache is None else cache
        self.H = channel_matrix(cfg)
        self.p_sp, self.c_zf = zf_precoder(self.H)
        self.mix = self.H @ self.p_sp  # c_zf * I up to roundoff
        self.enc, self.dec, self.bits_per_unit, self.per_unit = bit_tables(sysc.m_rx)
        self.alphabet = ZxAlphabet(sysc.m_rx)
        self.units = sysc.n_symbols // self.per_unit
        self.m_rx = sysc.m_rx
        self.n_tot = sysc.n_tot
        self.sigma_r = float(np.sqrt(sysc.noise_var_per_dim))
        self.g_rx = self.ops.g_rx_mat
        self.vu = self.ops.vu

    def waveform(self, symbols: tuple, pilot: int, gamma: float) -> np.ndarray:
        """Noise-free received samples V U p for one component frame (before the channel)."""
        frame = forward_map(symbols, pilot, self.alphabet).full
        sol = self.cache.get(frame, gamma, self.c_zf)
        return self.vu @ sol.p


def _simulate(link: _Link, cfg: McConfig, rng: np.random.Generator, first_block: int, n_blocks: int, gamma: float):
    """Simulate ``n_blocks`` blocks; returns symbol and bit-value arrays.

    Shapes: symbols (B, N_u, 2, N), values (B, N_u, 2, units); axis 2 is I/Q.
    """
    n_u = cfg.system.n_users
    B = n_blocks
    values = rng.integers(0, 1 << link.bits_per_unit, size=(B, n_u, 2, link.units))
    noise = rng.standard_normal((B, n_u, 2, 3 * link.n_tot))

    symbols = link.enc[values].reshape(B, n_u, 2, -1)
    block_idx = first_block + np.arange(B)
    pilot_i = np.where(block_idx % 2 == 0, 1, -1)
    pilots = np.stack((pilot_i, -pilot_i), axis=1)  # (B, 2)

    # noise-free component waveforms, one QP per distinct (frame, pilot)
    radix = link.alphabet.size
    codes = np.zeros(symbols.shape[:3], dtype=np.int64)
    for j in range(symbols.shape[3]):
        codes = codes * radix + (symbols[..., j] - 1)
    keys = codes * 2 + (pilots[:, None, :] < 0)
    uniq, inverse = np.unique(keys, return_inverse=True)
    table = np.empty((uniq.size, link.n_tot))
    for u, key in enumerate(uniq):
        pilot = -1 if key % 2 else 1
        code = key // 2
        syms = []
        for _ in range(symbols.shape[3]):
            syms.append(code % radix + 1)
            code //= radix
        table[u] = link.waveform(tuple(reversed(syms)), pilot, gamma)
    clean = table[inverse.reshape(keys.shape)]  # (B, N_u, 2, N_tot)

    tx = clean[:, :, 0, :] + 1j * clean[:, :, 1, :]
    rx = np.einsum("kj,bjn->bkn", link.mix, tx)
    filtered = link.sigma_r * np.einsum("nm,bkcm->bkcn", link.g_rx, noise)
    rx = rx + filtered[:, :, 0, :] + 1j * filtered[:, :, 1, :]
    z = q1_quantize(rx)
    signs = np.stack((z.real, z.imag), axis=2).astype(np.int8)  # (B, N_u, 2, N_tot)

    pilot_err = signs[..., 0] != pilots[:, None, :]
    if cfg.known_pilot:
        signs[..., 0] = np.broadcast_to(pilots[:, None, :], signs.shape[:3])
    flat = signs.reshape(-1, link.n_tot)
    detected = detect_blocks(flat, link.m_rx).reshape(symbols.shape)

    det_units = detected.reshape(B, n_u, 2, link.units, link.per_unit)
    unit_codes = np.zeros(det_units.shape[:4], dtype=np.int64)
    for j in range(link.per_unit):
        unit_codes = unit_codes * radix + (det_units[..., j] - 1)
    det_values = link.dec[unit_codes]
    return symbols, detected, values, det_values, pilot_err


def _popcount(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.uint64)
    count = np.zeros(x.shape, dtype=np.int64)
    while np.any(x):
        count += (x & np.uint64(1)).astype(np.int64)
        x = x >> np.uint64(1)
    return count


def _chunk_rng(seed: int, gamma_index: int, chunk: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(gamma_index, chunk))))


def run_block(cfg: McConfig, rng: np.random.Generator, block_index: int = 0, link: _Link | None = None):
    """One block: (tx symbols, detected symbols, tx bits, detected bits).

    Symbols are nested per user and component (I, Q); bits are flat lists.
    """
    link = _Link(cfg) if link is None else link
    syms, det, vals, det_vals, _ = _simulate(link, cfg, rng, block_index, 1, cfg.gamma)
    width = link.bits_per_unit

    def bits(v):
        return [(int(x) >> (width - 1 - i)) & 1 for x in v.ravel() for i in range(width)]

    return syms[0].tolist(), det[0].tolist(), bits(vals[0]), bits(det_vals[0])


def _count_chunk(link: _Link, cfg: McConfig, gamma_index: int, chunk: int):
    first = chunk * cfg.chunk_blocks
    n = min(cfg.chunk_blocks, cfg.n_blocks - first)
    rng = _chunk_rng(cfg.seed, gamma_index, chunk)
    syms, det, vals, det_vals, pilot_err = _simulate(link, cfg, rng, first, n, cfg.gamma)
    sym_err = int(np.count_nonzero(syms != det))
    bit_err = int(_popcount(vals ^ det_vals).sum())
    return sym_err, syms.size, bit_err, vals.size * link.bits_per_unit, int(np.count_nonzero(pilot_err))


def default_threads() -> int:
    env = os.environ.get("ZX_THREADS")
    if env:
        try:
            value = int(env)
        except ValueError:
            raise ConfigError(f"ZX_THREADS must be an integer, got {env!r}") from None
        if value < 1:
            raise ConfigError("ZX_THREADS must be positive")
        return value
    return os.cpu_count() or 1


def run_point(cfg: McConfig, gamma_index: int = 0, threads: int | None = None, link: _Link | None = None) -> McResult:
    """Simulate ``cfg.n_blocks`` blocks at ``cfg.gamma``.

    Counts are summed in chunk order, so the result is identical for any
    number of worker threads.
    """
    link = _Link(cfg) if link is None else link
    n_chunks = -(-cfg.n_blocks // cfg.chunk_blocks)
    threads = default_threads() if threads is None else threads
    if threads > 1 and n_chunks > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda c: _count_chunk(link, cfg, gamma_index, c), range(n_chunks)))
    else:
        parts = [_count_chunk(link, cfg, gamma_index, c) for c in range(n_chunks)]
    totals = np.sum(np.array(parts, dtype=np.int64), axis=0)
    return McResult.from_counts(cfg.gamma, *totals.tolist())


def run_sweep(template: McConfig, gammas: Sequence[float], threads: int | None = None, progress=None) -> list[McResult]:
    """One :class:`McResult` per gamma; point i uses substreams (seed, i, chunk)."""
    gammas = [float(g) for g in gammas]
    if not gammas:
        raise ValueError("gamma grid is empty")
    link = _Link(template)
    out = []
    for i, g in enumerate(gammas):
        cfg = McConfig(
            system=template.system,
            gamma=g,
            n_blocks=template.n_blocks,
            seed=template.seed,
            channel=template.channel,
            known_pilot=template.known_pilot,
            chunk_blocks=template.chunk_blocks,
        )
        out.append(run_point(cfg, gamma_index=i, threads=threads, link=link))
        if progress is not None:
            progress(i + 1, len(gammas), out[-1])
    return out
