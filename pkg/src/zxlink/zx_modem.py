"""Time-instance zero-crossing (TI ZX) modulation.

Symbols are numbered 1..R with R = M_Rx + 1, in zero-crossing-assignment
order: symbol 1 has no zero crossing, symbol 2 crosses in interval M_Rx,
..., symbol R crosses in interval 1. A codeword of M_Rx samples is generated
relative to the last sample of the previous codeword (or the pilot).

For M_Rx = 2 bits are carried by pairs of symbols ("super-symbols"): 8 of the
9 pairs carry 3 bits, the pair (2, 3) is never transmitted.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import BitLengthError, DimensionError, InvalidSymbolError

# Super-symbol order of the M_Rx = 2 integration-region table; index k carries
# the k-th 3-bit reflected Gray label.
SUPER_SYMBOLS_MRX2: tuple[tuple[int, int], ...] = (
    (1, 1), (1, 2), (1, 3), (2, 1), (2, 2), (3, 2), (3, 1), (3, 3),
)


@dataclass(frozen=True)
class ZxAlphabet:
    """Symbol alphabet for a given oversampling factor."""

    m_rx: int

    def __post_init__(self) -> None:
        if self.m_rx < 1:
            raise ValueError("m_rx must be positive")

    @property
    def size(self) -> int:
        return self.m_rx + 1

    @property
    def symbols(self) -> tuple[int, ...]:
        return tuple(range(1, self.size + 1))

    def crossing_interval(self, symbol: int) -> int | None:
        """1-based interval holding the zero crossing, or None for symbol 1."""
        self._check(symbol)
        return None if symbol == 1 else self.m_rx - symbol + 2

    def codeword(self, symbol: int, prev: int) -> np.ndarray:
        """The M_Rx samples emitted for ``symbol`` after level ``prev``."""
        interval = self.crossing_interval(symbol)
        if interval is None:
            return np.full(self.m_rx, prev, dtype=np.int8)
        out = np.full(self.m_rx, -prev, dtype=np.int8)
        out[: interval - 1] = prev
        return out

    def candidates(self, prev: int) -> np.ndarray:
        """R x (M_Rx + 1) matrix of [prev, codeword] rows in symbol order."""
        return _candidate_table(self.m_rx, int(prev)).copy()

    @property
    def bits_per_symbol(self) -> float:
        if self.m_rx == 2:
            return 1.5
        k = self.size.bit_length() - 1
        if 1 << k != self.size:
            raise BitLengthError(f"no Gray code for alphabet size {self.size}")
        return float(k)

    def _check(self, symbol: int) -> None:
        if isinstance(symbol, bool) or int(symbol) != symbol or not 1 <= symbol <= self.size:
            raise InvalidSymbolError(f"symbol id {symbol!r} outside 1..{self.size}")

    def gray_labels(self) -> dict[int, str]:
        """Bit label per symbol (only when R is a power of two)."""
        k = int(self.bits_per_symbol)
        return {s: format(_gray(s - 1), f"0{k}b") for s in self.symbols}


@lru_cache(maxsize=None)
def _candidate_table(m_rx: int, prev: int) -> np.ndarray:
    alphabet = ZxAlphabet(m_rx)
    rows = [np.concatenate(([prev], alphabet.codeword(s, prev))) for s in alphabet.symbols]
    table = np.array(rows, dtype=np.int8)
    table.setflags(write=False)
    return table


def _gray(k: int) -> int:
    return k ^ (k >> 1)


def _inverse_gray(g: int) -> int:
    k = 0
    while g:
        k ^= g
        g >>= 1
    return k


@dataclass(frozen=True)
class ZxFrame:
    """A mapped block: pilot level, the N*M_Rx codeword samples, source symbols."""

    pilot: int
    samples: np.ndarray
    symbols: tuple[int, ...]

    @property
    def full(self) -> np.ndarray:
        """Pilot followed by the samples (length N*M_Rx + 1)."""
        return np.concatenate(([self.pilot], self.samples)).astype(np.int8)


def parse_symbol(token: str | int) -> int:
    """Accept ``3``, ``"3"`` or ``"b3"``."""
    if isinstance(token, (int, np.integer)):
        return int(token)
    text = str(token).strip().lower()
    if text.startswith("b"):
        text = text[1:]
    try:
        return int(text)
    except ValueError:
        raise InvalidSymbolError(f"cannot parse symbol {token!r}") from None


def forward_map(symbols: Sequence[int], pilot: int, alphabet: ZxAlphabet) -> ZxFrame:
    """Concatenate the codewords of ``symbols`` starting from ``pilot``."""
    if pilot not in (1, -1):
        raise ValueError("pilot must be +1 or -1")
    symbols = tuple(int(s) for s in symbols)
    if not symbols:
        raise InvalidSymbolError("symbol list is empty")
    level = pilot
    chunks = []
    for s in symbols:
        cw = alphabet.codeword(s, level)
        chunks.append(cw)
        level = int(cw[-1])
    return ZxFrame(pilot=pilot, samples=np.concatenate(chunks), symbols=symbols)


def hamming_detect(segment, prev_level: int | None = None, alphabet: ZxAlphabet | None = None) -> int:
    """Minimum-Hamming-distance symbol for one received segment.

    ``segment`` holds M_Rx + 1 signs, the first being the reference sample.
    Candidates are ``[prev_level, codeword]`` for every symbol; ties go to the
    lowest symbol id. ``prev_level`` defaults to ``segment[0]`` and the
    alphabet to the one implied by the segment length.
    """
    seg = np.asarray(segment)
    if alphabet is None:
        alphabet = ZxAlphabet(seg.size - 1)
    if seg.shape != (alphabet.m_rx + 1,):
        raise DimensionError(f"segment must have {alphabet.m_rx + 1} samples")
    prev = int(seg[0]) if prev_level is None else int(prev_level)
    dist = np.count_nonzero(_candidate_table(alphabet.m_rx, prev) != seg, axis=1)
    return int(np.argmin(dist)) + 1


def detect_sequence(received_signs, alphabet: ZxAlphabet) -> list[int]:
    """Segment a received block and detect each symbol.

    The first sample is the (received) pilot. Segment j is
    ``z[j*M : (j+1)*M + 1]``, so the previous received sample acts as the
    reference level.
    """
    z = np.asarray(received_signs)
    m = alphabet.m_rx
    if z.ndim != 1 or z.size < m + 1 or (z.size - 1) % m:
        raise DimensionError(f"received length {z.size} is not N*{m} + 1")
    return [hamming_detect(z[j * m : (j + 1) * m + 1], alphabet=alphabet) for j in range((z.size - 1) // m)]


def detect_blocks(z: np.ndarray, m_rx: int) -> np.ndarray:
    """Vectorized :func:`detect_sequence` over rows of a (B, N*M_Rx+1) sign array."""
    z = np.asarray(z)
    n = (z.shape[1] - 1) // m_rx
    pos = _candidate_table(m_rx, 1).astype(np.int8)
    out = np.empty((z.shape[0], n), dtype=np.int64)
    for j in range(n):
        seg = z[:, j * m_rx : (j + 1) * m_rx + 1]
        # candidates for a negative reference are the negated positive ones
        flip = np.where(seg[:, :1] < 0, -1, 1).astype(np.int8)
        dist = np.count_nonzero((seg * flip)[:, None, :] != pos[None, :, :], axis=2)
        out[:, j] = np.argmin(dist, axis=1) + 1
    return out


# --- block (super-symbol) alphabets -------------------------------------------------


def block_alphabet(m_rx: int, block_len: int) -> tuple[tuple[int, ...], ...]:
    """Ordered list of symbol tuples used as one bound/bit unit.

    ``block_len == 1`` gives the single symbols; (M_Rx=2, block_len=2) gives
    the 8 used super-symbols; anything else enumerates all tuples
    lexicographically.
    """
    if block_len == 1:
        return tuple((s,) for s in range(1, m_rx + 2))
    if m_rx == 2 and block_len == 2:
        return SUPER_SYMBOLS_MRX2
    return tuple(itertools.product(range(1, m_rx + 2), repeat=block_len))


def block_codewords(m_rx: int, block_len: int, pilot: int = 1) -> np.ndarray:
    """Rows ``[pilot, samples]`` for every entry of :func:`block_alphabet`."""
    alphabet = ZxAlphabet(m_rx)
    return np.array(
        [forward_map(b, pilot, alphabet).full for b in block_alphabet(m_rx, block_len)],
        dtype=np.int8,
    )


def _nearest_super_symbol(pair: tuple[int, int]) -> int:
    """Index of the used M_Rx=2 super-symbol closest to ``pair`` (codeword Hamming)."""
    target = forward_map(pair, 1, ZxAlphabet(2)).full
    dist = np.count_nonzero(block_codewords(2, 2) != target, axis=1)
    return int(np.argmin(dist))


# --- Gray coding --------------------------------------------------------------------


def gray_encode(bits: Sequence[int] | str, m_rx: int) -> list[int]:
    """Map a bit string to symbol ids.

    For R = 2^k, each k-bit group selects the symbol whose reflected Gray
    label it is. For M_Rx = 2 each 3-bit group selects a super-symbol and
    emits its two symbols.
    """
    b = _as_bits(bits)
    if m_rx == 2:
        if b.size % 3:
            raise BitLengthError("M_Rx=2 needs a multiple of 3 bits")
        out: list[int] = []
        for group in b.reshape(-1, 3):
            out.extend(SUPER_SYMBOLS_MRX2[_inverse_gray(_pack(group))])
        return out
    k = int(ZxAlphabet(m_rx).bits_per_symbol)
    if b.size % k:
        raise BitLengthError(f"M_Rx={m_rx} needs a multiple of {k} bits")
    return [_inverse_gray(_pack(group)) + 1 for group in b.reshape(-1, k)]


def gray_decode(symbols: Sequence[int], m_rx: int) -> list[int]:
    """Inverse of :func:`gray_encode`.

    For M_Rx = 2 the unused pair (2, 3) decodes as its nearest used
    super-symbol.
    """
    syms = [int(s) for s in symbols]
    alphabet = ZxAlphabet(m_rx)
    for s in syms:
        alphabet._check(s)
    if m_rx == 2:
        if len(syms) % 2:
            raise BitLengthError("M_Rx=2 decodes symbols in pairs")
        out: list[int] = []
        for pair in zip(syms[0::2], syms[1::2]):
            out.extend(_unpack(_gray(super_symbol_index(pair)), 3))
        return out
    k = int(alphabet.bits_per_symbol)
    out = []
    for s in syms:
        out.extend(_unpack(_gray(s - 1), k))
    return out


def super_symbol_index(pair: tuple[int, int]) -> int:
    """0-based index of an M_Rx=2 symbol pair among the 8 used super-symbols."""
    pair = (int(pair[0]), int(pair[1]))
    try:
        return SUPER_SYMBOLS_MRX2.index(pair)
    except ValueError:
        return _nearest_super_symbol(pair)


def bit_tables(m_rx: int) -> tuple[np.ndarray, np.ndarray, int, int]:
    """Lookup tables for vectorized Gray coding.

    Returns ``(enc, dec, bits_per_unit, symbols_per_unit)`` where ``enc[v]``
    lists the symbols for the bit group with integer value ``v`` and
    ``dec[code]`` gives the integer bit value for a detected unit, with
    ``code`` the base-R index of the detected symbols.
    """
    if m_rx == 2:
        enc = np.array([SUPER_SYMBOLS_MRX2[_inverse_gray(v)] for v in range(8)])
        dec = np.array(
            [_gray(super_symbol_index((a, b))) for a in (1, 2, 3) for b in (1, 2, 3)]
        )
        return enc, dec, 3, 2
    k = int(ZxAlphabet(m_rx).bits_per_symbol)
    enc = np.array([[_inverse_gray(v) + 1] for v in range(1 << k)])
    dec = np.array([_gray(s) for s in range(1 << k)])
    return enc, dec, k, 1


def _as_bits(bits) -> np.ndarray:
    if isinstance(bits, str):
        bits = [int(c) for c in bits]
    arr = np.asarray(bits, dtype=np.int64).ravel()
    if np.any((arr != 0) & (arr != 1)):
        raise BitLengthError("bits must be 0 or 1")
    return arr


def _pack(group) -> int:
    v = 0
    for bit in group:
        v = (v << 1) | int(bit)
    return v


def _unpack(value: int, width: int) -> list[int]:
    return [(value >> (width - 1 - i)) & 1 for i in range(width)]
