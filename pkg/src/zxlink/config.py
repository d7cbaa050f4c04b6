"""Scenario parameters shared by every stage of the link."""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field

from .errors import ConfigError


class NoiseSplit(str, enum.Enum):
    """How the complex noise variance is distributed over I and Q.

    ``FULL`` gives each real dimension the whole ``noise_variance``; ``HALF``
    gives each real dimension ``noise_variance / 2``.
    """

    FULL = "per-real-dim-full"
    HALF = "per-real-dim-half"


@dataclass(frozen=True)
class SystemConfig:
    """Parameters of one downlink scenario.

    Times are in units of the symbol period ``symbol_period`` (T).

    Attributes:
        n_symbols: Symbols per block, N.
        m_rx: Receive oversampling factor, M_Rx.
        m_tx: Signaling-rate factor, M_Tx. Must divide ``m_rx``.
        n_users: Single-antenna users, N_u.
        n_tx_antennas: Base-station antennas, N_t (>= ``n_users``).
        rolloff_tx: Roll-off of the raised-cosine transmit filter.
        rolloff_rx: Roll-off of the root-raised-cosine receive filter.
        symbol_period: T.
        noise_variance: sigma_n^2.
        beamforming_gain: Real gain beta in the QOS constraints.
        noise_split: Per-real-dimension noise convention.
        tx_scale_exact_energy: Renormalize the sampled transmit pulse to
            exactly unit norm instead of using a_Tx = sqrt(T / M_Tx).
        refine: Grid refinement used to compute the combined waveform v(t).
    """

    n_symbols: int = 1
    m_rx: int = 3
    m_tx: int = 3
    n_users: int = 1
    n_tx_antennas: int = 1
    rolloff_tx: float = 0.22
    rolloff_rx: float = 0.22
    symbol_period: float = 1.0
    noise_variance: float = 1.0
    beamforming_gain: float = 1.0
    noise_split: NoiseSplit = NoiseSplit.FULL
    tx_scale_exact_energy: bool = False
    refine: int = field(default=64)

    def __post_init__(self) -> None:
        for name in ("n_symbols", "m_rx", "m_tx", "n_users", "n_tx_antennas", "refine"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        for name in ("rolloff_tx", "rolloff_rx"):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                raise ConfigError(f"{name} must lie in (0, 1], got {value!r}")
        for name in ("symbol_period", "beamforming_gain"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        # zero noise is allowed: it is the noise-free verification mode
        if not self.noise_variance >= 0:
            raise ConfigError("noise_variance must be nonnegative")
        if self.m_rx % self.m_tx:
            raise ConfigError(f"m_tx={self.m_tx} must divide m_rx={self.m_rx}")
        if self.n_tx_antennas < self.n_users:
            raise ConfigError("zero-forcing needs n_tx_antennas >= n_users")
        if self.refine < 8:
            raise ConfigError("refine must be at least 8")
        try:
            object.__setattr__(self, "noise_split", NoiseSplit(self.noise_split))
        except ValueError as exc:
            raise ConfigError(f"unknown noise_split {self.noise_split!r}") from exc

    @property
    def upsampling(self) -> int:
        """M = M_Rx / M_Tx."""
        return self.m_rx // self.m_tx

    @property
    def n_tot(self) -> int:
        """Received samples per block including the pilot, N*M_Rx + 1."""
        return self.n_symbols * self.m_rx + 1

    @property
    def n_q(self) -> int:
        """Precoder coefficients per block, M_Tx*N + 1."""
        return self.m_tx * self.n_symbols + 1

    @property
    def noise_var_per_dim(self) -> float:
        if self.noise_split is NoiseSplit.HALF:
            return self.noise_variance / 2.0
        return self.noise_variance

    def as_dict(self) -> dict:
        out = asdict(self)
        out["noise_split"] = self.noise_split.value
        return out


def paper_config(m_rx: int, **overrides) -> SystemConfig:
    """Single-antenna setup of the numerical study: N=1 for M_Rx=3, N=2 for M_Rx=2."""
    n_symbols = {3: 1, 2: 2}.get(m_rx, 1)
    params = dict(n_symbols=n_symbols, m_rx=m_rx, m_tx=m_rx)
    params.update(overrides)
    return SystemConfig(**params)
