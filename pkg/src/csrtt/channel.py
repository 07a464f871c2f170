"""Propagation delay, multipath, AWGN and the UE/gNB timing relationship.

Timing is carried in fractional f_s samples throughout; seconds and meters
appear only at the API edges.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParams, ZeroEnergy
from .ofdm import SPEED_OF_LIGHT, FreqGrid, OfdmConfig


@dataclass(frozen=True)
class ChannelSpec:
    taps: tuple = ((0.0, 1.0 + 0j),)  # (delay seconds, complex gain)
    snr_db: float = float("inf")
    hw_offset: float = 0.0  # seconds, calibrated constant

    def __post_init__(self):
        taps = tuple((float(d), complex(g)) for d, g in self.taps)
        object.__setattr__(self, "taps", taps)
        if not taps:
            raise InvalidParams("channel needs at least one tap")
        delays = [d for d, _ in taps]
        if min(delays) < 0:
            raise InvalidParams("tap delays must be >= 0")
        if delays[0] != min(delays):
            raise InvalidParams("first tap must be the minimum-delay tap")

    def frequency_response(self, cfg: OfdmConfig) -> np.ndarray:
        k = np.arange(cfg.fft_size)
        h = np.zeros(cfg.fft_size, dtype=complex)
        for delay, gain in self.taps:
            h += gain * np.exp(-2j * np.pi * k * delay * cfg.sample_rate / cfg.fft_size)
        return h


@dataclass(frozen=True)
class TimingState:
    """Ground-truth timing of one UE, all in f_s samples.

    ``ue_sync_offset`` is where the UE believes the downlink symbol starts,
    measured from the gNB transmit instant. It leads the true first arrival
    by ``p_d_true``.
    """

    tau: float
    ta: int
    p_d_true: float = 0.0
    ue_sync_offset: float = field(default=None)

    def __post_init__(self):
        if self.tau < 0:
            raise InvalidParams("tau must be >= 0")
        if self.ta < 0:
            raise InvalidParams("ta must be >= 0")
        if self.ue_sync_offset is None:
            object.__setattr__(self, "ue_sync_offset", self.tau - self.p_d_true)
        elif abs(self.ue_sync_offset - (self.tau - self.p_d_true)) > 1e-9:
            raise InvalidParams("ue_sync_offset must equal tau - p_d_true")

    @property
    def ul_arrival(self) -> float:
        """Uplink arrival at the gNB relative to its own symbol start."""
        return self.ue_sync_offset - self.ta + self.tau


def propagation_delay(distance_m: float, cfg: OfdmConfig) -> float:
    if distance_m < 0:
        raise InvalidParams("distance must be >= 0")
    return distance_m * cfg.sample_rate / SPEED_OF_LIGHT


def apply_channel(g: FreqGrid, spec: ChannelSpec, extra_delay: float = 0.0) -> FreqGrid:
    """Multipath response plus a bulk delay of ``extra_delay + hw_offset*f_s`` samples."""
    cfg = g.config
    k = np.arange(cfg.fft_size)
    total = extra_delay + spec.hw_offset * cfg.sample_rate
    ramp = np.exp(-2j * np.pi * k * total / cfg.fft_size)
    return FreqGrid(g.bins * spec.frequency_response(cfg) * ramp, cfg, g.occupied)


def add_awgn(g: FreqGrid, snr_db: float, seed=None) -> FreqGrid:
    """Circular Gaussian noise on all K bins, SNR referenced to occupied-bin power.

    ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    if np.isinf(snr_db) and snr_db > 0:
        return FreqGrid(g.bins.copy(), g.config, g.occupied)
    power = np.mean(np.abs(g.bins[g.occupied]) ** 2) if len(g.occupied) else 0.0
    if power <= 0:
        raise ZeroEnergy("cannot set SNR for a grid with no occupied-bin energy")
    rng = np.random.default_rng(seed)
    sigma2 = power / 10 ** (snr_db / 10)
    n = g.config.fft_size
    noise = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) * np.sqrt(sigma2 / 2)
    return FreqGrid(g.bins + noise, g.config, g.occupied)


def model_ta(tau: float, granularity: int = 1, jitter: float = 0.0, seed=None) -> int:
    """Coarse RACH-style TA: 2*tau plus uniform jitter, rounded to the granularity."""
    if granularity < 1:
        raise InvalidParams("granularity must be >= 1")
    u = np.random.default_rng(seed).uniform(-jitter, jitter) if jitter > 0 else 0.0
    ta = granularity * np.floor((2.0 * tau + u) / granularity + 0.5)
    return max(int(ta), 0)
