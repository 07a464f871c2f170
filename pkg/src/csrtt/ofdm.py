"""Single-symbol OFDM grid: subcarrier mapping, comb interleave and transforms.

No cyclic prefix is simulated; the channel is applied as a circular
convolution over one symbol, which is what a CP realizes physically.
Both transforms use 1/sqrt(K) scaling so energy is preserved either way.
"""

from dataclasses import dataclass, replace

import numpy as np

from .errors import GridOverflow, InvalidParams, LengthMismatch

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class OfdmConfig:
    fft_size: int = 1536
    scs: float = 30e3
    sample_rate: float = 46.08e6
    carrier: float = 3.69e9  # metadata only
    first_bin: int = 0
    comb: int = 1
    comb_offset: int = 0

    def __post_init__(self):
        if self.fft_size < 1:
            raise InvalidParams("fft_size must be positive")
        if self.comb not in (1, 2):
            raise InvalidParams(f"comb must be 1 or 2, got {self.comb}")
        if not 0 <= self.comb_offset < self.comb:
            raise InvalidParams(f"comb_offset {self.comb_offset} invalid for comb {self.comb}")
        if not 0 <= self.first_bin < self.fft_size:
            raise InvalidParams("first_bin outside the FFT grid")
        if abs(self.sample_rate - self.fft_size * self.scs) > 1e-6 * self.sample_rate:
            raise InvalidParams(
                f"sample_rate {self.sample_rate} != fft_size*scs = {self.fft_size * self.scs}"
            )

    @property
    def sample_distance(self) -> float:
        """One-way range spanned by one round-trip sample, c/(2 f_s)."""
        return SPEED_OF_LIGHT / (2.0 * self.sample_rate)

    def with_comb(self, comb: int, offset: int = 0) -> "OfdmConfig":
        return replace(self, comb=comb, comb_offset=offset)

    def occupied_bins(self, count: int) -> np.ndarray:
        """Bin indices used by ``count`` mapped samples, in mapping order."""
        idx = self.first_bin + self.comb * np.arange(count) + self.comb_offset
        if count and idx[-1] >= self.fft_size:
            raise GridOverflow(
                f"{count} samples with comb {self.comb} from bin {self.first_bin} "
                f"do not fit in {self.fft_size} bins"
            )
        return idx


@dataclass
class FreqGrid:
    bins: np.ndarray
    config: OfdmConfig
    occupied: np.ndarray  # bin indices carrying signal

    def __post_init__(self):
        if len(self.bins) != self.config.fft_size:
            raise LengthMismatch("grid length differs from fft_size")

    def __add__(self, other: "FreqGrid") -> "FreqGrid":
        occ = np.union1d(self.occupied, other.occupied)
        return FreqGrid(self.bins + other.bins, self.config, occ)


def map_to_grid(s: np.ndarray, cfg: OfdmConfig) -> FreqGrid:
    s = np.asarray(s, dtype=complex)
    idx = cfg.occupied_bins(len(s))
    bins = np.zeros(cfg.fft_size, dtype=complex)
    bins[idx] = s
    return FreqGrid(bins, cfg, idx)


def extract_occupied(g: FreqGrid, count: int, cfg: OfdmConfig = None) -> np.ndarray:
    """Read back ``count`` samples in mapping order.

    ``cfg`` selects the comb offset to read (defaults to the grid's own config),
    which is how each user is separated on a comb-multiplexed grid.
    """
    cfg = cfg or g.config
    if cfg.fft_size != len(g.bins):
        raise LengthMismatch("config fft_size differs from grid length")
    return g.bins[cfg.occupied_bins(count)].copy()


def to_time(g: FreqGrid) -> np.ndarray:
    return np.fft.ifft(g.bins, norm="ortho")


def to_freq(t: np.ndarray, cfg: OfdmConfig) -> FreqGrid:
    t = np.asarray(t, dtype=complex)
    if len(t) != cfg.fft_size:
        raise LengthMismatch(f"time signal has {len(t)} samples, expected {cfg.fft_size}")
    return FreqGrid(np.fft.fft(t, norm="ortho"), cfg, np.arange(cfg.fft_size))
