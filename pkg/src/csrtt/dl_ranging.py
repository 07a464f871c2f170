"""UE-side downlink ranging with a simplified PRS-like pilot.

The pilot is QPSK over a gold sequence, mapped on a comb with the offset
alternating per symbol so that two consecutive symbols fill the band.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .channel import ChannelSpec
from .errors import EmptyInput, InvalidParams, LengthMismatch
from .ofdm import FreqGrid, OfdmConfig, map_to_grid
from .sequences import gold_sequence, qpsk_map

DETECTORS = ("first_peak", "argmax")


@dataclass(frozen=True)
class PrsConfig:
    num_symbols: int = 12
    comb: int = 2
    bandwidth_bins: int = 1248  # 37.44 MHz at 30 kHz
    c_init_base: int = 0x1234

    def __post_init__(self):
        if self.comb not in (1, 2):
            raise InvalidParams("PRS comb must be 1 or 2")
        if self.num_symbols < 1:
            raise InvalidParams("num_symbols must be >= 1")
        if self.bandwidth_bins < self.comb or self.bandwidth_bins % self.comb:
            raise InvalidParams("bandwidth_bins must be a positive multiple of comb")

    @property
    def bins_per_symbol(self) -> int:
        return self.bandwidth_bins // self.comb


@dataclass
class Cir:
    samples: np.ndarray
    grid_rate: float
    peak_index: int = None
    peak_value: float = None

    def __post_init__(self):
        if self.peak_index is None and len(self.samples):
            mag = np.abs(self.samples)
            self.peak_index = int(np.argmax(mag))
            self.peak_value = float(mag[self.peak_index])


def prs_generate(cfg: PrsConfig, ofdm: OfdmConfig) -> list:
    """One frequency grid per PRS symbol."""
    return list(_prs_cached(cfg, ofdm))


@lru_cache(maxsize=16)
def _prs_cached(cfg: PrsConfig, ofdm: OfdmConfig) -> tuple:
    n = cfg.bins_per_symbol
    grids = []
    for s in range(cfg.num_symbols):
        symbols = qpsk_map(gold_sequence(cfg.c_init_base + s, 2 * n))
        sym_cfg = ofdm.with_comb(cfg.comb, s % cfg.comb)
        grids.append(map_to_grid(symbols, sym_cfg))
    return tuple(grids)


def prs_channel_estimate(rx: list, ref: list) -> Cir:
    """Least-squares estimate per pilot bin, combined over symbols into one CIR.

    Bins seen by several symbols are averaged; bins no symbol covers stay zero.
    The CIR is scaled so a unit flat channel peaks at 1.
    """
    if len(rx) != len(ref) or not ref:
        raise LengthMismatch(f"{len(rx)} received vs {len(ref)} reference symbols")
    k = ref[0].config.fft_size
    rows = np.stack([r.bins if isinstance(r, FreqGrid) else np.asarray(r) for r in rx])
    if rows.shape[1] != k or any(len(x.bins) != k for x in ref):
        raise LengthMismatch("symbol length mismatch")
    idx = np.concatenate([x.occupied for x in ref])
    sym = np.repeat(np.arange(len(ref)), [len(x.occupied) for x in ref])
    pilots = np.concatenate([x.bins[x.occupied] for x in ref])
    ls = rows[sym, idx] * np.conj(pilots) / np.abs(pilots) ** 2
    acc = np.bincount(idx, ls.real, k) + 1j * np.bincount(idx, ls.imag, k)
    count = np.bincount(idx, minlength=k)
    filled = count > 0
    h = np.zeros(k, dtype=complex)
    h[filled] = acc[filled] / count[filled]
    samples = np.fft.ifft(h) * k / max(int(filled.sum()), 1)
    return Cir(samples, ref[0].config.sample_rate)


def simulate_prs_rx(ref: list, spec: ChannelSpec, delay: float, snr_db: float, rng) -> list:
    """Pass every PRS symbol through the same channel and add independent noise.

    Matches ``add_awgn(apply_channel(g, spec, delay), snr_db, rng)`` on the
    pilot bins. Bins outside each symbol's pilot set are left at zero because
    the LS estimator never reads them.
    """
    cfg = ref[0].config
    k = np.arange(cfg.fft_size)
    total = delay + spec.hw_offset * cfg.sample_rate
    resp = spec.frequency_response(cfg) * np.exp(-2j * np.pi * k * total / cfg.fft_size)
    noisy = not (np.isinf(snr_db) and snr_db > 0)
    out = []
    for g in ref:
        occ = g.occupied
        row = np.zeros(cfg.fft_size, dtype=complex)
        sig = g.bins[occ] * resp[occ]
        if noisy:
            power = np.mean(np.abs(sig) ** 2)
            sigma = np.sqrt(power / 10 ** (snr_db / 10) / 2)
            sig = sig + sigma * (rng.standard_normal(len(occ)) + 1j * rng.standard_normal(len(occ)))
        row[occ] = sig
        out.append(row)
    return out


def first_peak(cir: Cir, rel_threshold: float = 0.5, search_window: int = None) -> int:
    """Earliest local maximum within the window reaching ``rel_threshold`` of the window max.

    Neighbours wrap circularly. Falls back to the window argmax when nothing qualifies.
    """
    if not 0 < rel_threshold <= 1:
        raise InvalidParams("rel_threshold must be in (0, 1]")
    mag = np.abs(np.asarray(cir.samples))
    if len(mag) == 0:
        raise EmptyInput("empty CIR")
    w = len(mag) if search_window is None else max(1, min(int(search_window), len(mag)))
    peak = mag[:w].max()
    local = (mag >= np.roll(mag, 1)) & (mag >= np.roll(mag, -1))
    ok = np.flatnonzero(local[:w] & (mag[:w] >= rel_threshold * peak))
    if len(ok):
        return int(ok[0])
    return int(np.argmax(mag[:w]))


def detect_peak(cir: Cir, detector: str = "first_peak", rel_threshold: float = 0.5,
                search_window: int = None) -> int:
    if detector == "first_peak":
        return first_peak(cir, rel_threshold, search_window)
    if detector == "argmax":
        mag = np.abs(cir.samples)
        w = len(mag) if search_window is None else min(int(search_window), len(mag))
        return int(np.argmax(mag[:w]))
    raise InvalidParams(f"unknown detector {detector!r}")


def measure_pd(rx: list, ref: list, detector: str = "first_peak", rel_threshold: float = 0.5,
               search_window: int = None) -> tuple:
    """UE measurement of p_d: returns (p_d, cir). Default window is K/4."""
    cir = prs_channel_estimate(rx, ref)
    if search_window is None:
        search_window = len(cir.samples) // 4
    return detect_peak(cir, detector, rel_threshold, search_window), cir
