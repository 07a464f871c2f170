"""Cyclic-shift RTT: URS transmit/receive chain and the measurement round.

The UE folds its current TA and its downlink first-peak delay p_d into the
cyclic shift of a Zadoff-Chu uplink reference signal (URS). The uplink
arrives at the gNB early by exactly TA + p_d, the shift delays the
correlation peak by the same amount, and the gNB reads the round-trip
time straight off the CIR peak.

Shift units vs samples: a sequence shift of one index becomes a phase ramp
exp(-j*2*pi*k/N) over the N occupied bins (spaced ``comb`` apart) of a
K-bin grid, i.e. a time shift of K/(comb*N) f_s samples.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelSpec, TimingState, add_awgn, apply_channel
from .dl_ranging import Cir, PrsConfig, detect_peak, measure_pd, prs_generate, simulate_prs_rx
from .errors import (
    AmbiguousDetection,
    CombCollision,
    InvalidParams,
    LengthMismatch,
    ShiftOutOfRange,
)
from .ofdm import SPEED_OF_LIGHT, FreqGrid, OfdmConfig, map_to_grid, to_freq, to_time
from .sequences import MultiRootConfig, ZcParams, cyclic_shift, zc_dft, zc_generate

SHIFT_MODES = ("consistent", "paper_eq5")
PROTOCOL_EVENTS = ("gnb_configure", "ue_prs_measure", "ue_urs_transmit", "gnb_rtt_estimate")


@dataclass(frozen=True)
class ShiftPlan:
    nu: int  # applied shift, sequence-index units, in [0, n_zc)
    ta: int
    p_d: float
    conversion: str
    total: int = None  # unreduced shift; nu = total mod n_zc
    window: int = 0  # which root window the total falls in

    def __post_init__(self):
        if self.total is None:
            object.__setattr__(self, "total", self.nu)
        if self.ta + self.p_d < 0:
            raise InvalidParams("ta + p_d must be >= 0")


def samples_per_shift(cfg: OfdmConfig, n_zc: int) -> float:
    """f_s samples of delay produced by one unit of sequence shift."""
    return cfg.fft_size / (cfg.comb * n_zc)


def compute_cyclic_shift(ta, p_d, cfg: OfdmConfig, n_zc: int, mode: str = "consistent",
                         windows: int = 1) -> ShiftPlan:
    """Turn TA + p_d (f_s samples) into a cyclic shift of the base sequence.

    ``consistent`` picks the smallest shift whose time equivalent is at least
    TA + p_d, so the residual is below one shift step. ``paper_eq5`` applies
    ceil((TA + p_d) * K / N) literally.

    ``windows`` is the number of configured roots; the unreduced shift must stay
    below ``windows * n_zc``.
    """
    if mode not in SHIFT_MODES:
        raise InvalidParams(f"unknown shift mode {mode!r}")
    s = ta + p_d
    if s < 0:
        raise InvalidParams("ta + p_d must be >= 0")
    if mode == "consistent":
        x = s / samples_per_shift(cfg, n_zc)
    else:
        x = s * cfg.fft_size / n_zc
    # guard against float noise pushing an exact integer up by one
    total = int(math.ceil(x - 1e-9))
    if total >= windows * n_zc:
        raise ShiftOutOfRange(
            f"shift {total} for ta+p_d={s} exceeds {windows} x n_zc={n_zc}"
        )
    window, nu = divmod(total, n_zc)
    return ShiftPlan(nu=nu, ta=int(ta), p_d=p_d, conversion=mode, total=total, window=window)


def urs_grid(base: ZcParams, nu: int, cfg: OfdmConfig) -> FreqGrid:
    """Frequency grid of the shifted URS: shift in the sequence domain, DFT, map."""
    seq = cyclic_shift(zc_generate(base), nu)
    return map_to_grid(np.fft.fft(seq, norm="ortho"), cfg)


def urs_transmit(base: ZcParams, plan: ShiftPlan, cfg: OfdmConfig) -> np.ndarray:
    """Time-domain URS symbol of length K."""
    return to_time(urs_grid(base, plan.nu, cfg))


@dataclass
class FreqResponse:
    """gNB channel estimate on the K-bin grid.

    Bins carrying the URS hold Y[k] * conj(X_q[k]); all other bins hold the
    raw received value (noise only).
    """

    values: np.ndarray
    occupied: np.ndarray
    config: OfdmConfig


def urs_receive_grid(y: FreqGrid, base: ZcParams, cfg: OfdmConfig) -> tuple:
    occ = cfg.occupied_bins(base.n_zc)
    z = np.zeros(cfg.fft_size, dtype=complex)
    z[occ] = y.bins[occ] * np.conj(zc_dft(base))
    samples = np.fft.ifft(z) * (cfg.fft_size / base.n_zc)
    values = y.bins.copy()
    values[occ] = z[occ]
    return Cir(samples, cfg.sample_rate), FreqResponse(values, occ, cfg)


def urs_receive(rx_time: np.ndarray, base: ZcParams, cfg: OfdmConfig) -> tuple:
    """Correlate with the base sequence; returns (Cir, FreqResponse).

    The CIR is scaled so a unit channel with no shift peaks at exactly 1.
    """
    rx_time = np.asarray(rx_time)
    if len(rx_time) != cfg.fft_size:
        raise LengthMismatch(f"received {len(rx_time)} samples, expected {cfg.fft_size}")
    return urs_receive_grid(to_freq(rx_time, cfg), base, cfg)


@dataclass
class RttResult:
    p_u: float
    rtt_samples: float
    root_used: int
    cir: Cir
    response: FreqResponse = None

    @property
    def rtt_seconds(self) -> float:
        return self.rtt_samples / self.cir.grid_rate

    @property
    def distance(self) -> float:
        return SPEED_OF_LIGHT * self.rtt_seconds / 2


def parabolic_offset(mag: np.ndarray, i: int) -> float:
    """Sub-sample offset of a peak from a 3-point parabola (circular neighbours)."""
    a, b, c = mag[i - 1], mag[i], mag[(i + 1) % len(mag)]
    den = a - 2 * b + c
    return 0.0 if den == 0 else 0.5 * (a - c) / den


def estimate_rtt(cir: Cir, detector: str = "first_peak", rel_threshold: float = 0.5,
                 search_window: int = None, interpolate: bool = False,
                 calibration: float = 0.0, root_used: int = None) -> RttResult:
    """RTT from the URS CIR peak; ``calibration`` (samples) is subtracted."""
    p = detect_peak(cir, detector, rel_threshold, search_window)
    p_u = float(p)
    if interpolate:
        p_u += parabolic_offset(np.abs(cir.samples), p)
    return RttResult(p_u=p_u, rtt_samples=max(p_u - calibration, 0.0),
                     root_used=root_used, cir=cir)


def multi_root_transmit(roots: MultiRootConfig, ta, p_d, cfg: OfdmConfig,
                        mode: str = "consistent") -> np.ndarray:
    """URS on root q1 while the total shift fits one sequence period, q2 for the next."""
    if len(roots.roots) != 2:
        raise InvalidParams("exactly two roots are supported")
    plan = compute_cyclic_shift(ta, p_d, cfg, roots.n_zc, mode, windows=2)
    return urs_transmit(roots.params(plan.window), plan, cfg)


def _peak_to_median(cir: Cir, window: int) -> tuple:
    mag = np.abs(cir.samples)
    p = int(np.argmax(mag[:window]))
    med = np.median(mag)
    return p, (mag[p] / med if med > 0 else np.inf)


def multi_root_detect_grid(y: FreqGrid, roots: MultiRootConfig, cfg: OfdmConfig,
                           margin_db: float = 1.0, min_peak_ratio: float = 5.0,
                           detector: str = "first_peak", rel_threshold: float = 0.5,
                           calibration: float = 0.0) -> RttResult:
    if len(roots.roots) != 2:
        raise InvalidParams("exactly two roots are supported")
    window = cfg.fft_size // cfg.comb
    cands = []
    for i in range(2):
        cir, resp = urs_receive_grid(y, roots.params(i), cfg)
        _, ratio = _peak_to_median(cir, window)
        cands.append((ratio, i, cir, resp))
    cands.sort(key=lambda c: -c[0])
    best, rival = cands
    if best[0] < min_peak_ratio:
        raise AmbiguousDetection(f"no root detected (peak/median {best[0]:.2f})")
    if 20 * np.log10(best[0] / rival[0]) < margin_db:
        raise AmbiguousDetection(
            f"root peak ratios {best[0]:.2f} and {rival[0]:.2f} within {margin_db} dB"
        )
    _, idx, cir, resp = best
    res = estimate_rtt(cir, detector, rel_threshold, window, calibration=0.0,
                       root_used=roots.roots[idx])
    res.rtt_samples = max(res.p_u + idx * window - calibration, 0.0)
    res.response = resp
    return res


def multi_root_detect(rx_time: np.ndarray, roots: MultiRootConfig, cfg: OfdmConfig,
                      **kwargs) -> RttResult:
    """Correlate against both roots and keep the one with the dominant peak.

    Raises AmbiguousDetection when the peak-to-median ratios are within
    ``margin_db`` of each other or the best one is below ``min_peak_ratio``.
    RTT for the second root carries one full CIR period (K/comb samples).
    """
    rx_time = np.asarray(rx_time)
    if len(rx_time) != cfg.fft_size:
        raise LengthMismatch(f"received {len(rx_time)} samples, expected {cfg.fft_size}")
    return multi_root_detect_grid(to_freq(rx_time, cfg), roots, cfg, **kwargs)


class ProtocolTrace:
    """Ordered event log of one measurement round."""

    def __init__(self):
        self.events = []

    def add(self, name: str, **payload):
        self.events.append({"event": name, **payload})

    @property
    def names(self) -> list:
        return [e["event"] for e in self.events]

    def is_complete(self) -> bool:
        return tuple(self.names) == PROTOCOL_EVENTS

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e, default=_jsonable) + "\n" for e in self.events)


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    raise TypeError(f"not serializable: {type(x)}")


@dataclass
class RoundSetup:
    """Everything one measurement round needs besides randomness."""

    timing: TimingState
    cfg: OfdmConfig = field(default_factory=OfdmConfig)
    base: ZcParams = field(default_factory=lambda: ZcParams(1259, 1))
    roots: MultiRootConfig = None
    prs: PrsConfig = field(default_factory=PrsConfig)
    channel: ChannelSpec = field(default_factory=ChannelSpec)  # snr_db is the UL SNR
    dl_snr_db: float = float("inf")
    shift_mode: str = "consistent"
    detector: str = "first_peak"
    rel_threshold: float = 0.5
    interpolate: bool = False

    @property
    def calibration(self) -> float:
        """Round-trip hardware delay in samples, removed from the estimate."""
        return 2 * self.channel.hw_offset * self.cfg.sample_rate


def _downlink(setup: RoundSetup, trace: ProtocolTrace, rng) -> float:
    dl_cfg = setup.cfg.with_comb(1, 0)
    ref = prs_generate(setup.prs, dl_cfg)
    rx = simulate_prs_rx(ref, setup.channel, setup.timing.p_d_true, setup.dl_snr_db, rng)
    p_d, _ = measure_pd(rx, ref, setup.detector, setup.rel_threshold)
    trace.add("ue_prs_measure", p_d=p_d, p_d_true=float(setup.timing.p_d_true))
    return p_d


def _uplink_grid(setup: RoundSetup, p_d, trace: ProtocolTrace) -> tuple:
    windows = 2 if setup.roots is not None else 1
    n_zc = setup.roots.n_zc if setup.roots is not None else setup.base.n_zc
    try:
        plan = compute_cyclic_shift(setup.timing.ta, p_d, setup.cfg, n_zc,
                                    setup.shift_mode, windows)
    except ShiftOutOfRange as e:
        trace.add("error", stage="ue_urs_transmit", message=str(e))
        raise ShiftOutOfRange(str(e), trace) from None
    base = setup.roots.params(plan.window) if setup.roots is not None else setup.base
    t = setup.timing
    trace.add("ue_urs_transmit", nu=plan.nu, shift_total=plan.total, ta=t.ta, p_d=p_d,
              root=base.q, tx_time=t.ue_sync_offset - t.ta)
    grid = urs_grid(base, plan.nu, setup.cfg)
    return apply_channel(grid, setup.channel, t.ul_arrival), plan


def _gnb_estimate(setup: RoundSetup, y: FreqGrid, trace: ProtocolTrace) -> RttResult:
    cfg = setup.cfg
    if setup.roots is not None:
        res = multi_root_detect_grid(y, setup.roots, cfg, detector=setup.detector,
                                     rel_threshold=setup.rel_threshold,
                                     calibration=setup.calibration)
    else:
        cir, resp = urs_receive_grid(y, setup.base, cfg)
        res = estimate_rtt(cir, setup.detector, setup.rel_threshold,
                           cfg.fft_size // cfg.comb, setup.interpolate,
                           setup.calibration, setup.base.q)
        res.response = resp
    trace.add("gnb_rtt_estimate", p_u=res.p_u, rtt_samples=res.rtt_samples,
              root=res.root_used)
    return res


def _configure(setup: RoundSetup, trace: ProtocolTrace):
    roots = list(setup.roots.roots) if setup.roots is not None else [setup.base.q]
    trace.add("gnb_configure", n_zc=setup.base.n_zc if setup.roots is None else setup.roots.n_zc,
              roots=roots, fft_size=setup.cfg.fft_size, comb=setup.cfg.comb,
              comb_offset=setup.cfg.comb_offset, prs_symbols=setup.prs.num_symbols,
              shift_mode=setup.shift_mode)


def run_protocol_round(setup: RoundSetup, seed=None) -> tuple:
    """One full signaling round; returns (RttResult, ProtocolTrace).

    gNB configures, UE measures p_d on the PRS, UE sends the shifted URS at
    ue_sync_offset - TA, gNB correlates and reads the RTT. Constraint
    violations raise with the partial trace attached as ``.trace``.
    """
    rng = np.random.default_rng(seed)
    trace = ProtocolTrace()
    _configure(setup, trace)
    p_d = _downlink(setup, trace, rng)
    y, _ = _uplink_grid(setup, p_d, trace)
    y = add_awgn(y, setup.channel.snr_db, rng)
    return _gnb_estimate(setup, y, trace), trace


def comb_multiplex_round(setup_a: RoundSetup, setup_b: RoundSetup, seed=None) -> tuple:
    """Two UEs on complementary comb-2 offsets of one uplink symbol.

    The UL noise level follows ``setup_a.channel.snr_db``. Each UE's
    unambiguous RTT range is K/2 samples; longer delays wrap.
    Returns ((result_a, trace_a), (result_b, trace_b)).
    """
    for s in (setup_a, setup_b):
        if s.cfg.comb != 2:
            raise InvalidParams("comb multiplexing needs comb=2 configs")
        if s.roots is not None:
            raise InvalidParams("comb multiplexing uses single-root URS")
    if setup_a.cfg.comb_offset == setup_b.cfg.comb_offset:
        raise CombCollision("both UEs are configured on the same comb offset")
    rng = np.random.default_rng(seed)
    traces = (ProtocolTrace(), ProtocolTrace())
    grids = []
    for s, tr in zip((setup_a, setup_b), traces):
        _configure(s, tr)
        p_d = _downlink(s, tr, rng)
        grids.append(_uplink_grid(s, p_d, tr)[0])
    y = add_awgn(grids[0] + grids[1], setup_a.channel.snr_db, rng)
    return tuple((_gnb_estimate(s, y, tr), tr) for s, tr in zip((setup_a, setup_b), traces))


@dataclass
class RoundBatch:
    """M independent rounds sharing one geometry; rows are measurements."""

    cirs: np.ndarray  # (M, K) URS CIRs
    responses: np.ndarray  # (M, K) gNB frequency responses
    occupied: np.ndarray
    p_d: np.ndarray
    nu: np.ndarray
    p_u: np.ndarray
    rtt_samples: np.ndarray
    root_used: int
    config: OfdmConfig

    @property
    def m(self) -> int:
        return len(self.cirs)


def run_measurement_batch(setup: RoundSetup, m: int, seed=None) -> RoundBatch:
    """Run ``m`` measurement rounds with fresh noise each, vectorized over rounds.

    Same model as :func:`run_protocol_round`; the shifted URS spectrum is
    built from the DFT shift theorem instead of shifting then transforming.
    Multi-root setups fall back to looping over single rounds.
    """
    if m < 1:
        raise InvalidParams("need at least one measurement")
    rng = np.random.default_rng(seed)
    if setup.roots is not None:
        return _batch_from_rounds(setup, m, rng)
    cfg, t = setup.cfg, setup.timing
    kk = cfg.fft_size

    # downlink: all PRS symbols of all rounds at once
    ref = prs_generate(setup.prs, cfg.with_comb(1, 0))
    k = np.arange(kk)
    dl_total = t.p_d_true + setup.channel.hw_offset * cfg.sample_rate
    h_dl = setup.channel.frequency_response(cfg) * np.exp(-2j * np.pi * k * dl_total / kk)
    h = np.zeros((m, kk), dtype=complex)
    count = np.zeros(kk)
    noisy_dl = not np.isinf(setup.dl_snr_db)
    if noisy_dl:
        n_pilots = sum(len(g.occupied) for g in ref)
        noise = _complex_normal(rng, (m, n_pilots))
    start = 0
    for g in ref:
        occ = g.occupied
        pil = g.bins[occ]
        sig = pil * h_dl[occ]
        row = sig * (np.conj(pil) / np.abs(pil) ** 2)
        if noisy_dl:
            sigma = np.sqrt(np.mean(np.abs(sig) ** 2) / 10 ** (setup.dl_snr_db / 10) / 2)
            seg = noise[:, start:start + len(occ)]
            start += len(occ)
            h[:, occ] += row + (sigma * seg) * (np.conj(pil) / np.abs(pil) ** 2)
        else:
            h[:, occ] += row
        count[occ] += 1
    filled = count > 0
    h[:, filled] /= count[filled]
    dl_cirs = np.fft.ifft(h, axis=1) * kk / filled.sum()
    p_d = np.array([
        detect_peak(Cir(row, cfg.sample_rate), setup.detector, setup.rel_threshold, kk // 4)
        for row in dl_cirs
    ])

    # uplink
    n = setup.base.n_zc
    plans = [compute_cyclic_shift(t.ta, int(pd), cfg, n, setup.shift_mode) for pd in p_d]
    nu = np.array([pl.nu for pl in plans])
    occ = cfg.occupied_bins(n)
    x = zc_dft(setup.base)
    j = np.arange(n)
    uniq, inv = np.unique(nu, return_inverse=True)
    tx = (x * np.exp(-2j * np.pi * np.outer(uniq, j) / n))[inv]
    h_ul = setup.channel.frequency_response(cfg) * np.exp(
        -2j * np.pi * k * (t.ul_arrival + setup.channel.hw_offset * cfg.sample_rate) / kk)
    y = np.zeros((m, kk), dtype=complex)
    y[:, occ] = tx * h_ul[occ]
    snr = setup.channel.snr_db
    if not np.isinf(snr):
        power = np.mean(np.abs(y[:, occ]) ** 2, axis=1, keepdims=True)
        y += np.sqrt(power / 10 ** (snr / 10) / 2) * _complex_normal(rng, (m, kk))
    z = np.zeros((m, kk), dtype=complex)
    z[:, occ] = y[:, occ] * np.conj(x)
    cirs = np.fft.ifft(z, axis=1) * (kk / n)
    responses = y
    responses[:, occ] = z[:, occ]
    p_u = np.array([
        estimate_rtt(Cir(row, cfg.sample_rate), setup.detector, setup.rel_threshold,
                     kk // cfg.comb, setup.interpolate).p_u
        for row in cirs
    ])
    rtt = np.maximum(p_u - setup.calibration, 0.0)
    return RoundBatch(cirs, responses, occ, p_d.astype(float), nu, p_u, rtt,
                      setup.base.q, cfg)


def _complex_normal(rng, shape) -> np.ndarray:
    """Unit-variance-per-component complex Gaussian samples."""
    return rng.standard_normal((*shape[:-1], 2 * shape[-1])).view(complex)


def _batch_from_rounds(setup: RoundSetup, m: int, rng) -> RoundBatch:
    results, p_d, nu = [], [], []
    for _ in range(m):
        res, trace = run_protocol_round(setup, rng)
        results.append(res)
        ev = {e["event"]: e for e in trace.events}
        p_d.append(ev["ue_prs_measure"]["p_d"])
        nu.append(ev["ue_urs_transmit"]["nu"])
    roots = {r.root_used for r in results}
    return RoundBatch(
        cirs=np.stack([r.cir.samples for r in results]),
        responses=np.stack([r.response.values for r in results]),
        occupied=results[0].response.occupied,
        p_d=np.array(p_d, dtype=float),
        nu=np.array(nu),
        p_u=np.array([r.p_u for r in results]),
        rtt_samples=np.array([r.rtt_samples for r in results]),
        root_used=roots.pop() if len(roots) == 1 else -1,
        config=setup.cfg,
    )
