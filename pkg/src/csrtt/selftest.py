"""Acceptance checks, runnable from pytest or ``csrtt selftest``.

Each check returns a :class:`CriterionResult` carrying the measured value
next to its bound, so a failing run still reports how far off it was.
"""

import itertools
import tempfile
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .channel import ChannelSpec, TimingState, apply_channel, model_ta
from .estimators import build_covariance, ecdf
from .harness import ScenarioConfig, TimingModel, export, run_sweep
from .ofdm import OfdmConfig, map_to_grid, to_time
from .sequences import (
    MultiRootConfig,
    ZcParams,
    cyclic_xcorr,
    cyclic_xcorr_direct,
    zc_generate,
)
from .urs_rtt import RoundSetup, compute_cyclic_shift, run_protocol_round
from .estimators import MeasurementBatch
from .errors import ShiftOutOfRange

N_ZC = 1259
# NR timing-advance step 16*64*Tc/2^mu at 30 kHz SCS is 12 samples at 46.08 MHz
NR_TA_STEP_SAMPLES = 12


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    measured: str
    bound: str
    seconds: float = 0.0
    notes: str = ""

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        s = f"[{tag}] {self.number}. {self.name}: {self.measured} (bound {self.bound}; {self.seconds:.1f} s)"
        return s + (f" -- {self.notes}" if self.notes else "")


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t0
        return res
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@_timed
def zc_identities(num_roots: int = 20, seed: int = 1) -> CriterionResult:
    """Autocorrelation is a delta and cross-root correlation is flat at 1/sqrt(N)."""
    rng = np.random.default_rng(seed)
    roots = sorted(rng.choice(np.arange(1, N_ZC), size=num_roots, replace=False).tolist())
    seqs = {q: zc_generate(ZcParams(N_ZC, q)) for q in roots}
    auto_err = 0.0
    for x in seqs.values():
        c = cyclic_xcorr(x, x)
        auto_err = max(auto_err, abs(c[0] - 1), np.abs(c[1:]).max())
    cross_err = 0.0
    for a, b in itertools.combinations(roots, 2):
        c = cyclic_xcorr(seqs[a], seqs[b])
        cross_err = max(cross_err, np.abs(np.abs(c) - 1 / np.sqrt(N_ZC)).max())
    ok = auto_err <= 1e-9 and cross_err <= 1e-9
    res = CriterionResult(1, "ZC auto/cross-correlation identities", ok,
                          f"auto err {auto_err:.2e}, cross err {cross_err:.2e}", "1e-9, < 10 s")
    return res


def _random_timing(rng, cfg: OfdmConfig) -> TimingState:
    while True:
        tau = int(rng.integers(0, 701))
        p_d = int(rng.integers(0, 101))
        ta = model_ta(tau, int(rng.choice([1, 4, 8, 12])), float(rng.uniform(0, 8)), rng)
        try:
            compute_cyclic_shift(ta, p_d, cfg, N_ZC)
        except ShiftOutOfRange:
            continue
        return TimingState(tau, ta, p_d)


@_timed
def rtt_identity(trials: int = 500, seed: int = 2) -> CriterionResult:
    """Noiseless LOS rounds recover RTT = 2 tau within one sample."""
    rng = np.random.default_rng(seed)
    cfg = OfdmConfig()
    worst, bad = 0.0, 0
    for _ in range(trials):
        timing = _random_timing(rng, cfg)
        identity = abs(timing.ul_arrival - (2 * timing.tau - timing.ta - timing.p_d_true)) < 1e-9
        res, trace = run_protocol_round(RoundSetup(timing=timing, cfg=cfg))
        err = abs(res.rtt_samples - 2 * timing.tau)
        worst = max(worst, err)
        bad += err > 1 or not trace.is_complete() or not identity
    return CriterionResult(2, "RTT identity, consistent shift mode", bad == 0,
                           f"{trials - bad}/{trials} rounds ok, worst |rtt-2tau| {worst:.3g}",
                           "<= 1 sample in 100%, < 30 s")


@_timed
def multi_root(trials: int = 1000, seed: int = 3, roots=(25, 34)) -> CriterionResult:
    """Total shifts over [0, 2N) pick the right root and rebuild the RTT."""
    rng = np.random.default_rng(seed)
    cfg = OfdmConfig()
    mr = MultiRootConfig(N_ZC, roots)
    wrong_root, wrong_rtt, worst = 0, 0, 0.0
    for total in rng.integers(0, 2 * N_ZC, size=trials):
        s = int(np.floor(total * cfg.fft_size / N_ZC))
        p_d = int(rng.integers(0, min(s, 50) + 1))
        timing = TimingState(s / 2, s - p_d, p_d)
        res, _ = run_protocol_round(RoundSetup(timing=timing, cfg=cfg, roots=mr))
        expect = roots[0] if total < N_ZC else roots[1]
        err = abs(res.rtt_samples - 2 * timing.tau)
        worst = max(worst, err)
        wrong_root += res.root_used != expect
        wrong_rtt += err > 1
    ok = wrong_root == 0 and wrong_rtt == 0
    return CriterionResult(3, "Multi-root extension", ok,
                           f"root errors {wrong_root}/{trials}, RTT errors {wrong_rtt}/{trials}, "
                           f"worst {worst:.3g} samples", "100% correct, RTT within 1 sample")


def estimator_scenario(trials_total: int = 2000, ta_granularity: int = NR_TA_STEP_SAMPLES,
                       snr_points=(-20.0, 30.0), m_values=(20, 60)) -> ScenarioConfig:
    distances = tuple(float(d) for d in range(3, 11))
    return ScenarioConfig(
        distances=distances, snr_points=tuple(snr_points), M_values=tuple(m_values),
        trials_per_point=trials_total // len(distances), estimators=("PD", "MF"),
        timing=TimingModel(ta_granularity=ta_granularity), dl_snr_db=30.0, master_seed=7,
    )


_SWEEP_CACHE = {}


def _sweep(cfg: ScenarioConfig) -> list:
    if cfg not in _SWEEP_CACHE:
        _SWEEP_CACHE[cfg] = run_sweep(cfg)
    return _SWEEP_CACHE[cfg]


def _p90(records, estimator, snr, m) -> float:
    errs = [r.error for r in records
            if r.estimator == estimator and r.snr == snr and r.M == m and r.status == "ok"]
    return ecdf(errs).percentile(90)


@_timed
def low_snr_headline(trials_total: int = 2000, bound_m: float = 1.6) -> CriterionResult:
    """MF range error p90 at -20 dB with M=20."""
    recs = _sweep(estimator_scenario(trials_total, snr_points=(-20.0, 30.0), m_values=(20, 60)))
    p90 = _p90(recs, "MF", -20.0, 20)
    n = sum(r.estimator == "MF" and r.snr == -20.0 and r.M == 20 for r in recs)
    return CriterionResult(4, "Low-SNR MF headline", p90 <= bound_m,
                           f"p90 = {p90:.3f} m over {n} trials", f"<= {bound_m} m",
                           notes=f"TA granularity {NR_TA_STEP_SAMPLES} samples")


@_timed
def estimator_ordering(trials_total: int = 2000) -> CriterionResult:
    """MF beats PD at low SNR, they agree at high SNR, and more measurements never hurt."""
    cfg = estimator_scenario(trials_total, snr_points=(-20.0, 30.0), m_values=(20, 60))
    recs = _sweep(cfg)
    one_sample = cfg.ofdm.sample_distance
    p = {(e, s, m): _p90(recs, e, s, m)
         for e in ("PD", "MF") for s in (-20.0, 30.0) for m in (20, 60)}
    checks = {
        "MF<PD @-20dB": p["MF", -20.0, 20] < p["PD", -20.0, 20],
        "|MF-PD|<=c/2fs @30dB": abs(p["MF", 30.0, 20] - p["PD", 30.0, 20]) <= one_sample,
    }
    for e in ("PD", "MF"):
        for s in (-20.0, 30.0):
            checks[f"{e} M60<=M20 @{s:g}dB"] = p[e, s, 60] <= p[e, s, 20]
    measured = ", ".join(f"{e}/{s:g}dB/M{m}={v:.3g}m" for (e, s, m), v in p.items())
    failed = [k for k, v in checks.items() if not v]
    return CriterionResult(5, "Estimator ordering", not failed, measured,
                           f"orderings hold; c/(2fs)={one_sample:.3f} m",
                           notes="failed: " + ", ".join(failed) if failed else "")


@_timed
def oracle_equivalences(seed: int = 4) -> CriterionResult:
    """Independent-route checks: delay vs roll, fast vs direct correlation, covariance PSD."""
    rng = np.random.default_rng(seed)
    cfg = OfdmConfig()
    delay_err = 0.0
    for d in (0, 1, 7, 123, 767, 1535):
        s = rng.standard_normal(900) + 1j * rng.standard_normal(900)
        g = map_to_grid(s, cfg)
        out = to_time(apply_channel(g, ChannelSpec(), float(d)))
        ref = np.roll(to_time(g), d)
        delay_err = max(delay_err, np.sqrt(np.mean(np.abs(out - ref) ** 2)))
    corr_err = 0.0
    for n in (7, 31, 139, 251, 503):
        a = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        b = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        diff = cyclic_xcorr(a, b) - cyclic_xcorr_direct(a, b)
        corr_err = max(corr_err, np.sqrt(np.mean(np.abs(diff) ** 2)))
    psd_bad = 0
    for _ in range(100):
        m = int(rng.integers(1, 12))
        y = rng.standard_normal((m, 64)) + 1j * rng.standard_normal((m, 64))
        r = build_covariance(MeasurementBatch(y, y, np.arange(0, 64, 2))).matrix
        herm = np.abs(r - r.conj().T).max() <= 1e-9
        eig = np.linalg.eigvalsh(r)
        psd_bad += not (herm and eig.min() >= -1e-9 * np.trace(r).real)
    ok = delay_err <= 1e-9 and corr_err <= 1e-9 and psd_bad == 0
    return CriterionResult(6, "Oracle equivalences", ok,
                           f"delay RMS {delay_err:.1e}, xcorr RMS {corr_err:.1e}, "
                           f"non-PSD batches {psd_bad}/100", "1e-9 RMS, all PSD")


@_timed
def determinism(thread_counts=(1, 4), cfg: ScenarioConfig = None) -> CriterionResult:
    """Same master seed gives byte-identical exports at any thread count."""
    cfg = cfg or ScenarioConfig()
    blobs = {}
    with tempfile.TemporaryDirectory() as tmp:
        for i, th in enumerate((thread_counts[0], *thread_counts)):
            recs = run_sweep(cfg, threads=th)
            for fmt in ("csv", "jsonl"):
                p = export(recs, fmt, Path(tmp) / f"run{i}.{fmt}")
                blobs.setdefault(fmt, set()).add(p.read_bytes())
    ok = all(len(v) == 1 for v in blobs.values())
    return CriterionResult(7, "Determinism", ok,
                           f"{len(thread_counts) + 1} runs, distinct exports per format: "
                           + ", ".join(f"{k}={len(v)}" for k, v in blobs.items()),
                           "byte-identical")


CRITERIA = {
    1: zc_identities,
    2: rtt_identity,
    3: multi_root,
    4: low_snr_headline,
    5: estimator_ordering,
    6: oracle_equivalences,
    7: determinism,
}


def run_all(only=None, echo=print) -> list:
    results = []
    for n, fn in CRITERIA.items():
        if only and n not in only:
            continue
        res = fn()
        if echo:
            echo(res.line())
        results.append(res)
    return results


def granularity_one_reference(trials_total: int = 2000) -> float:
    """MF p90 at -20 dB, M=20 with 1-sample TA granularity (informational)."""
    cfg = replace(estimator_scenario(trials_total, ta_granularity=1, m_values=(20,)),
                  snr_points=(-20.0,), estimators=("MF",))
    return _p90(_sweep(cfg), "MF", -20.0, 20)
