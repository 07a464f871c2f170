"""Range estimators over M URS measurements: peak detector (PD) and matched filter (MF)."""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.signal import czt

from .errors import EmptyInput, GridDegenerate, LengthMismatch
from .ofdm import SPEED_OF_LIGHT, OfdmConfig

# relative slack when comparing objective values (flat-objective tie-break)
_TIE_RTOL = 1e-9


@dataclass
class MeasurementBatch:
    cirs: np.ndarray  # (M, K)
    freq_responses: np.ndarray  # (M, K)
    occupied: np.ndarray  # bins carrying the reference signal
    true_distance: float = float("nan")

    def __post_init__(self):
        self.cirs = np.atleast_2d(np.asarray(self.cirs))
        self.freq_responses = np.atleast_2d(np.asarray(self.freq_responses))
        if self.cirs.shape[0] < 1 or self.cirs.size == 0:
            raise EmptyInput("batch needs at least one measurement")
        if self.cirs.shape != self.freq_responses.shape:
            raise LengthMismatch("CIR and frequency-response shapes differ")

    @property
    def m(self) -> int:
        return self.cirs.shape[0]

    @classmethod
    def from_rounds(cls, rounds, true_distance=float("nan")) -> "MeasurementBatch":
        return cls(rounds.cirs, rounds.responses, rounds.occupied, true_distance)


@dataclass
class RangeEstimate:
    d_hat: float  # meters
    estimator: str
    m: int
    tau_hat: float = float("nan")  # round-trip seconds


class CovarianceMatrix:
    """Sample covariance R = (1/M) sum Y_m Y_m^H over a bin subset.

    Stored as a factor F with R = F F^H, so quadratic forms never need the
    dense matrix; ``.matrix`` materializes it on demand.
    """

    def __init__(self, factor: np.ndarray, bins: np.ndarray):
        self.factor = np.asarray(factor, dtype=complex)
        self.bins = np.asarray(bins)
        if self.factor.shape[0] != len(self.bins):
            raise LengthMismatch("factor rows must match the bin set")

    @classmethod
    def from_dense(cls, r: np.ndarray, bins=None) -> "CovarianceMatrix":
        r = np.asarray(r, dtype=complex)
        r = (r + r.conj().T) / 2
        w, u = np.linalg.eigh(r)
        keep = w > 0
        bins = np.arange(len(r)) if bins is None else bins
        return cls(u[:, keep] * np.sqrt(w[keep]), bins)

    @property
    def matrix(self) -> np.ndarray:
        return self.factor @ self.factor.conj().T

    def quadratic(self, v: np.ndarray) -> float:
        """v^H R v."""
        return float(np.sum(np.abs(self.factor.conj().T @ v) ** 2))


def pd_estimate(batch: MeasurementBatch, cfg: OfdmConfig, calibration: float = 0.0,
                search_window: int = None) -> RangeEstimate:
    """c/(2 f_s) times the mean argmax index of the M CIRs."""
    if batch.m < 1:
        raise EmptyInput("empty batch")
    mag = np.abs(batch.cirs)
    if search_window is not None:
        mag = mag[:, :search_window]
    mean_idx = np.argmax(mag, axis=1).mean() - calibration
    tau = mean_idx / cfg.sample_rate
    return RangeEstimate(SPEED_OF_LIGHT * tau / 2, "PD", batch.m, tau)


def build_covariance(batch: MeasurementBatch, bins: str = "occupied") -> CovarianceMatrix:
    """``bins`` is ``"occupied"`` (default) or ``"full"`` for all K bins."""
    if bins == "occupied":
        idx = np.asarray(batch.occupied)
    elif bins == "full":
        idx = np.arange(batch.freq_responses.shape[1])
    else:
        raise ValueError(f"unknown bin set {bins!r}")
    y = batch.freq_responses[:, idx].T  # (bins, M)
    return CovarianceMatrix(y / np.sqrt(batch.m), idx)


def _arithmetic_step(bins: np.ndarray):
    if len(bins) < 2:
        return 1
    d = np.diff(bins)
    return int(d[0]) if np.all(d == d[0]) and d[0] != 0 else None


def mf_objective(r: CovarianceMatrix, cfg: OfdmConfig, tau) -> np.ndarray:
    """v(tau)^H R v(tau), v_k = exp(-j 2 pi k df tau) over the bin set of R."""
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    ph = np.exp(2j * np.pi * np.outer(tau, r.bins * cfg.scs))  # conj(v)^T rows
    return np.sum(np.abs(ph @ r.factor) ** 2, axis=1)


def _grid_objective(r: CovarianceMatrix, cfg: OfdmConfig, t_min: float, step: float,
                    count: int) -> np.ndarray:
    d = _arithmetic_step(r.bins)
    if d is None or r.factor.shape[1] == 0:
        return mf_objective(r, cfg, t_min + step * np.arange(count))
    # uniform bins and grid: chirp-z transform over the bin axis
    j = np.arange(len(r.bins))
    x = r.factor * np.exp(2j * np.pi * d * j * cfg.scs * t_min)[:, None]
    w = np.exp(2j * np.pi * d * cfg.scs * step)
    vals = czt(x, m=count, w=w, a=1.0, axis=0)
    return np.sum(np.abs(vals) ** 2, axis=1)


def mf_estimate(r: CovarianceMatrix, cfg: OfdmConfig, t_min: float = 0.0,
                t_max: float = None, step: float = None, refine: bool = True,
                calibration: float = 0.0) -> RangeEstimate:
    """Maximize v^H R v over round-trip delay, coarse grid then bounded refinement.

    Defaults: delays in [0, K/(2 f_s)], step 1/(8 N df) with N the number of
    bins in R, refinement to step/100. A flat objective returns ``t_min``.
    ``calibration`` is in seconds of round-trip delay.
    """
    if t_max is None:
        t_max = cfg.fft_size / (2 * cfg.sample_rate)
    if step is None:
        step = 1.0 / (8 * max(len(r.bins), 1) * cfg.scs)
    if not step > 0 or not t_max >= t_min:
        raise GridDegenerate(f"bad search grid [{t_min}, {t_max}] step {step}")
    count = int(np.floor((t_max - t_min) / step + 1e-9)) + 1
    obj = _grid_objective(r, cfg, t_min, step, count)
    top = obj.max()
    i = int(np.flatnonzero(obj >= top - _TIE_RTOL * abs(top))[0])
    tau = t_min + i * step
    if refine and count > 1:
        lo, hi = max(t_min, tau - step), min(t_max, tau + step)
        res = minimize_scalar(lambda t: -mf_objective(r, cfg, t)[0], bounds=(lo, hi),
                              method="bounded", options={"xatol": step / 100})
        best = mf_objective(r, cfg, tau)[0]
        if -res.fun > best * (1 + _TIE_RTOL):
            tau = float(res.x)
    tau -= calibration
    return RangeEstimate(SPEED_OF_LIGHT * tau / 2, "MF", r.factor.shape[1], tau)


class Ecdf:
    """Empirical CDF of absolute errors."""

    def __init__(self, errors):
        e = np.sort(np.abs(np.asarray(errors, dtype=float)))
        if len(e) == 0:
            raise EmptyInput("no errors to build a CDF from")
        self.errors = e

    @property
    def points(self) -> list:
        n = len(self.errors)
        return [(float(x), (i + 1) / n) for i, x in enumerate(self.errors)]

    def percentile(self, p: float) -> float:
        return float(np.percentile(self.errors, p))

    def __call__(self, x: float) -> float:
        return np.searchsorted(self.errors, x, side="right") / len(self.errors)


def ecdf(errors) -> Ecdf:
    return Ecdf(errors)
