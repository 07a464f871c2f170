"""Scenario files, Monte Carlo sweeps, record export and CDF reports.

Scenario files are flat YAML mappings with dotted keys (nested mappings are
flattened, so both styles work)::

    ofdm.fft_size: 1536
    urs.n_zc: 1259
    distances: [3, 4, 5]
    snr_points: [high, low]

Omitted keys take the defaults baked into the config dataclasses.
"""

import csv
import io
import json
import logging
import math
import warnings
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from .channel import ChannelSpec, TimingState, model_ta, propagation_delay
from .dl_ranging import DETECTORS, PrsConfig
from .errors import (
    CsrttError,
    EmptyInput,
    InvalidParams,
    ScenarioParseError,
    ScenarioValidationError,
)
from .estimators import MeasurementBatch, build_covariance, ecdf, mf_estimate, pd_estimate
from .ofdm import OfdmConfig
from .sequences import MultiRootConfig, ZcParams
from .urs_rtt import SHIFT_MODES, RoundSetup, run_measurement_batch

log = logging.getLogger(__name__)

ESTIMATORS = ("PD", "MF")
SNR_PRESETS = {"high": 30.0, "low": -20.0, "noiseless": math.inf, "inf": math.inf}
DEFAULT_PERCENTILES = (50, 67, 90, 95)


class ScenarioWarning(UserWarning):
    pass


@dataclass(frozen=True)
class TimingModel:
    """How each trial draws its TA and residual sync error."""

    ta_granularity: int = 1
    ta_jitter: float = 0.0
    p_d_max: int = 0  # p_d_true drawn uniformly from [0, p_d_max]


@dataclass(frozen=True)
class ScenarioConfig:
    ofdm: OfdmConfig = field(default_factory=OfdmConfig)
    urs: ZcParams = field(default_factory=lambda: ZcParams(1259, 1))
    roots: MultiRootConfig = None
    prs: PrsConfig = field(default_factory=PrsConfig)
    channel: ChannelSpec = field(default_factory=ChannelSpec)
    distances: tuple = tuple(float(d) for d in range(3, 11))
    snr_points: tuple = (30.0, -20.0)
    M_values: tuple = (20,)
    trials_per_point: int = 25
    master_seed: int = 2024
    estimators: tuple = ESTIMATORS
    shift_mode: str = "consistent"
    timing: TimingModel = field(default_factory=TimingModel)
    dl_snr_db: float = 30.0
    detector: str = "first_peak"
    mf_bins: str = "occupied"

    def __post_init__(self):
        for name in ("distances", "snr_points", "M_values", "estimators"):
            if not getattr(self, name):
                raise ScenarioValidationError(f"{name} must be nonempty")
        if self.trials_per_point < 1:
            raise ScenarioValidationError("trials_per_point must be >= 1")
        if any(d < 0 for d in self.distances):
            raise ScenarioValidationError("distances must be >= 0")
        if any(m < 1 for m in self.M_values):
            raise ScenarioValidationError("M_values must be >= 1")
        bad = set(self.estimators) - set(ESTIMATORS)
        if bad:
            raise ScenarioValidationError(f"unknown estimators {sorted(bad)}")
        if self.shift_mode not in SHIFT_MODES:
            raise ScenarioValidationError(f"shift_mode must be one of {SHIFT_MODES}")
        if self.detector not in DETECTORS:
            raise ScenarioValidationError(f"detector must be one of {DETECTORS}")
        if self.mf_bins not in ("occupied", "full"):
            raise ScenarioValidationError("mf.bins must be 'occupied' or 'full'")
        if self.urs.n_zc * self.ofdm.comb + self.ofdm.first_bin > self.ofdm.fft_size:
            raise ScenarioValidationError("URS does not fit the FFT grid (n_zc*comb > K)")

    def measurements_per_point(self) -> dict:
        """URS measurements collected at each (distance, snr), per M value."""
        return {m: m * self.trials_per_point for m in self.M_values}


# key -> (section, attribute, converter)
_KEYS = {
    "ofdm.fft_size": ("ofdm", "fft_size", int),
    "ofdm.scs": ("ofdm", "scs", float),
    "ofdm.sample_rate": ("ofdm", "sample_rate", float),
    "ofdm.carrier": ("ofdm", "carrier", float),
    "ofdm.first_bin": ("ofdm", "first_bin", int),
    "ofdm.comb": ("ofdm", "comb", int),
    "ofdm.comb_offset": ("ofdm", "comb_offset", int),
    "urs.n_zc": ("urs", "n_zc", int),
    "urs.q": ("urs", "q", int),
    "urs.roots": ("roots", "roots", lambda v: tuple(int(x) for x in v)),
    "prs.num_symbols": ("prs", "num_symbols", int),
    "prs.comb": ("prs", "comb", int),
    "prs.bandwidth_bins": ("prs", "bandwidth_bins", int),
    "prs.c_init_base": ("prs", "c_init_base", int),
    "channel.taps": ("channel", "taps", None),
    "channel.hw_offset": ("channel", "hw_offset", float),
    "channel.dl_snr_db": ("top", "dl_snr_db", None),
    "timing.ta_granularity": ("timing", "ta_granularity", int),
    "timing.ta_jitter": ("timing", "ta_jitter", float),
    "timing.p_d_max": ("timing", "p_d_max", int),
    "receiver.detector": ("top", "detector", str),
    "mf.bins": ("top", "mf_bins", str),
    "distances": ("top", "distances", lambda v: tuple(float(x) for x in v)),
    "snr_points": ("top", "snr_points", None),
    "M_values": ("top", "M_values", lambda v: tuple(int(x) for x in v)),
    "trials_per_point": ("top", "trials_per_point", int),
    "master_seed": ("top", "master_seed", int),
    "estimators": ("top", "estimators", lambda v: tuple(str(x).upper() for x in v)),
    "shift_mode": ("top", "shift_mode", str),
}


def parse_snr(v) -> float:
    if isinstance(v, str):
        key = v.strip().lower()
        if key in SNR_PRESETS:
            return SNR_PRESETS[key]
        try:
            return float(key)
        except ValueError:
            raise ScenarioValidationError(f"bad SNR value {v!r}") from None
    return float(v)


def _parse_taps(v) -> tuple:
    """Each tap is [delay_s, gain] or [delay_s, gain_re, gain_im]."""
    taps = []
    for t in v:
        if len(t) == 2:
            taps.append((float(t[0]), complex(t[1])))
        elif len(t) == 3:
            taps.append((float(t[0]), complex(float(t[1]), float(t[2]))))
        else:
            raise ScenarioValidationError(f"bad tap {t!r}")
    return tuple(taps)


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def scenario_from_mapping(data: dict) -> ScenarioConfig:
    flat = _flatten(data or {})
    sections = {s: {} for s in ("ofdm", "urs", "roots", "prs", "channel", "timing", "top")}
    for key, value in flat.items():
        if key not in _KEYS:
            warnings.warn(f"unknown scenario key {key!r} ignored", ScenarioWarning, stacklevel=2)
            continue
        section, attr, conv = _KEYS[key]
        if key == "channel.taps":
            value = _parse_taps(value)
        elif key == "snr_points":
            value = tuple(parse_snr(x) for x in value)
        elif key == "channel.dl_snr_db":
            value = parse_snr(value)
        elif conv is not None:
            try:
                value = conv(value)
            except (TypeError, ValueError) as e:
                raise ScenarioValidationError(f"{key}: {e}") from None
        sections[section][attr] = value

    try:
        o = sections["ofdm"]
        if "sample_rate" not in o and ("fft_size" in o or "scs" in o):
            o["sample_rate"] = o.get("fft_size", 1536) * o.get("scs", 30e3)
        ofdm = OfdmConfig(**o)
        urs = ZcParams(**{"n_zc": 1259, "q": 1, **sections["urs"]})
        roots = None
        if sections["roots"]:
            roots = MultiRootConfig(urs.n_zc, sections["roots"]["roots"])
            if len(roots.roots) != 2:
                raise InvalidParams("urs.roots must list exactly two roots")
        prs = PrsConfig(**sections["prs"])
        channel = ChannelSpec(**sections["channel"])
        timing = TimingModel(**sections["timing"])
        if timing.ta_granularity < 1 or timing.p_d_max < 0 or timing.ta_jitter < 0:
            raise InvalidParams("timing.* values out of range")
    except InvalidParams as e:
        raise ScenarioValidationError(str(e)) from None
    return ScenarioConfig(ofdm=ofdm, urs=urs, roots=roots, prs=prs, channel=channel,
                          timing=timing, **sections["top"])


def load_scenario(path) -> ScenarioConfig:
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as e:
        mark = e.problem_mark or e.context_mark
        raise ScenarioParseError(str(e.problem or e), mark.line + 1 if mark else None) from None
    except yaml.YAMLError as e:
        raise ScenarioParseError(str(e)) from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ScenarioParseError("scenario file must be a mapping of keys to values", 1)
    return scenario_from_mapping(data)


@dataclass
class TrialRecord:
    distance_true: float
    snr: float
    M: int
    estimator: str
    d_hat: float
    error: float
    rtt_samples: float
    ta: int
    p_d: float
    nu: int
    root_used: int
    seed: int
    status: str = "ok"


RECORD_FIELDS = [f.name for f in fields(TrialRecord)]


def _point_key(distance: float, snr: float, m: int) -> int:
    return zlib.crc32(f"{distance!r}|{snr!r}|{m}".encode())


def trial_seed(master_seed: int, distance: float, snr: float, m: int,
               trial: int) -> np.random.SeedSequence:
    """Seeds depend on the point's values, not its position in the sweep."""
    return np.random.SeedSequence(master_seed, spawn_key=(_point_key(distance, snr, m), trial))


def _run_trial(cfg: ScenarioConfig, distance: float, snr: float, m: int, trial: int) -> list:
    ss = trial_seed(cfg.master_seed, distance, snr, m, trial)
    seed = int(ss.generate_state(1)[0])
    rng = np.random.default_rng(ss)
    tau = propagation_delay(distance, cfg.ofdm)
    p_d_true = int(rng.integers(0, cfg.timing.p_d_max + 1))
    ta = model_ta(tau, cfg.timing.ta_granularity, cfg.timing.ta_jitter, rng)
    base = dict(distance_true=distance, snr=snr, M=m, seed=seed)
    try:
        setup = RoundSetup(
            timing=TimingState(tau, ta, p_d_true), cfg=cfg.ofdm, base=cfg.urs, roots=cfg.roots,
            prs=cfg.prs, channel=ChannelSpec(cfg.channel.taps, snr, cfg.channel.hw_offset),
            dl_snr_db=cfg.dl_snr_db, shift_mode=cfg.shift_mode, detector=cfg.detector,
        )
        rounds = run_measurement_batch(setup, m, rng)
    except CsrttError as e:
        msg = f"error: {type(e).__name__}: {e}"
        return [TrialRecord(estimator=est, d_hat=math.nan, error=math.nan,
                            rtt_samples=math.nan, ta=ta, p_d=math.nan, nu=-1, root_used=-1,
                            status=msg, **base) for est in cfg.estimators]
    batch = MeasurementBatch.from_rounds(rounds, distance)
    window = cfg.ofdm.fft_size // cfg.ofdm.comb
    out = []
    for est in cfg.estimators:
        if est == "PD":
            r = pd_estimate(batch, cfg.ofdm, setup.calibration, search_window=window)
        else:
            r = mf_estimate(build_covariance(batch, cfg.mf_bins), cfg.ofdm,
                            calibration=setup.calibration / cfg.ofdm.sample_rate)
        out.append(TrialRecord(
            estimator=est, d_hat=r.d_hat, error=abs(r.d_hat - distance),
            rtt_samples=float(rounds.rtt_samples[0]), ta=ta, p_d=float(rounds.p_d[0]),
            nu=int(rounds.nu[0]), root_used=int(rounds.root_used), **base,
        ))
    return out


def sweep_tasks(cfg: ScenarioConfig) -> list:
    return [(d, s, m, t) for d in cfg.distances for s in cfg.snr_points
            for m in cfg.M_values for t in range(cfg.trials_per_point)]


def run_sweep(cfg: ScenarioConfig, threads: int = 1, progress=None) -> list:
    """Run every trial of every (distance, snr, M) point; returns TrialRecords.

    Output order is the task order regardless of ``threads``.
    """
    tasks = sweep_tasks(cfg)
    log.info("running %d trials", len(tasks))
    if threads <= 1:
        chunks = [_run_trial(cfg, *t) for t in tasks]
    else:
        with ThreadPoolExecutor(threads) as pool:
            chunks = list(pool.map(lambda t: _run_trial(cfg, *t), tasks))
    return [r for chunk in chunks for r in chunk]


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.9g}"
    return str(v)


def _json_value(v):
    if isinstance(v, float):
        return float(f"{v:.9g}") if math.isfinite(v) else f"{v}"
    return v


def export(records: list, fmt: str, path) -> Path:
    """Write records as ``csv`` or ``jsonl``; refuses to write an empty file."""
    if not records:
        raise EmptyInput("no records to export")
    path = Path(path)
    buf = io.StringIO()
    if fmt == "csv":
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(RECORD_FIELDS)
        for r in records:
            w.writerow([_fmt(getattr(r, f)) for f in RECORD_FIELDS])
    elif fmt in ("jsonl", "json-lines"):
        for r in records:
            buf.write(json.dumps({f: _json_value(getattr(r, f)) for f in RECORD_FIELDS}) + "\n")
    else:
        raise ValueError(f"unknown export format {fmt!r}")
    path.write_text(buf.getvalue())
    return path


_FIELD_TYPES = {f.name: f.type for f in fields(TrialRecord)}


def _coerce(name, v):
    t = _FIELD_TYPES[name]
    if t in (float, "float"):
        return float(v)
    if t in (int, "int"):
        return int(float(v))
    return str(v)


def read_records(path) -> list:
    """Load records written by :func:`export` (format sniffed from content)."""
    text = Path(path).read_text()
    if not text.strip():
        raise EmptyInput(f"{path} is empty")
    if text.lstrip().startswith("{"):
        rows = [json.loads(line) for line in text.splitlines() if line.strip()]
    else:
        rows = list(csv.DictReader(io.StringIO(text)))
    return [TrialRecord(**{k: _coerce(k, row[k]) for k in RECORD_FIELDS}) for row in rows]


def report_cdf(records: list, group_by=("estimator", "snr", "M"),
               percentiles=DEFAULT_PERCENTILES) -> list:
    """Percentiles of |error| per group; failed trials are counted but excluded."""
    unknown = [g for g in group_by if g not in RECORD_FIELDS]
    if unknown:
        raise ValueError(f"cannot group by {unknown}; fields are {RECORD_FIELDS}")
    groups = {}
    for r in records:
        key = tuple(getattr(r, g) for g in group_by)
        groups.setdefault(key, []).append(r)
    rows = []
    for key in sorted(groups, key=lambda k: tuple(str(x) for x in k)):
        recs = groups[key]
        errs = [r.error for r in recs if r.status == "ok"]
        row = dict(zip(group_by, key))
        row["n"] = len(errs)
        row["failed"] = len(recs) - len(errs)
        cdf = ecdf(errs) if errs else None
        for p in percentiles:
            row[f"p{p:g}"] = cdf.percentile(p) if cdf else math.nan
        rows.append(row)
    return rows


def format_report(rows: list) -> str:
    if not rows:
        return ""
    cols = list(rows[0])
    table = [[_fmt(r[c]) if not isinstance(r[c], float) else f"{r[c]:.4g}" for c in cols]
             for r in rows]
    widths = [max(len(c), *(len(t[i]) for t in table)) for i, c in enumerate(cols)]
    lines = ["  ".join(c.rjust(w) for c, w in zip(cols, widths))]
    lines += ["  ".join(v.rjust(w) for v, w in zip(t, widths)) for t in table]
    return "\n".join(lines)


def records_as_dicts(records: list) -> list:
    return [asdict(r) for r in records]
