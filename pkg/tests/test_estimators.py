import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csrtt.channel import ChannelSpec, TimingState
from csrtt.errors import EmptyInput, GridDegenerate, LengthMismatch
from csrtt.estimators import (
    CovarianceMatrix,
    MeasurementBatch,
    build_covariance,
    ecdf,
    mf_estimate,
    mf_objective,
    pd_estimate,
)
from csrtt.ofdm import SPEED_OF_LIGHT, OfdmConfig
from csrtt.urs_rtt import RoundSetup, run_measurement_batch

from conftest import crandn

K = 1536


def cir_with_peaks(idx, k=K):
    c = np.zeros((len(idx), k), complex)
    for i, p in enumerate(idx):
        c[i, p] = 1.0
    return MeasurementBatch(c, c, np.arange(k))


def test_pd_examples(cfg):
    assert pd_estimate(cir_with_peaks([0]), cfg).d_hat == 0
    assert pd_estimate(cir_with_peaks([2]), cfg).d_hat == pytest.approx(
        299792458 * 2 / (2 * 46.08e6))
    assert round(pd_estimate(cir_with_peaks([2]), cfg).d_hat, 3) == 6.506
    assert round(pd_estimate(cir_with_peaks([2, 3]), cfg).d_hat, 3) == 8.132


def test_pd_window_and_calibration(cfg):
    b = cir_with_peaks([5])
    b.cirs[0, 1000] = 2.0
    assert pd_estimate(b, cfg, search_window=768).d_hat == pytest.approx(5 * cfg.sample_distance)
    assert pd_estimate(cir_with_peaks([5]), cfg, calibration=2).d_hat == pytest.approx(
        3 * cfg.sample_distance)


def test_batch_validation():
    with pytest.raises(LengthMismatch):
        MeasurementBatch(np.ones((2, 8)), np.ones((3, 8)), np.arange(8))
    with pytest.raises(EmptyInput):
        MeasurementBatch(np.ones((0, 8)), np.ones((0, 8)), np.arange(8))


def test_covariance_rank_one(rng):
    y = crandn(rng, 64)
    b = MeasurementBatch(y[None], y[None], np.arange(64))
    r = build_covariance(b).matrix
    assert np.allclose(r, np.outer(y, y.conj()), atol=1e-12)
    rep = MeasurementBatch(np.tile(y, (5, 1)), np.tile(y, (5, 1)), np.arange(64))
    r5 = build_covariance(rep).matrix
    assert np.allclose(r5, r, atol=1e-12)
    assert np.linalg.matrix_rank(r5, tol=1e-8) == 1


def test_covariance_matches_definition(rng):
    y = crandn(rng, 6 * 40).reshape(6, 40)
    occ = np.arange(0, 40, 3)
    b = MeasurementBatch(y, y, occ)
    ref = sum(np.outer(v[occ], v[occ].conj()) for v in y) / 6
    assert np.allclose(build_covariance(b).matrix, ref, atol=1e-12)
    full = build_covariance(b, "full")
    assert full.matrix.shape == (40, 40)
    with pytest.raises(ValueError):
        build_covariance(b, "some")


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), m=st.integers(1, 12))
def test_covariance_psd(seed, m):
    rng = np.random.default_rng(seed)
    y = crandn(rng, m * 48).reshape(m, 48)
    r = build_covariance(MeasurementBatch(y, y, np.arange(48))).matrix
    assert np.max(np.abs(r - r.conj().T)) <= 1e-9
    assert np.linalg.eigvalsh(r).min() >= -1e-9 * np.trace(r).real


def test_from_dense_roundtrip(rng):
    a = crandn(rng, 20 * 5).reshape(20, 5)
    r = a @ a.conj().T
    cm = CovarianceMatrix.from_dense(r)
    assert np.allclose(cm.matrix, r, atol=1e-9)
    v = crandn(rng, 20)
    assert cm.quadratic(v) == pytest.approx(np.real(v.conj() @ r @ v))


def single_path_cov(cfg, tau_s, bins=None):
    bins = np.arange(1259) if bins is None else bins
    y = np.exp(-2j * np.pi * bins * cfg.scs * tau_s)
    return CovarianceMatrix(y[:, None], bins)


def test_objective_matches_quadratic_form(cfg, rng):
    y = crandn(rng, 3 * 100).reshape(100, 3)
    bins = np.arange(100) * 2 + 1
    cm = CovarianceMatrix(y, bins)
    r = cm.matrix
    for tau in (0.0, 1.3e-7, 9e-6):
        v = np.exp(-2j * np.pi * bins * cfg.scs * tau)
        assert mf_objective(cm, cfg, tau)[0] == pytest.approx(np.real(v.conj() @ r @ v))


def test_grid_czt_matches_direct(cfg, rng):
    from csrtt.estimators import _grid_objective
    y = crandn(rng, 4 * 200).reshape(200, 4)
    cm = CovarianceMatrix(y, np.arange(200) * 2)
    grid = _grid_objective(cm, cfg, 1e-8, 3e-9, 500)
    direct = mf_objective(cm, cfg, 1e-8 + 3e-9 * np.arange(500))
    assert np.allclose(grid, direct, rtol=1e-9)
    irregular = CovarianceMatrix(y, np.r_[np.arange(100), np.arange(150, 250)])
    assert np.allclose(_grid_objective(irregular, cfg, 0.0, 3e-9, 50),
                       mf_objective(irregular, cfg, 3e-9 * np.arange(50)))


def test_mf_on_grid_point(cfg):
    step = 1 / (8 * 1259 * cfg.scs)
    tau = 37 * step
    est = mf_estimate(single_path_cov(cfg, tau), cfg)
    assert abs(est.d_hat - SPEED_OF_LIGHT * tau / 2) <= step / 100 * SPEED_OF_LIGHT / 2
    assert est.estimator == "MF"


def test_mf_flat_objective_returns_t_min(cfg):
    cm = CovarianceMatrix.from_dense(np.eye(64))
    assert mf_estimate(cm, cfg).tau_hat == 0.0
    assert mf_estimate(cm, cfg, t_min=1e-7, t_max=2e-6).tau_hat == pytest.approx(1e-7)


@pytest.mark.parametrize("frac", [0.25, 0.5, 0.73, 3.41, 11.9])
def test_mf_fractional_delay(cfg, frac):
    tau = frac / cfg.sample_rate
    est = mf_estimate(single_path_cov(cfg, tau), cfg)
    assert abs(est.d_hat - SPEED_OF_LIGHT * tau / 2) < cfg.sample_distance / 4


def test_mf_calibration(cfg):
    tau = 10 / cfg.sample_rate
    est = mf_estimate(single_path_cov(cfg, tau), cfg, calibration=4 / cfg.sample_rate)
    assert est.tau_hat == pytest.approx(6 / cfg.sample_rate, abs=1e-11)


def test_mf_grid_errors(cfg):
    cm = single_path_cov(cfg, 0.0)
    with pytest.raises(GridDegenerate):
        mf_estimate(cm, cfg, step=0)
    with pytest.raises(GridDegenerate):
        mf_estimate(cm, cfg, t_min=1e-6, t_max=1e-7)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), phase=st.floats(0, 2 * np.pi))
def test_mf_global_phase_invariance(seed, phase):
    cfg = OfdmConfig()
    rng = np.random.default_rng(seed)
    y = crandn(rng, 4 * 128).reshape(4, 128)
    occ = np.arange(128)
    a = MeasurementBatch(y, y, occ)
    rot = y * np.exp(1j * phase)
    b = MeasurementBatch(rot, rot, occ)
    ca, cb = build_covariance(a), build_covariance(b)
    taus = np.linspace(0, 2e-6, 64)
    assert np.allclose(mf_objective(ca, cfg, taus), mf_objective(cb, cfg, taus), rtol=1e-9)
    assert mf_estimate(ca, cfg).tau_hat == pytest.approx(mf_estimate(cb, cfg).tau_hat, abs=1e-12)


def test_mf_end_to_end_noiseless(cfg):
    tau = 5.37
    setup = RoundSetup(timing=TimingState(tau, 0, 0))
    rb = run_measurement_batch(setup, 1, seed=0)
    b = MeasurementBatch.from_rounds(rb)
    est = mf_estimate(build_covariance(b), cfg)
    assert est.tau_hat * cfg.sample_rate == pytest.approx(2 * tau, abs=0.01)


def test_pd_mf_agree_at_high_snr(cfg):
    agree = 0
    rng = np.random.default_rng(1)
    trials = 40
    for t in range(trials):
        tau = int(rng.integers(1, 40))
        setup = RoundSetup(timing=TimingState(tau, 2 * tau, 0),
                           channel=ChannelSpec(snr_db=30.0), dl_snr_db=30.0)
        b = MeasurementBatch.from_rounds(run_measurement_batch(setup, 20, seed=t))
        pd = pd_estimate(b, cfg, search_window=K)
        mf = mf_estimate(build_covariance(b), cfg)
        agree += abs(pd.d_hat - mf.d_hat) <= cfg.sample_distance
    assert agree >= 0.95 * trials


def test_ecdf_examples():
    e = ecdf([1.0])
    assert e(0.999) == 0 and e(1.0) == 1.0
    assert e.points == [(1.0, 1.0)]
    assert ecdf([1, 2, 3, 4]).percentile(90) == pytest.approx(3.7)
    assert ecdf([0, 0, 0]).percentile(90) == 0
    assert ecdf([-2, 1]).points == [(1.0, 0.5), (2.0, 1.0)]
    with pytest.raises(EmptyInput):
        ecdf([])


@settings(max_examples=50, deadline=None)
@given(xs=st.lists(st.floats(0, 1e3), min_size=1, max_size=50), p=st.floats(0, 100))
def test_ecdf_percentile_bounds(xs, p):
    e = ecdf(xs)
    v = e.percentile(p)
    assert min(xs) - 1e-9 <= v <= max(xs) + 1e-9
    assert e(max(xs)) == 1.0
