import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csrtt.channel import (
    ChannelSpec,
    TimingState,
    add_awgn,
    apply_channel,
    model_ta,
    propagation_delay,
)
from csrtt.errors import InvalidParams, ZeroEnergy
from csrtt.ofdm import SPEED_OF_LIGHT, map_to_grid, to_time
from csrtt.sequences import ZcParams, zc_dft

from conftest import crandn


def test_propagation_delay(cfg):
    assert propagation_delay(0, cfg) == 0
    assert abs(propagation_delay(SPEED_OF_LIGHT / cfg.sample_rate, cfg) - 1) < 1e-12
    assert round(propagation_delay(10, cfg), 4) == 1.5371
    assert abs(propagation_delay(10, cfg) - 10 * 46.08e6 / 299792458) < 1e-12
    with pytest.raises(InvalidParams):
        propagation_delay(-1, cfg)


def test_channel_spec_validation():
    with pytest.raises(InvalidParams):
        ChannelSpec(taps=())
    with pytest.raises(InvalidParams):
        ChannelSpec(taps=((-1e-9, 1),))
    with pytest.raises(InvalidParams):
        ChannelSpec(taps=((1e-8, 1), (0.0, 1)))


def test_identity_channel(cfg, rng):
    g = map_to_grid(crandn(rng, 900), cfg)
    assert np.allclose(apply_channel(g, ChannelSpec()).bins, g.bins, atol=0)


@pytest.mark.parametrize("d", [0, 1, 37, 768, 1535])
def test_integer_delay_is_roll(cfg, rng, d):
    g = map_to_grid(crandn(rng, 1000), cfg)
    out = to_time(apply_channel(g, ChannelSpec(), float(d)))
    assert np.sqrt(np.mean(np.abs(out - np.roll(to_time(g), d)) ** 2)) < 1e-9


def test_tap_delay_and_hw_offset_add(cfg, rng):
    g = map_to_grid(crandn(rng, 500), cfg)
    ts = 1 / cfg.sample_rate
    spec = ChannelSpec(taps=((3 * ts, 1.0),), hw_offset=2 * ts)
    out = to_time(apply_channel(g, spec, 5.0))
    assert np.allclose(out, np.roll(to_time(g), 10), atol=1e-9)


def test_fractional_delay_splits_symmetrically(cfg):
    base = ZcParams(1259, 1)
    g = map_to_grid(zc_dft(base), cfg)
    out = apply_channel(g, ChannelSpec(), 40.5)
    # correlate in frequency and look at the K-point CIR
    z = out.bins * np.conj(g.bins)
    cir = np.abs(np.fft.ifft(z))
    top = sorted(np.argsort(cir)[-2:])
    assert top == [40, 41]
    assert abs(cir[40] - cir[41]) < 1e-9 * cir[40]


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), delay=st.floats(0, 1536))
def test_linearity(seed, delay):
    from csrtt.ofdm import OfdmConfig
    cfg = OfdmConfig()
    rng = np.random.default_rng(seed)
    g1, g2 = map_to_grid(crandn(rng, 700), cfg), map_to_grid(crandn(rng, 700), cfg)
    a, b = complex(*rng.standard_normal(2)), complex(*rng.standard_normal(2))
    spec = ChannelSpec(taps=((0.0, 1.0), (2e-8, 0.3j)))
    mix = map_to_grid(a * g1.bins[:700] + b * g2.bins[:700], cfg)
    lhs = apply_channel(mix, spec, delay).bins
    rhs = a * apply_channel(g1, spec, delay).bins + b * apply_channel(g2, spec, delay).bins
    assert np.sqrt(np.mean(np.abs(lhs - rhs) ** 2)) < 1e-9


def test_awgn_examples(cfg, rng):
    g = map_to_grid(crandn(rng, 1259), cfg)
    assert np.sqrt(np.mean(np.abs(add_awgn(g, 300, 1).bins - g.bins) ** 2)) < 1e-6
    assert np.array_equal(add_awgn(g, 10, 7).bins, add_awgn(g, 10, 7).bins)
    assert not np.array_equal(add_awgn(g, 10, 7).bins, add_awgn(g, 10, 8).bins)
    assert np.array_equal(add_awgn(g, np.inf, 1).bins, g.bins)
    # noise lands on every bin, including unoccupied ones
    assert np.all(add_awgn(g, 0, 1).bins[1259:] != 0)


def test_awgn_zero_energy(cfg):
    g = map_to_grid(np.zeros(10), cfg)
    with pytest.raises(ZeroEnergy):
        add_awgn(g, 10, 0)


@pytest.mark.parametrize("snr_db", [0.0, -20.0, 30.0])
def test_awgn_calibration(snr_db):
    from csrtt.ofdm import OfdmConfig
    cfg = OfdmConfig(fft_size=100_000, scs=1.0, sample_rate=100_000.0)
    rng = np.random.default_rng(3)
    g = map_to_grid(crandn(rng, 100_000), cfg)
    noise = add_awgn(g, snr_db, 11).bins - g.bins
    measured = 10 * np.log10(np.mean(np.abs(g.bins) ** 2) / np.mean(np.abs(noise) ** 2))
    assert abs(measured - snr_db) < 0.1


def test_model_ta_examples():
    assert model_ta(100.0, 1, 0) == 200
    assert model_ta(100.3, 8, 0) == 200
    assert model_ta(0.0, 12) == 0
    assert model_ta(1.5, 12) == 0
    assert model_ta(3.1, 12) == 12  # 6.2 rounds up to the nearest multiple
    with pytest.raises(InvalidParams):
        model_ta(1.0, 0)


@settings(max_examples=100, deadline=None)
@given(tau=st.floats(0, 700), seed=st.integers(0, 2**32 - 1))
def test_model_ta_jitter_bound(tau, seed):
    ta = model_ta(tau, 1, 4.0, seed)
    assert ta >= 0
    # jitter bound plus half a step of integer rounding
    assert abs(ta - 2 * tau) <= 4.5


@settings(max_examples=100, deadline=None)
@given(tau=st.floats(0, 700), g=st.sampled_from([1, 4, 8, 12]))
def test_model_ta_is_nearest_multiple(tau, g):
    ta = model_ta(tau, g)
    assert ta % g == 0
    assert abs(ta - 2 * tau) <= g / 2 + 1e-9


@settings(max_examples=100, deadline=None)
@given(tau=st.floats(0, 1000), ta=st.integers(0, 2000), p=st.floats(0, 100))
def test_timing_identity(tau, ta, p):
    t = TimingState(tau, ta, p)
    assert abs(t.ue_sync_offset - (tau - p)) < 1e-9
    assert abs(t.ul_arrival - (2 * tau - ta - p)) < 1e-9


def test_timing_validation():
    with pytest.raises(InvalidParams):
        TimingState(-1, 0)
    with pytest.raises(InvalidParams):
        TimingState(1, -1)
    with pytest.raises(InvalidParams):
        TimingState(10, 0, 2, ue_sync_offset=5)
