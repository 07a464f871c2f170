import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csrtt.errors import GridOverflow, InvalidParams, LengthMismatch
from csrtt.ofdm import OfdmConfig, extract_occupied, map_to_grid, to_freq, to_time
from csrtt.sequences import ZcParams, zc_generate

from conftest import crandn


def test_defaults_and_sample_distance(cfg):
    assert cfg.sample_rate == cfg.fft_size * cfg.scs
    assert abs(cfg.sample_distance - 299792458 / (2 * 46.08e6)) < 1e-12


def test_inconsistent_sample_rate():
    with pytest.raises(InvalidParams):
        OfdmConfig(sample_rate=40e6)
    with pytest.raises(InvalidParams):
        OfdmConfig(comb=3)
    with pytest.raises(InvalidParams):
        OfdmConfig(comb=2, comb_offset=2)


def test_zc_fills_lower_bins(cfg):
    g = map_to_grid(zc_generate(ZcParams(1259, 1)), cfg)
    assert np.all(g.bins[:1259] != 0)
    assert np.all(g.bins[1259:] == 0)
    assert np.count_nonzero(g.bins == 0) == cfg.fft_size - 1259


def test_empty_sequence_gives_zero_grid(cfg):
    g = map_to_grid(np.array([]), cfg)
    assert not np.any(g.bins)
    assert len(extract_occupied(g, 0)) == 0


def test_comb_offset_mapping():
    c = OfdmConfig(first_bin=10, comb=2, comb_offset=1)
    g = map_to_grid(np.arange(1, 5), c)
    assert list(np.flatnonzero(g.bins)) == [11, 13, 15, 17]


def test_overflow(cfg):
    with pytest.raises(GridOverflow):
        map_to_grid(np.ones(cfg.fft_size + 1), cfg)
    with pytest.raises(GridOverflow):
        map_to_grid(np.ones(769), cfg.with_comb(2, 0))
    with pytest.raises(GridOverflow):
        map_to_grid(np.ones(100), OfdmConfig(first_bin=1500))


def test_to_time_examples(cfg):
    zero = map_to_grid(np.array([]), cfg)
    assert not np.any(to_time(zero))
    dc = map_to_grid(np.array([1.0]), cfg)
    assert np.allclose(to_time(dc), 1 / np.sqrt(cfg.fft_size), atol=1e-15)
    t = np.zeros(cfg.fft_size, complex)
    t[0] = 1
    assert np.allclose(to_freq(t, cfg).bins, 1 / np.sqrt(cfg.fft_size))


def test_to_freq_length(cfg):
    with pytest.raises(LengthMismatch):
        to_freq(np.ones(10), cfg)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(0, 1536), comb=st.sampled_from([1, 2]))
def test_parseval_and_inverses(seed, n, comb):
    cfg = OfdmConfig(comb=comb, comb_offset=seed % comb)
    n = min(n, (cfg.fft_size - cfg.comb_offset + comb - 1) // comb)
    rng = np.random.default_rng(seed)
    s = crandn(rng, n)
    g = map_to_grid(s, cfg)
    assert np.array_equal(extract_occupied(g, n), s)
    t = to_time(g)
    e = np.sum(np.abs(g.bins) ** 2)
    assert abs(np.sum(np.abs(t) ** 2) - e) <= 1e-9 * max(e, 1)
    back = to_freq(t, cfg).bins
    assert np.sqrt(np.mean(np.abs(back - g.bins) ** 2)) < 1e-9


def test_time_freq_inverse_other_direction(cfg, rng):
    t = crandn(rng, cfg.fft_size)
    assert np.sqrt(np.mean(np.abs(to_time(to_freq(t, cfg)) - t) ** 2)) < 1e-9


def test_comb_users_disjoint(cfg, rng):
    a_cfg, b_cfg = cfg.with_comb(2, 0), cfg.with_comb(2, 1)
    a, b = crandn(rng, 600), crandn(rng, 600)
    ga, gb = map_to_grid(a, a_cfg), map_to_grid(b, b_cfg)
    assert not np.any((ga.bins != 0) & (gb.bins != 0))
    both = ga + gb
    assert np.array_equal(extract_occupied(both, 600, a_cfg), a)
    assert np.array_equal(extract_occupied(both, 600, b_cfg), b)
    assert len(both.occupied) == 1200
