import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import signal as sps

from pemo.peripheral_model import (
    LoopState,
    PeripheralConfig,
    adaptation_loops,
    ear_impulse_response,
    erb_number_to_freq,
    erb_space,
    freq_to_erb_number,
    gammatone_filterbank,
    ihc_filter,
    ihc_transduction,
    initial_states,
    limiter_thresholds,
    outer_middle_ear,
    overshoot_limiter,
    peripheral_stages,
)
from pemo.signal_io import AudioSignal

from conftest import tone


def glasberg_moore_freq(e):
    # ERB-number scale inverted by hand: E = 21.4 log10(1 + 0.00437 f)
    return (10 ** (e / 21.4) - 1) / 0.00437


def test_erb_scale_round_trip():
    f = np.array([100.0, 520.0, 4000.0])
    np.testing.assert_allclose(erb_number_to_freq(freq_to_erb_number(f)), f, rtol=1e-12)


def test_band_centres():
    fc, erbn = erb_space(80, 8000, 1)
    assert len(fc) == 31
    np.testing.assert_allclose(erbn, np.arange(3, 34), atol=0.02)
    np.testing.assert_allclose(fc, glasberg_moore_freq(np.arange(3, 34)), rtol=0.011)
    assert fc[0] == pytest.approx(87, abs=0.5)
    assert fc[-1] == pytest.approx(7819, abs=1)
    assert fc[8] == pytest.approx(520, abs=1)


def test_config_defaults_and_validation():
    cfg = PeripheralConfig()
    assert cfg.n_bands == 31
    assert cfg.limiter_factor == 5.0
    with pytest.raises(ValueError):
        PeripheralConfig(tau=(0.05, 0.005, 0.129, 0.253, 0.5))
    with pytest.raises(ValueError):
        PeripheralConfig(tau=(0.0, 0.05, 0.129, 0.253, 0.5))
    with pytest.raises(ValueError):
        PeripheralConfig(limiter_factor=1.0)
    PeripheralConfig(limiter_factor=np.inf)


def _gain_db(freq, fs=44100.0):
    x = tone(freq, 70, 0.5, fs)
    y = outer_middle_ear(x).samples
    i = slice(2048, len(y) - 2048)
    return 20 * np.log10(np.std(y[i]) / np.std(x.samples[i]))


@pytest.mark.parametrize("freq, expected", [(800, 0.0), (2750, -3.0), (5000, -13.0)])
def test_ear_filter_anchor_gains(freq, expected):
    assert _gain_db(freq) == pytest.approx(expected, abs=1.0)


def test_ear_filter_800_hz_is_middle_ear_maximum():
    assert _gain_db(800) > _gain_db(400)
    assert _gain_db(800) > _gain_db(1600) - 3  # the ear canal resonance sits higher up


def test_ear_impulse_response_length():
    assert len(ear_impulse_response(44100.0)) == 1023


def test_ear_filter_needs_16k():
    with pytest.raises(ValueError):
        outer_middle_ear(AudioSignal(np.ones(100), 8000))


def test_gammatone_tone_lands_in_its_band():
    cfg = PeripheralConfig()
    fc = cfg.center_frequencies
    for m in (2, 8, 15, 25, 30):
        x = tone(fc[m], 60, 0.2)
        bands = gammatone_filterbank(x, cfg)
        lv = np.sqrt(np.mean(bands.data[:, 2000:] ** 2, axis=1))
        assert int(np.argmax(lv)) == m
        assert round(bands.bands[m].erb_number) == m + 3


def test_gammatone_fs_check():
    with pytest.raises(ValueError):
        gammatone_filterbank(AudioSignal(np.zeros(100), 16000), PeripheralConfig())


def test_gammatone_unit_gain_at_fc():
    cfg = PeripheralConfig()
    x = tone(1000, 60, 0.3)
    b = gammatone_filterbank(x, PeripheralConfig(flow=1000, fhigh=1000.001))
    assert 20 * np.log10(np.std(b.data[0, 4000:]) / np.std(x.samples[4000:])) == pytest.approx(0, abs=0.1)
    assert cfg.n_bands == 31


def _cascade_response(f, fs=44100.0):
    b, a = ihc_filter(fs)
    _, h = sps.freqz(b, a, worN=np.atleast_1d(f), fs=fs)
    return 5 * 20 * np.log10(np.abs(h))


def test_ihc_cascade_cutoff():
    f = np.linspace(500, 1000, 5001)
    g = _cascade_response(f)
    f3 = f[np.argmin(np.abs(g + 3))]
    assert f3 == pytest.approx(770, rel=0.05)
    assert _cascade_response(4000)[0] < -15


def test_ihc_passes_slow_envelope():
    fs = 44100.0
    env = 0.5 + 0.4 * np.sin(2 * np.pi * 4 * np.arange(int(fs)) / fs)
    y = ihc_transduction(env, fs)
    b, a = ihc_filter(fs)
    d = int(round(5 * sps.group_delay((b, a), [10.0], fs=fs)[1][0]))
    np.testing.assert_allclose(y[2000:], env[2000 - d:len(env) - d], atol=1e-3)


def test_ihc_keeps_dc_of_4k_carrier():
    fs = 44100.0
    x = tone(4000, 90, 0.2, fs).samples
    y = ihc_transduction(x, fs)
    ss = y[4000:]
    dc = np.mean(np.maximum(x, 0))
    assert np.mean(ss) == pytest.approx(dc, rel=0.02)
    # the carrier ripple that survives is far below the DC part
    assert 20 * np.log10(np.std(ss) / np.mean(ss)) < -15


def test_loop_constants():
    s0 = initial_states(1e-5)
    np.testing.assert_allclose(s0, [1e-5 ** (1 / 2 ** i) for i in range(1, 6)])
    assert s0[-1] == pytest.approx(0.6978, abs=1e-4)
    st_ = LoopState.create(44100.0)
    np.testing.assert_allclose(st_.a1, np.exp(-1 / (np.array([0.005, 0.05, 0.129, 0.253, 0.5]) * 44100)))
    np.testing.assert_allclose(st_.a1 + st_.b0, 1.0)


def test_limiter_thresholds():
    t10 = limiter_thresholds(10.0)
    t5 = limiter_thresholds(5.0)
    assert t10[0] == pytest.approx(10.0, abs=1e-3)
    assert t5[0] == pytest.approx(5.0, abs=1e-3)
    assert t10[-1] == pytest.approx(5.1, abs=0.05)
    assert t5[-1] == pytest.approx(2.6, abs=0.05)


def test_limiter_continuity_and_asymptote():
    for c in (1.5, 4.0, 9.0):
        assert overshoot_limiter(1.0, c) == pytest.approx(1.0)
        assert overshoot_limiter(1.0 + 1e-9, c) == pytest.approx(1.0, abs=1e-8)
        assert overshoot_limiter(1e6, c) == pytest.approx(c + 1)
        np.testing.assert_array_equal(overshoot_limiter([0.2, 0.9], c), [0.2, 0.9])


def test_loops_steady_state_anchors():
    fs = 8000.0
    cfg = PeripheralConfig()
    assert adaptation_loops(np.ones(int(5 * fs)), fs, cfg)[-1] == pytest.approx(100.0, abs=0.1)
    assert adaptation_loops(np.full(1000, 1e-5), fs, cfg)[-1] == pytest.approx(0.0, abs=1e-9)
    assert adaptation_loops(np.zeros(100), fs, cfg)[-1] == pytest.approx(0.0, abs=1e-9)


def test_loops_reject_negative_input():
    with pytest.raises(ValueError):
        adaptation_loops(np.array([0.1, -0.1]), 8000.0)


def test_loops_steady_output_monotone_in_level():
    fs = 4000.0
    levels = np.arange(0, 101, 10)
    out = [adaptation_loops(np.full(int(4 * fs), 10 ** ((L - 100) / 20)), fs)[-1] for L in levels]
    assert np.all(np.diff(out) > 0)


def test_loops_2d_matches_rows():
    fs = 8000.0
    x = np.abs(np.random.default_rng(0).standard_normal((3, 800))) * 0.01
    y = adaptation_loops(x, fs)
    for i in range(3):
        np.testing.assert_array_equal(y[i], adaptation_loops(x[i], fs))


def test_limiter_leaves_low_level_onsets_alone():
    from pemo.experiment_cli import tone_response

    for lvl in (10, 20):
        free = tone_response(lvl, np.inf)[2]
        lim = tone_response(lvl, 10.0)[2]
        assert abs(lim - free) / free < 0.05


@given(st.integers(0, 2 ** 32 - 1))
@settings(max_examples=20, deadline=None)
def test_loops_deterministic(seed):
    x = np.abs(np.random.default_rng(seed).standard_normal(500)) * 0.1
    np.testing.assert_array_equal(adaptation_loops(x, 8000.0), adaptation_loops(x, 8000.0))


def test_peripheral_stages_shape():
    x = tone(1000, 60, 0.1)
    out = peripheral_stages(x, PeripheralConfig())
    assert out.data.shape == (31, len(x))
    assert out.fc[8] == pytest.approx(520, abs=1)
