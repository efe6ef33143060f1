import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.io import wavfile

from pemo.signal_io import (
    AudioSignal,
    RoveSpec,
    StimulusEntry,
    apply_cosine_ramp,
    draw_rove_db,
    level_db,
    load_manifest,
    load_stimulus,
    load_wav,
    mix_at_snr,
    noise_gain_for_snr,
    rms,
    rove_level,
    set_level,
    write_manifest,
    write_wav,
)


def test_audio_signal_rejects_bad_input():
    with pytest.raises(ValueError):
        AudioSignal(np.array([0.0, np.nan]), 1000)
    with pytest.raises(ValueError):
        AudioSignal(np.zeros(4), 0)
    with pytest.raises(ValueError):
        AudioSignal(np.zeros((2, 4)), 1000)


def test_samples_are_read_only():
    s = AudioSignal(np.zeros(4), 1000)
    with pytest.raises(ValueError):
        s.samples[0] = 1.0


def test_calibration_convention():
    assert level_db(np.ones(100)) == pytest.approx(100.0)
    assert level_db(np.full(100, 1e-5)) == pytest.approx(0.0)


def test_load_wav_silence(tmp_path):
    p = tmp_path / "z.wav"
    wavfile.write(p, 8000, np.zeros(100, dtype=np.int16))
    s = load_wav(p)
    assert s.fs == 8000
    assert np.all(s.samples == 0)


def test_load_wav_full_scale_square(tmp_path):
    p = tmp_path / "sq.wav"
    x = np.tile(np.array([32767, -32767], dtype=np.int16), 50)
    wavfile.write(p, 8000, x)
    s = load_wav(p)
    np.testing.assert_array_equal(s.samples[:4], [32767 / 32768, -32767 / 32768] * 2)


def test_load_wav_stereo_is_averaged(tmp_path):
    p = tmp_path / "st.wav"
    x = np.stack([np.full(10, 16384, np.int16), np.zeros(10, np.int16)], axis=1)
    wavfile.write(p, 8000, x)
    np.testing.assert_allclose(load_wav(p).samples, 0.25)


def test_load_wav_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_wav(tmp_path / "missing.wav")
    p = tmp_path / "empty.wav"
    wavfile.write(p, 8000, np.zeros(0, dtype=np.int16))
    with pytest.raises(ValueError):
        load_wav(p)
    p = tmp_path / "junk.wav"
    p.write_bytes(b"not a wav file")
    with pytest.raises(ValueError):
        load_wav(p)


def test_wav_round_trip_within_one_lsb(tmp_path, rng):
    x = 0.5 * rng.uniform(-1, 1, 1000)
    s = AudioSignal(x, 44100)
    write_wav(tmp_path / "r.wav", s)
    back = load_wav(tmp_path / "r.wav")
    assert back.fs == 44100
    assert np.max(np.abs(back.samples - x)) <= 2.0 ** -15


def test_set_level_sine_gain():
    t = np.arange(1000) / 1000
    s = AudioSignal(np.sin(2 * np.pi * 10 * t), 1000)
    out = set_level(s, 100.0)
    np.testing.assert_allclose(out.samples, np.sqrt(2) * s.samples, rtol=1e-12)


def test_set_level_zero_db():
    s = set_level(AudioSignal(np.arange(1.0, 11.0), 1000), 0.0)
    assert s.rms == pytest.approx(1e-5)


def test_set_level_silent_raises():
    with pytest.raises(ValueError):
        set_level(AudioSignal(np.zeros(10), 1000), 60)


@given(st.floats(-20, 120), st.integers(0, 2 ** 32 - 1))
@settings(max_examples=50, deadline=None)
def test_set_level_self_consistent_and_idempotent(target, seed):
    x = np.random.default_rng(seed).standard_normal(256)
    s = set_level(AudioSignal(x, 1000), target)
    assert s.level_db == pytest.approx(target, abs=0.01)
    np.testing.assert_allclose(set_level(s, target).samples, s.samples, rtol=1e-12)


def test_cosine_ramp_identity_and_endpoints():
    s = AudioSignal(np.ones(101), 100)
    assert np.array_equal(apply_cosine_ramp(s, 0.0).samples, s.samples)
    down = apply_cosine_ramp(s, 0.5, "down").samples
    assert down[-1] == pytest.approx(0.0, abs=1e-12)
    assert np.all(down[:51] == 1.0)
    up = apply_cosine_ramp(s, 0.5, "up").samples
    assert up[0] == pytest.approx(0.0, abs=1e-12)
    assert np.all(up[50:] == 1.0)


def test_cosine_ramp_midpoint_is_half():
    fs = 1000
    s = AudioSignal(np.ones(1000), fs)
    n = 101
    y = apply_cosine_ramp(s, n / fs, "down").samples
    mid = len(y) - n + (n - 1) // 2
    assert y[mid] == pytest.approx(0.5, abs=0.02)


def test_cosine_ramp_errors():
    s = AudioSignal(np.ones(10), 100)
    with pytest.raises(ValueError):
        apply_cosine_ramp(s, 1.0)
    with pytest.raises(ValueError):
        apply_cosine_ramp(s, 0.05, "sideways")


def test_noise_gain_trivial_cases(rng):
    a = AudioSignal(rng.standard_normal(1000), 1000)
    b = set_level(AudioSignal(rng.standard_normal(1000), 1000), a.level_db)
    assert noise_gain_for_snr(a, b, 0.0) == pytest.approx(1.0)
    assert noise_gain_for_snr(a, b, 20.0) == pytest.approx(0.1)


@given(st.floats(-30, 40), st.integers(0, 2 ** 32 - 1))
@settings(max_examples=50, deadline=None)
def test_mix_at_snr_remeasured(snr, seed):
    r = np.random.default_rng(seed)
    t = AudioSignal(r.standard_normal(500), 1000)
    n = AudioSignal(3 * r.standard_normal(700), 1000)
    mix = mix_at_snr(t, n, snr)
    assert len(mix) == len(t)
    residual = mix.samples - t.samples
    assert 20 * np.log10(t.rms / rms(residual)) == pytest.approx(snr, abs=0.01)


def test_noise_gain_depends_only_on_rms_ratio(rng):
    t = AudioSignal(rng.standard_normal(500), 1000)
    n = AudioSignal(rng.standard_normal(500), 1000)
    g1 = noise_gain_for_snr(t, n, 5.0)
    g2 = noise_gain_for_snr(t.scaled(4.0), n.scaled(2.0), 5.0)
    assert g2 == pytest.approx(2 * g1)


def test_mix_errors(rng):
    t = AudioSignal(rng.standard_normal(100), 1000)
    with pytest.raises(ValueError):
        mix_at_snr(t, AudioSignal(np.zeros(100), 1000), 0)
    with pytest.raises(ValueError):
        mix_at_snr(t, AudioSignal(rng.standard_normal(100), 2000), 0)
    with pytest.raises(ValueError):
        mix_at_snr(t, AudioSignal(rng.standard_normal(50), 1000), 0)


def test_rove_identity_and_determinism():
    s = AudioSignal(np.ones(10), 100)
    assert np.array_equal(rove_level(s, RoveSpec(0.0), np.random.default_rng(0)).samples, s.samples)
    assert np.array_equal(rove_level(s, RoveSpec(4.0, enabled=False), np.random.default_rng(0)).samples, s.samples)
    a = rove_level(s, RoveSpec(4.0), np.random.default_rng(7))
    b = rove_level(s, RoveSpec(4.0), np.random.default_rng(7))
    assert np.array_equal(a.samples, b.samples)


def test_rove_distribution():
    r = np.random.default_rng(0)
    u = np.array([draw_rove_db(RoveSpec(4.0), r) for _ in range(100_000)])
    assert u.min() >= -4 and u.max() <= 4
    assert np.mean(np.abs(u)) == pytest.approx(2.0, abs=0.05)


def test_rove_spec_rejects_negative():
    with pytest.raises(ValueError):
        RoveSpec(-1.0)


def test_manifest_round_trip(tmp_path, rng):
    wav = tmp_path / "a.wav"
    write_wav(wav, AudioSignal(0.1 * rng.standard_normal(1000), 8000))
    entries = [StimulusEntry("a", wav, 0.1, 70.0)]
    write_manifest(tmp_path / "m.csv", entries)
    back = load_manifest(tmp_path / "m.csv")
    assert back[0].id == "a" and back[0].onset_s == 0.1 and back[0].presentation_level_db == 70.0
    sig = load_stimulus(back[0])
    assert sig.level_db == pytest.approx(70.0)
    assert sig.t0_onset == 0.1


def test_manifest_relative_paths_and_errors(tmp_path):
    (tmp_path / "m.csv").write_text("id,path,onset_s,presentation_level_dB\nx,sub/x.wav,0.1,\n")
    e = load_manifest(tmp_path / "m.csv")[0]
    assert e.path == tmp_path / "sub" / "x.wav"
    assert e.presentation_level_db is None
    with pytest.raises(FileNotFoundError):
        load_stimulus(e)
    (tmp_path / "d.csv").write_text("id,path\nx,a.wav\nx,b.wav\n")
    with pytest.raises(ValueError):
        load_manifest(tmp_path / "d.csv")
