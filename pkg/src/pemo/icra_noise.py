"""Spectro-temporally matched ICRA-style maskers and spectral diagnostics.

A source is split by a gammatone filterbank, every band sample gets a
random sign, each band is filtered again by the same gammatone and the
bands are summed.  The sign flipping whitens each band while keeping its
temporal envelope; refiltering restores the band limits.  Because every
band's noise power then scales with the band's bandwidth, the result
carries a high-frequency tilt (version A).  Version B removes it with an
FIR equalizer fitted to the source spectrum.
"""
from __future__ import annotations

import enum
import hashlib
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import signal as sps

from .peripheral_model import (
    _gammatone_kernel,
    erb_bandwidth,
    erb_number_to_freq,
    erb_space,
    freq_to_erb_number,
    gammatone_coefficients,
)
from .signal_io import AudioSignal, db_to_amplitude, level_db, load_wav, set_level, write_wav

CACHE_ENV = "PEMO_CACHE_DIR"
ENVELOPE_FLOOR_DB = -20.0
EQ_TAPS = 4097
EQ_ITERATIONS = 3
EQ_GRID_STEP = 0.5
EQ_WINDOW = (0.0, 0.25)


class IcraVersion(str, enum.Enum):
    A = "A"
    B = "B"


@dataclass(frozen=True)
class NoiseRealization:
    signal: AudioSignal
    source_id: str
    version: IcraVersion
    seed: int


def _analysis_bank(fs):
    fc, _ = erb_space(50.0, min(0.45 * fs, 16000.0), 0.5)
    return fc


def _band_filter(x, fc, fs):
    poles, gains = gammatone_coefficients(fc, fs, 4)
    return _gammatone_kernel(np.ascontiguousarray(x), poles, gains, 4)


def _randomize(source: np.ndarray, fs: float, rng: np.random.Generator) -> np.ndarray:
    fc = _analysis_bank(fs)
    bands = _band_filter(source, fc, fs)
    signs = rng.integers(0, 2, size=bands.shape) * 2.0 - 1.0
    bands *= signs
    poles, gains = gammatone_coefficients(fc, fs, 4)
    out = np.zeros(source.shape[0])
    for i in range(len(fc)):
        out += _gammatone_kernel(bands[i], poles[i:i + 1], gains[i:i + 1], 4)[0]
    return out


def _fine_grid(fs):
    lo = freq_to_erb_number(50.0)
    hi = freq_to_erb_number(min(0.45 * fs, 16000.0))
    # aligned to the ERB-number scale so integer ERB bands are fitted directly
    start = np.ceil(lo / EQ_GRID_STEP) * EQ_GRID_STEP
    return erb_number_to_freq(np.arange(start, hi, EQ_GRID_STEP))


def _equalize(noise, source, fs, window=None):
    """Iteratively fit a zero-delay linear-phase FIR so the noise spectrum matches the source."""
    grid = _fine_grid(fs)
    src_bl = band_levels_array(source, fs, grid, window)
    y = noise
    total = np.zeros(len(grid))
    for _ in range(EQ_ITERATIONS):
        diff = src_bl - band_levels_array(y, fs, grid, window)
        # bands without source energy get no correction
        diff[~np.isfinite(diff)] = 0.0
        diff = np.clip(diff, -40, 40)
        total = total + diff
        f = np.r_[0.0, grid, fs / 2]
        g = 10 ** (np.r_[total[0], total, total[-1]] / 20)
        h = sps.firwin2(EQ_TAPS, f, g, fs=fs)
        y = sps.fftconvolve(noise, h, mode="same")
    return y


def generate_icra_noise(source: AudioSignal, version="A", seed: int = 0, source_id: str = "",
                        eq_window=EQ_WINDOW) -> NoiseRealization:
    """Noise following the spectro-temporal envelope of ``source``.

    Parameters
    ----------
    source : AudioSignal
    version : {"A", "B"}
        ``B`` additionally equalizes the long-term spectrum to the source.
    seed : int
    source_id : str
    eq_window : (float, float) or None
        Time window in seconds used to fit the version-B equalizer; None
        uses the whole signal.
    """
    version = IcraVersion(version)
    if source.rms == 0:
        raise ValueError("cannot derive a noise from a silent source")
    rng = np.random.default_rng(seed)
    y = _randomize(source.samples, source.fs, rng)
    if version is IcraVersion.B:
        if eq_window is not None:
            eq_window = (eq_window[0], min(eq_window[1], source.duration))
        y = _equalize(y, source.samples, source.fs, eq_window)
    noise = set_level(source.with_samples(y), source.level_db)
    return NoiseRealization(noise, source_id, version, int(seed))


def paired_noise(n1: NoiseRealization, n2: NoiseRealization) -> AudioSignal:
    """Sum of two realizations, each attenuated by 3 dB."""
    if n1.version != n2.version:
        raise ValueError("paired noises must share the ICRA version")
    a, b = n1.signal, n2.signal
    if a.fs != b.fs:
        raise ValueError(f"sampling rate mismatch: {a.fs} vs {b.fs}")
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    g = 10 ** (-3 / 20)
    return a.with_samples(g * (a.samples + b.samples))


# ------------------------------------------------------------ diagnostics

def band_levels_array(x, fs, fc, window=None) -> np.ndarray:
    """Level in dB SPL inside 1-ERB-wide rectangular bands centred on ``fc``."""
    x = np.asarray(x, dtype=float)
    if window is not None:
        i0, i1 = (int(round(t * fs)) for t in window)
        x = x[i0:i1]
    n = len(x)
    X = np.fft.rfft(x)
    # one-sided power so that the sum over all bins equals mean(x**2)
    p = np.abs(X) ** 2 / n ** 2
    p[1:] *= 2
    if n % 2 == 0:
        p[-1] /= 2
    f = np.fft.rfftfreq(n, 1 / fs)
    cum = np.r_[0.0, np.cumsum(p)]
    fc = np.asarray(fc, dtype=float)
    bw = erb_bandwidth(fc)
    lo = np.searchsorted(f, fc - bw / 2)
    hi = np.searchsorted(f, fc + bw / 2)
    power = cum[hi] - cum[lo]
    with np.errstate(divide="ignore"):
        return 10 * np.log10(power) + 100.0


def band_levels(signal: AudioSignal, erb_grid=None, window=None) -> np.ndarray:
    """Per-band levels on an ERB-number grid (default 3..33)."""
    if erb_grid is None:
        erb_grid = np.arange(3, 34)
    fc = erb_number_to_freq(np.asarray(erb_grid, dtype=float))
    return band_levels_array(signal.samples, signal.fs, fc, window)


def lp_envelope(signal: AudioSignal, cutoff: float = 20.0) -> np.ndarray:
    """Hilbert envelope, low-passed at ``cutoff`` Hz, in dB SPL (floored)."""
    env = np.abs(sps.hilbert(signal.samples))
    b, a = sps.butter(2, cutoff, fs=signal.fs)
    env = sps.filtfilt(b, a, env) if len(env) > 3 * max(len(a), len(b)) else env
    # the Hilbert magnitude of a sine is its peak; report RMS-equivalent levels
    env = np.maximum(env / np.sqrt(2), db_to_amplitude(ENVELOPE_FLOOR_DB))
    return 20 * np.log10(env) + 100.0


# ------------------------------------------------------------------ cache

def default_cache_dir() -> Path:
    return Path(os.environ.get(CACHE_ENV, Path.home() / ".cache" / "pemo"))


class NoiseCache:
    """On-disk store of realizations keyed by (source id, version, seed)."""

    def __init__(self, root=None):
        self.root = Path(root) if root is not None else default_cache_dir() / "noise"

    def _path(self, source: AudioSignal, source_id, version, seed):
        # the source content is part of the key so edited stimuli do not collide
        digest = hashlib.sha1(source.samples.tobytes()).hexdigest()[:12]
        return self.root / f"{source_id or 'anon'}-{digest}" / f"{IcraVersion(version).value}-{seed}.wav"

    def get(self, source: AudioSignal, version="A", seed: int = 0, source_id: str = "") -> NoiseRealization:
        path = self._path(source, source_id, version, seed)
        if path.exists():
            sig = load_wav(path)
            if len(sig) == len(source):
                return NoiseRealization(sig, source_id, IcraVersion(version), int(seed))
        real = generate_icra_noise(source, version, seed, source_id)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(f".{os.getpid()}.tmp")
        write_wav(tmp, real.signal)
        tmp.replace(path)
        # reload so cached and fresh results are identical (float32 on disk)
        return NoiseRealization(load_wav(path), source_id, IcraVersion(version), int(seed))


def noise_level_db(n: NoiseRealization) -> float:
    return level_db(n.signal.samples)
