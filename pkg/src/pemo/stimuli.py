"""Synthetic test stimuli: pure tones and piano-like damped harmonic complexes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signal_io import AudioSignal, apply_cosine_ramp, set_level

F0_CSHARP5 = 554.37


def pure_tone(freq, level_db, dur, fs, ramp=0.0025, pre=0.0, post=0.0) -> AudioSignal:
    """Sine at ``level_db`` (RMS) with raised-cosine on/off ramps and silent padding."""
    n = int(round(dur * fs))
    t = np.arange(n) / fs
    x = np.sqrt(2) * 10 ** ((level_db - 100) / 20) * np.sin(2 * np.pi * freq * t)
    sig = AudioSignal(x, fs)
    if ramp > 0:
        sig = apply_cosine_ramp(apply_cosine_ramp(sig, ramp, "up"), ramp, "down")
    pad0 = np.zeros(int(round(pre * fs)))
    pad1 = np.zeros(int(round(post * fs)))
    return AudioSignal(np.concatenate([pad0, sig.samples, pad1]), fs)


@dataclass(frozen=True)
class PianoLike:
    """Damped, slightly inharmonic harmonic complex.

    Parameters
    ----------
    slope_db_oct : float
        Spectral envelope slope of the partial amplitudes.
    decay_s : float
        Decay time constant of the fundamental.
    decay_tilt : float
        Higher partials decay faster: ``tau_h = decay_s / (1 + decay_tilt * (h - 1))``.
    inharmonicity : float
        Stiffness coefficient ``B`` in ``f_h = h f0 sqrt(1 + B h^2)``.
    formant_hz, formant_db : float
        Optional peak added to the spectral envelope (0 dB disables it).
    detune_hz : float
        Each partial is rendered as two strings this far apart, which
        produces slow beating; 0 gives a single string.
    hammer_db : float
        Level of a short decaying noise burst at the onset, relative to the
        tone (``-inf`` disables it).
    """

    slope_db_oct: float = -6.0
    decay_s: float = 0.6
    decay_tilt: float = 0.15
    inharmonicity: float = 2e-4
    formant_hz: float = 2000.0
    formant_db: float = 0.0
    detune_hz: float = 0.0
    hammer_db: float = -np.inf
    f0: float = F0_CSHARP5

    def render(self, fs=44100.0, dur=1.3, onset=0.1, level_db=70.0, fmax=10000.0,
               attack=0.002, release=0.15, phase_seed=0) -> AudioSignal:
        n = int(round(dur * fs))
        t = np.arange(n) / fs - onset
        on = t >= 0
        tt = t[on]
        rng = np.random.default_rng(phase_seed)
        x = np.zeros(n)
        h = 1
        while True:
            fh = h * self.f0 * np.sqrt(1 + self.inharmonicity * h * h)
            if fh >= min(fmax, 0.45 * fs):
                break
            amp_db = self.slope_db_oct * np.log2(h)
            if self.formant_db:
                amp_db += self.formant_db * np.exp(-0.5 * (np.log2(fh / self.formant_hz) / 0.3) ** 2)
            tau = self.decay_s / (1 + self.decay_tilt * (h - 1))
            ph = rng.uniform(0, 2 * np.pi)
            env = 10 ** (amp_db / 20) * np.exp(-tt / tau)
            if self.detune_hz:
                d = self.detune_hz * h / 2
                x[on] += 0.5 * env * (np.sin(2 * np.pi * (fh - d) * tt + ph) + np.sin(2 * np.pi * (fh + d) * tt + ph))
            else:
                x[on] += env * np.sin(2 * np.pi * fh * tt + ph)
            h += 1
        if np.isfinite(self.hammer_db):
            tone_rms = np.sqrt(np.mean(x[on][: int(0.05 * fs)] ** 2))
            burst = rng.standard_normal(tt.size) * np.exp(-tt / 0.008)
            x[on] += burst * tone_rms * 10 ** (self.hammer_db / 20) / np.sqrt(np.mean(burst[: int(0.02 * fs)] ** 2))
        na = int(round(attack * fs))
        if na:
            i0 = int(np.argmax(on))
            x[i0:i0 + na] *= 0.5 - 0.5 * np.cos(np.pi * np.arange(na) / na)
        sig = set_level(AudioSignal(x, fs), level_db)
        sig = apply_cosine_ramp(sig, release, "down")
        return AudioSignal(sig.samples, fs, t0_onset=onset)


SYNTHETIC_PIANOS = {
    "S1": PianoLike(slope_db_oct=-3.0, decay_s=0.8, decay_tilt=0.1),
    "S2": PianoLike(slope_db_oct=-9.0, decay_s=0.5, decay_tilt=0.3, hammer_db=-6.0),
    "S3": PianoLike(slope_db_oct=-12.0, decay_s=0.4, decay_tilt=0.4, detune_hz=1.6, hammer_db=0.0),
}


def synthetic_set(fs=22050.0, level_db=70.0, dur=1.3) -> dict:
    """The three synthetic pianos used in end-to-end tests, level-equalized."""
    return {k: p.render(fs=fs, dur=dur, level_db=level_db) for k, p in SYNTHETIC_PIANOS.items()}


def broadband_click_train(fs=44100.0, dur=0.6, onset=0.1, level_db=70.0, seed=0) -> AudioSignal:
    """Sharp-onset, exponentially decaying noise burst with energy up to ~10 kHz."""
    n = int(round(dur * fs))
    rng = np.random.default_rng(seed)
    t = np.arange(n) / fs - onset
    x = rng.standard_normal(n) * np.where(t >= 0, np.exp(-np.maximum(t, 0) / 0.25), 0.0)
    return set_level(AudioSignal(x, fs), level_db)
