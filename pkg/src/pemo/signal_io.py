"""Calibrated audio containers and stimulus plumbing.

Amplitudes follow a 100 dB full-scale convention: an RMS of 1.0 is
100 dB SPL and an RMS of 1e-5 is 0 dB SPL.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.io import wavfile

FULL_SCALE_DB = 100.0


@dataclass(frozen=True)
class AudioSignal:
    """Mono waveform with its sampling rate.

    Parameters
    ----------
    samples : ndarray
        Full-scale amplitudes, stored as float64.
    fs : float
        Sampling rate in Hz.
    t0_onset : float, optional
        Note onset in seconds, as recorded in the stimulus manifest.
    """

    samples: np.ndarray
    fs: float
    t0_onset: Optional[float] = None

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim != 1:
            raise ValueError(f"expected mono samples, got shape {x.shape}")
        if not self.fs > 0:
            raise ValueError(f"sampling rate must be positive, got {self.fs}")
        if not np.all(np.isfinite(x)):
            raise ValueError("samples contain NaN or Inf")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "fs", float(self.fs))

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.fs

    @property
    def rms(self) -> float:
        return rms(self.samples)

    @property
    def level_db(self) -> float:
        """Broadband level in dB SPL."""
        return level_db(self.samples)

    def with_samples(self, samples) -> "AudioSignal":
        return replace(self, samples=np.asarray(samples, dtype=np.float64))

    def __add__(self, other: "AudioSignal") -> "AudioSignal":
        _check_compatible(self, other)
        return self.with_samples(self.samples + other.samples)

    def scaled(self, gain: float) -> "AudioSignal":
        return self.with_samples(gain * self.samples)

    def truncated(self, duration: float) -> "AudioSignal":
        n = int(round(duration * self.fs))
        return self.with_samples(self.samples[:n])


@dataclass(frozen=True)
class RoveSpec:
    """Uniform level rove of +/- ``range_db``."""

    range_db: float = 4.0
    enabled: bool = True

    def __post_init__(self):
        if self.range_db < 0:
            raise ValueError("rove range must be non-negative")


@dataclass(frozen=True)
class StimulusEntry:
    id: str
    path: Path
    onset_s: Optional[float] = None
    presentation_level_db: Optional[float] = None
    extra: dict = field(default_factory=dict, compare=False)


def rms(x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        return 0.0
    return float(np.sqrt(np.mean(x * x)))


def level_db(x) -> float:
    r = rms(x)
    if r == 0:
        return -np.inf
    return 20 * np.log10(r) + FULL_SCALE_DB


def db_to_amplitude(level: float) -> float:
    """RMS amplitude that corresponds to ``level`` dB SPL."""
    return 10 ** ((level - FULL_SCALE_DB) / 20)


def _check_compatible(a: AudioSignal, b: AudioSignal):
    if a.fs != b.fs:
        raise ValueError(f"sampling rate mismatch: {a.fs} vs {b.fs}")
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")


def load_wav(path) -> AudioSignal:
    """Read a PCM or float WAV file; stereo is averaged to mono."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"WAV file {path} does not exist")
    try:
        fs, data = wavfile.read(path)
    except (OSError, ValueError) as exc:
        raise ValueError(f"cannot read WAV file {path}: {exc}") from exc
    if data.dtype == np.int16:
        x = data / 32768.0
    elif data.dtype == np.int32:
        # scipy returns 24-bit PCM left-justified in int32
        x = data / 2147483648.0
    elif data.dtype == np.float32 or data.dtype == np.float64:
        x = data.astype(np.float64)
    else:
        raise ValueError(f"unsupported WAV sample format {data.dtype} in {path}")
    if x.ndim == 2:
        x = x.mean(axis=1)
    if x.shape[0] == 0:
        raise ValueError(f"WAV file {path} contains no samples")
    return AudioSignal(x, float(fs))


def write_wav(path, signal: AudioSignal):
    """Write ``signal`` as 32-bit float WAV."""
    fs = int(round(signal.fs))
    if fs != signal.fs:
        raise ValueError("WAV files need an integer sampling rate")
    wavfile.write(Path(path), fs, signal.samples.astype(np.float32))


def set_level(signal: AudioSignal, target_db: float) -> AudioSignal:
    r = signal.rms
    if r == 0:
        raise ValueError("cannot set the level of a silent signal")
    return signal.scaled(db_to_amplitude(target_db) / r)


def apply_cosine_ramp(signal: AudioSignal, dur: float, direction: str = "down") -> AudioSignal:
    """Raised-cosine ramp of ``dur`` seconds at the start (``up``) or end (``down``)."""
    if direction not in ("up", "down"):
        raise ValueError(f"direction must be 'up' or 'down', got {direction!r}")
    if dur < 0 or dur > signal.duration:
        raise ValueError(f"ramp of {dur} s does not fit a {signal.duration} s signal")
    n = int(round(dur * signal.fs))
    if n == 0:
        return signal
    ramp = 0.5 - 0.5 * np.cos(np.pi * np.arange(n) / n)
    x = signal.samples.copy()
    if direction == "up":
        x[:n] *= ramp
    else:
        # last sample lands exactly on zero
        x[-n:] *= 0.5 + 0.5 * np.cos(np.pi * np.arange(1, n + 1) / n)
    return signal.with_samples(x)


def noise_gain_for_snr(target: AudioSignal, noise: AudioSignal, snr_db: float) -> float:
    """Gain that puts ``noise`` ``snr_db`` below ``target`` over the target duration."""
    if target.fs != noise.fs:
        raise ValueError(f"sampling rate mismatch: {target.fs} vs {noise.fs}")
    if len(noise) < len(target):
        raise ValueError("noise is shorter than the target")
    n_rms = rms(noise.samples[: len(target)])
    if n_rms == 0:
        raise ValueError("noise is silent")
    return target.rms / n_rms * 10 ** (-snr_db / 20)


def mix_at_snr(target: AudioSignal, noise: AudioSignal, snr_db: float) -> AudioSignal:
    g = noise_gain_for_snr(target, noise, snr_db)
    return target.with_samples(target.samples + g * noise.samples[: len(target)])


def draw_rove_db(spec: RoveSpec, rng: np.random.Generator) -> float:
    if not spec.enabled or spec.range_db == 0:
        return 0.0
    return float(rng.uniform(-spec.range_db, spec.range_db))


def rove_level(signal: AudioSignal, spec: RoveSpec, rng: np.random.Generator) -> AudioSignal:
    u = draw_rove_db(spec, rng)
    if u == 0.0:
        return signal
    return signal.scaled(10 ** (u / 20))


MANIFEST_FIELDS = ("id", "path", "onset_s", "presentation_level_dB")


def load_manifest(path) -> list[StimulusEntry]:
    """Read a CSV manifest with columns ``id,path,onset_s,presentation_level_dB``.

    Relative paths are resolved against the manifest's directory.
    """
    path = Path(path)
    entries = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"id", "path"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"manifest {path} lacks columns {sorted(missing)}")
        for row in reader:
            p = Path(row["path"])
            if not p.is_absolute():
                p = path.parent / p
            onset = row.get("onset_s") or None
            lvl = row.get("presentation_level_dB") or None
            extra = {k: v for k, v in row.items() if k not in MANIFEST_FIELDS}
            entries.append(
                StimulusEntry(
                    id=row["id"].strip(),
                    path=p,
                    onset_s=float(onset) if onset is not None else None,
                    presentation_level_db=float(lvl) if lvl is not None else None,
                    extra=extra,
                )
            )
    ids = [e.id for e in entries]
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate stimulus ids in {path}")
    return entries


def write_manifest(path, entries):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MANIFEST_FIELDS)
        for e in entries:
            w.writerow([
                e.id,
                str(e.path),
                "" if e.onset_s is None else repr(e.onset_s),
                "" if e.presentation_level_db is None else repr(e.presentation_level_db),
            ])


def load_stimulus(entry: StimulusEntry) -> AudioSignal:
    """Load a manifest entry, calibrate it and record its onset."""
    if not entry.path.exists():
        raise FileNotFoundError(f"stimulus {entry.id!r}: {entry.path} does not exist")
    sig = load_wav(entry.path)
    if entry.presentation_level_db is not None:
        sig = set_level(sig, entry.presentation_level_db)
    return replace(sig, t0_onset=entry.onset_s)
