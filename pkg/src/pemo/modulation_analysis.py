"""Modulation filterbank, the 3-D internal representation and its
information-weighting analysis.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numba
import numpy as np
from scipy import signal as sps

from .signal_io import AudioSignal

MOD_LPF_CUTOFF = 150.0
MOD_Q = 2.0
LOWPASS_CUTOFF = 2.7
MAX_MOD_FREQ = 1000.0


@dataclass(frozen=True)
class ModFilterSpec:
    """One modulation filter.

    ``mfc`` is the nominal centre frequency used for pruning and labels.
    ``f_design`` and ``bw_design`` are the resonator's pole frequency and
    -3 dB bandwidth in Hz; for the low-pass band ``f_design`` is its cut-off.
    """

    index: int
    mfc: float
    f_inf: float
    f_sup: float
    q: Optional[float]
    kind: str
    output_mode: str
    f_design: float
    bw_design: float


def _resonator_spec(index, mfc, f_design, bw):
    real = mfc <= 10.0
    return ModFilterSpec(
        index=index,
        mfc=float(mfc),
        f_inf=float(f_design - bw / 2),
        f_sup=float(f_design + bw / 2),
        q=float(mfc / bw),
        kind="resonant",
        output_mode="real-part" if real else "envelope-norm",
        f_design=float(f_design),
        bw_design=float(bw),
    )


def modulation_filter_specs(q: float = MOD_Q, max_mfc: float = MAX_MOD_FREQ) -> list[ModFilterSpec]:
    """The modulation filter layout.

    Band 1 is a low-pass; bands 2-3 have a fixed bandwidth; above 10 Hz the
    centres are spaced so neighbouring filters meet at their -3 dB points.
    """
    specs = [
        ModFilterSpec(0, LOWPASS_CUTOFF, 0.0, LOWPASS_CUTOFF, None, "lowpass",
                      "real-part", LOWPASS_CUTOFF, LOWPASS_CUTOFF),
        # pole placed so the -3 dB edges sit at 2.6 and 7.8 Hz
        _resonator_spec(1, 5.0, 5.19, 5.19),
        _resonator_spec(2, 10.0, 10.0, 5.0),
    ]
    step = (1 + 1 / (2 * q)) / (1 - 1 / (2 * q))
    f = (10.0 + 5.0 / 2) / (1 - 1 / (2 * q))
    while f <= max_mfc:
        specs.append(_resonator_spec(len(specs), round(f, 1), f, f / q))
        f *= step
    return specs


MOD_SPECS = tuple(modulation_filter_specs())


def allowed_mod_bands(fc_audio: float, specs=MOD_SPECS) -> list[ModFilterSpec]:
    """Filters with ``mfc < fc_audio / 4``; the low-pass is always kept."""
    return [s for s in specs if s.kind == "lowpass" or s.mfc < fc_audio / 4]


def resonator_coefficients(spec: ModFilterSpec, fs: float):
    """Complex one-pole ``(b, a)`` with unit gain at the pole frequency."""
    w0 = 2 * np.pi * spec.f_design / fs
    e0 = np.exp(-np.pi * spec.bw_design / fs)
    return np.array([1 - e0]), np.array([1.0, -e0 * np.exp(1j * w0)])


def lowpass_coefficients(spec: ModFilterSpec, fs: float):
    return sps.butter(2, spec.f_design, fs=fs)


def mod_lpf_coefficients(fs: float):
    return sps.butter(1, MOD_LPF_CUTOFF, fs=fs)


def apply_mod_filter(x, spec: ModFilterSpec, fs: float):
    """Output of one modulation filter along the last axis (no 150-Hz LPF)."""
    if spec.kind == "lowpass":
        b, a = lowpass_coefficients(spec, fs)
        return sps.lfilter(b, a, x, axis=-1)
    b, a = resonator_coefficients(spec, fs)
    x = np.asarray(x, dtype=float)
    x2 = np.ascontiguousarray(x.reshape(-1, x.shape[-1]))
    y = _resonator_kernel(x2, 2 * b[0].real, -a[1], spec.output_mode == "real-part")
    return y.reshape(x.shape)


@numba.njit(cache=True)
def _resonator_kernel(x, g, pole, real_part):
    # y[n] = g x[n] + pole y[n-1] on real input, reduced on the fly
    nr, n = x.shape
    out = np.empty((nr, n))
    pr, pi = pole.real, pole.imag
    inv_sqrt2 = 1.0 / np.sqrt(2.0)
    for r in range(nr):
        yr = 0.0
        yi = 0.0
        for j in range(n):
            nr_ = g * x[r, j] + pr * yr - pi * yi
            yi = pr * yi + pi * yr
            yr = nr_
            if real_part:
                out[r, j] = yr
            else:
                out[r, j] = np.sqrt(yr * yr + yi * yi) * inv_sqrt2
    return out


def modulation_filterbank(band, fs: float, fc_audio: float, specs=MOD_SPECS, lpf: bool = True):
    """Split one adapted band into its modulation channels.

    Returns
    -------
    out : ndarray, shape (n_kept, n_samples)
    kept : list of ModFilterSpec
    """
    x = np.asarray(band, dtype=float)
    if lpf:
        b, a = mod_lpf_coefficients(fs)
        x = sps.lfilter(b, a, x)
    kept = allowed_mod_bands(fc_audio, specs)
    return np.stack([apply_mod_filter(x, s, fs) for s in kept]), kept


# ------------------------------------------------------------ representation

@dataclass
class InternalRepresentation:
    """Channel-major 3-D representation in model units.

    ``data[c]`` holds audio band ``band_index[c]`` and modulation band
    ``mod_index[c]``.  Absent (pruned) channels are not stored.
    """

    data: np.ndarray
    fs: float
    band_index: np.ndarray
    mod_index: np.ndarray
    audio_fc: np.ndarray
    audio_erb: np.ndarray
    mod_mfc: np.ndarray
    t_obs: Optional[float] = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        self.band_index = np.asarray(self.band_index, dtype=int)
        self.mod_index = np.asarray(self.mod_index, dtype=int)
        if self.data.ndim != 2 or self.data.shape[0] != self.band_index.shape[0]:
            raise ValueError("data must be (channels, samples) matching band_index")

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def duration(self) -> float:
        return self.n_samples / self.fs

    @property
    def n_audio_bands(self) -> int:
        return len(self.audio_fc)

    @property
    def n_mod_bands(self) -> int:
        return len(self.mod_mfc)

    def energy(self) -> float:
        return float(np.sum(self.data * self.data) / self.fs)

    def layout_key(self):
        return (self.fs, self.band_index.tobytes(), self.mod_index.tobytes())

    def same_layout(self, other: "InternalRepresentation") -> bool:
        return self.layout_key() == other.layout_key()

    def with_data(self, data, t_obs=None) -> "InternalRepresentation":
        return replace(self, data=data, t_obs=self.t_obs if t_obs is None else t_obs)

    def channel(self, m: int, k: int) -> np.ndarray:
        idx = np.flatnonzero((self.band_index == m) & (self.mod_index == k))
        if idx.size == 0:
            raise KeyError(f"no channel for audio band {m}, modulation band {k}")
        return self.data[idx[0]]

    def mod_count(self) -> np.ndarray:
        """Number of modulation channels kept per audio band."""
        return np.bincount(self.band_index, minlength=self.n_audio_bands)

    def save(self, path):
        """Write a self-describing ``.npz`` dump."""
        header = {
            "fs": self.fs,
            "t_obs": self.t_obs,
            "audio_fc": list(map(float, self.audio_fc)),
            "audio_erb": list(map(float, self.audio_erb)),
            "mod_mfc": list(map(float, self.mod_mfc)),
            "units": "MU",
            "layout": "channels x samples",
        }
        np.savez_compressed(
            Path(path), data=self.data, band_index=self.band_index,
            mod_index=self.mod_index, header=json.dumps(header),
        )

    @classmethod
    def load(cls, path) -> "InternalRepresentation":
        with np.load(Path(path)) as z:
            h = json.loads(str(z["header"]))
            return cls(
                data=z["data"], fs=h["fs"], band_index=z["band_index"],
                mod_index=z["mod_index"], audio_fc=np.array(h["audio_fc"]),
                audio_erb=np.array(h["audio_erb"]), mod_mfc=np.array(h["mod_mfc"]),
                t_obs=h["t_obs"],
            )


def representation_layout(fc_audio, specs=MOD_SPECS):
    """Channel index arrays for audio bands ``fc_audio``."""
    band_index, mod_index = [], []
    for m, fc in enumerate(fc_audio):
        for s in allowed_mod_bands(fc, specs):
            band_index.append(m)
            mod_index.append(s.index)
    return np.array(band_index, dtype=int), np.array(mod_index, dtype=int)


def modulation_stage(adapted, fs, fc_audio, audio_erb, specs=MOD_SPECS) -> InternalRepresentation:
    """Apply the modulation filterbank to all adapted bands at once."""
    adapted = np.asarray(adapted, dtype=float)
    b, a = mod_lpf_coefficients(fs)
    x = sps.lfilter(b, a, adapted, axis=-1)
    band_index, mod_index = representation_layout(fc_audio, specs)
    out = np.empty((band_index.size, x.shape[1]))
    for s in specs:
        rows = np.flatnonzero(mod_index == s.index)
        if rows.size:
            out[rows] = apply_mod_filter(x[band_index[rows]], s, fs)
    return InternalRepresentation(
        data=out, fs=fs, band_index=band_index, mod_index=mod_index,
        audio_fc=np.asarray(fc_audio, dtype=float), audio_erb=np.asarray(audio_erb, dtype=float),
        mod_mfc=np.array([s.mfc for s in specs]),
    )


def build_representation(signal: AudioSignal, cfg, t_obs: Optional[float] = None) -> InternalRepresentation:
    """Run all model stages on ``signal``.

    Parameters
    ----------
    signal : AudioSignal
    cfg : ModelConfig
    t_obs : float, optional
        Only the first ``t_obs`` seconds are processed.  Every stage is
        causal, so this equals truncating the full representation.
    """
    from .peripheral_model import adaptation_loops, gammatone_filterbank, ihc_transduction, outer_middle_ear

    per = cfg.peripheral
    if t_obs is not None:
        n = int(round(t_obs * signal.fs))
        if n > len(signal):
            raise ValueError(f"t_obs {t_obs} s exceeds signal duration {signal.duration:.3f} s")
        signal = signal.with_samples(signal.samples[:n])
    if per.outer_middle_ear:
        signal = outer_middle_ear(signal)
    bands = gammatone_filterbank(signal, per)
    fs = signal.fs
    x = ihc_transduction(bands.data, fs, per.ihc_lpf_cutoff, per.ihc_lpf_cascade)
    if cfg.decimate > 1:
        x = sps.decimate(x, cfg.decimate, ftype="fir", axis=-1, zero_phase=False)
        fs = fs / cfg.decimate
    # rectified, smoothed input; clip the low-pass ringing below zero
    x = np.maximum(x, 0.0)
    mu = adaptation_loops(x, fs, per)
    rep = modulation_stage(
        mu, fs, bands.fc, np.array([b.erb_number for b in bands.bands]), cfg.mod_specs,
    )
    rep.t_obs = t_obs
    return rep


# -------------------------------------------------------------- information

def info_by_audio_band(R: InternalRepresentation) -> np.ndarray:
    """Energy per audio band, summed over modulation bands and time."""
    e = np.einsum("ij,ij->i", R.data, R.data) / R.fs
    return np.bincount(R.band_index, weights=e, minlength=R.n_audio_bands)


def info_by_mod_band(R: InternalRepresentation) -> np.ndarray:
    """Energy per modulation band, summed over audio bands and time."""
    e = np.einsum("ij,ij->i", R.data, R.data) / R.fs
    return np.bincount(R.mod_index, weights=e, minlength=R.n_mod_bands)


def info_total(R: InternalRepresentation) -> float:
    return float(np.sum(R.data * R.data) / R.fs)


def info_percentages(R: InternalRepresentation):
    """``(I_m / I_tot, I_k / I_tot)`` in percent."""
    tot = info_total(R)
    if tot == 0:
        raise ValueError("representation carries no energy; percentages undefined")
    return 100 * info_by_audio_band(R) / tot, 100 * info_by_mod_band(R) / tot


def weighted_difference(delta: InternalRepresentation, template: InternalRepresentation) -> InternalRepresentation:
    """Element-wise product of a difference representation and a template."""
    if not delta.same_layout(template):
        raise ValueError("representations have different layouts")
    n = min(delta.n_samples, template.n_samples)
    return delta.with_data(delta.data[:, :n] * template.data[:, :n])


# ------------------------------------------------------------ measurements

def impulse_response_edges(h, fs, fmax=None, n_fft=2 ** 21):
    """Peak frequency and -3 dB edges of an impulse response.

    For a complex response only positive frequencies are examined.
    Returns ``(f_peak, f_inf, f_sup)``; ``f_inf`` is 0 for a low-pass.
    """
    h = np.asarray(h)
    H = np.abs(np.fft.fft(h, n_fft))
    f = np.fft.fftfreq(n_fft, 1 / fs)
    pos = f >= 0
    if fmax is not None:
        pos &= f <= fmax
    f, H = f[pos], H[pos]
    i = int(np.argmax(H))
    above = H >= H[i] / np.sqrt(2)
    lo = i
    while lo > 0 and above[lo - 1]:
        lo -= 1
    hi = i
    while hi < len(H) - 1 and above[hi + 1]:
        hi += 1
    f_inf = 0.0 if lo == 0 else _cross(f, H, lo - 1, lo, H[i] / np.sqrt(2))
    f_sup = _cross(f, H, hi, hi + 1, H[i] / np.sqrt(2))
    return float(f[i]), float(f_inf), float(f_sup)


def _cross(f, H, i, j, level):
    # linear interpolation of the level crossing between bins i and j
    if H[j] == H[i]:
        return f[i]
    return f[i] + (level - H[i]) * (f[j] - f[i]) / (H[j] - H[i])


def mod_filter_impulse_response(spec: ModFilterSpec, fs: float, n: int):
    """Impulse response of one filter before its output nonlinearity."""
    imp = np.zeros(n)
    imp[0] = 1.0
    if spec.kind == "lowpass":
        b, a = lowpass_coefficients(spec, fs)
        return sps.lfilter(b, a, imp)
    b, a = resonator_coefficients(spec, fs)
    return 2 * sps.lfilter(b, a, imp.astype(complex))
