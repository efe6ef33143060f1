"""Peripheral auditory stages: outer/middle ear, gammatone filterbank,
inner-hair-cell transduction and the adaptation loops.

All stages are causal, so processing a prefix of a signal yields the
prefix of the full output.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numba
import numpy as np
from scipy import signal as sps

from .signal_io import AudioSignal

TAU_DEFAULT = (0.005, 0.050, 0.129, 0.253, 0.500)


# ----------------------------------------------------------------- ERB scale

def freq_to_erb_number(f):
    """ERB-number (Cam) of frequency ``f`` in Hz."""
    return 9.2645 * np.log(1 + 0.00437 * np.asarray(f, dtype=float))


def erb_number_to_freq(e):
    return (np.exp(np.asarray(e, dtype=float) / 9.2645) - 1) / 0.00437


def erb_bandwidth(f):
    """Equivalent rectangular bandwidth in Hz at centre frequency ``f``."""
    return 24.7 + np.asarray(f, dtype=float) / 9.265


def erb_space(flow: float, fhigh: float, step: float = 1.0):
    """Centre frequencies spaced by ``step`` ERB and centred inside [flow, fhigh].

    The grid is placed symmetrically: the unused remainder of the ERB
    range is split evenly at both ends.

    Returns
    -------
    fc : ndarray
        Centre frequencies in Hz.
    erb_numbers : ndarray
        Corresponding ERB-numbers.
    """
    lo, hi = freq_to_erb_number([flow, fhigh])
    span = hi - lo
    n = int(np.floor(span / step))
    rem = span - n * step
    e = lo + np.arange(n + 1) * step + rem / 2
    return erb_number_to_freq(e), e


# ------------------------------------------------------------------- config

@dataclass(frozen=True)
class PeripheralConfig:
    """Parameters of the peripheral stages.

    Parameters
    ----------
    flow, fhigh : float
        Frequency range of the gammatone filterbank in Hz.
    erb_step : float
        Band spacing in ERB.
    gt_order : int
        Gammatone filter order.
    ihc_lpf_cutoff : float
        Cut-off of each first-order IHC low-pass in Hz.
    ihc_lpf_cascade : int
        Number of cascaded IHC low-pass sections.
    tau : tuple of float
        Adaptation-loop time constants in seconds.
    limiter_factor : float
        Overshoot limiter factor; ``inf`` disables limiting.
    lvl_min : float
        Floor applied to the adaptation-loop input.
    outer_middle_ear : bool
        Apply the outer/middle-ear FIR cascade.
    """

    flow: float = 80.0
    fhigh: float = 8000.0
    erb_step: float = 1.0
    gt_order: int = 4
    ihc_lpf_cutoff: float = 2000.0
    ihc_lpf_cascade: int = 5
    tau: tuple = TAU_DEFAULT
    limiter_factor: float = 5.0
    lvl_min: float = 1e-5
    outer_middle_ear: bool = True

    def __post_init__(self):
        tau = tuple(float(t) for t in self.tau)
        object.__setattr__(self, "tau", tau)
        if any(t <= 0 for t in tau) or any(b <= a for a, b in zip(tau, tau[1:])):
            raise ValueError(f"tau must be positive and strictly increasing, got {tau}")
        lim = float(self.limiter_factor)
        if not (lim > 1):
            raise ValueError(f"limiter_factor must be > 1 or inf, got {lim}")
        if self.lvl_min <= 0:
            raise ValueError("lvl_min must be positive")
        if self.flow <= 0 or self.fhigh <= self.flow:
            raise ValueError("need 0 < flow < fhigh")
        if self.gt_order < 1 or self.ihc_lpf_cascade < 1:
            raise ValueError("filter orders must be >= 1")

    @property
    def center_frequencies(self) -> np.ndarray:
        return erb_space(self.flow, self.fhigh, self.erb_step)[0]

    @property
    def erb_numbers(self) -> np.ndarray:
        return erb_space(self.flow, self.fhigh, self.erb_step)[1]

    @property
    def n_bands(self) -> int:
        return len(self.center_frequencies)


@dataclass(frozen=True)
class BandInfo:
    fc: float
    erb_number: float
    erb_hz: float


@dataclass
class BandSignals:
    """Per-band signals, shape (n_bands, n_samples)."""

    data: np.ndarray
    fs: float
    bands: list = field(default_factory=list)

    @property
    def fc(self) -> np.ndarray:
        return np.array([b.fc for b in self.bands])


# --------------------------------------------------------- outer/middle ear

# Combined outer+middle ear magnitude (dB) at anchor frequencies; between
# anchors the response is interpolated linearly on a log-frequency axis.
_COMBINED_ANCHORS = np.array([
    [20, -32.0], [50, -24.0], [100, -18.0], [200, -12.0], [400, -6.0],
    [800, 0.0], [1200, -3.0], [1500, -4.0], [2000, -4.0], [2400, -3.4],
    [2750, -3.0], [3100, -4.5], [3500, -8.0], [4000, -15.0], [4500, -14.0],
    [5000, -13.0], [5500, -15.0], [6000, -19.0], [7000, -26.0], [8000, -32.0],
    [10000, -40.0], [16000, -55.0], [22050, -60.0],
])
MIDDLE_EAR_PEAK_HZ = 800.0
MIDDLE_EAR_FLOOR_DB = -60.0
EAR_FIR_TAPS = 512


def middle_ear_gain_db(f):
    """Band-pass with a 0 dB maximum at 800 Hz and 6 dB/octave skirts."""
    f = np.maximum(np.asarray(f, dtype=float), 1e-3)
    g = -6.0 * np.abs(np.log2(f / MIDDLE_EAR_PEAK_HZ))
    return np.maximum(g, MIDDLE_EAR_FLOOR_DB)


def combined_ear_gain_db(f):
    f = np.maximum(np.asarray(f, dtype=float), 1e-3)
    lf = np.log(_COMBINED_ANCHORS[:, 0])
    return np.interp(np.log(f), lf, _COMBINED_ANCHORS[:, 1])


def outer_ear_gain_db(f):
    return combined_ear_gain_db(f) - middle_ear_gain_db(f)


def _design_fir(gain_db_fn, fs, numtaps):
    f = np.linspace(0, fs / 2, 2049)
    g = 10 ** (gain_db_fn(f) / 20)
    g[0] = g[1]
    # even-length linear phase has a zero at Nyquist
    g[-1] = 0.0
    return sps.firwin2(numtaps, f, g, fs=fs, window="hann")


@lru_cache(maxsize=8)
def ear_filters(fs: float, numtaps: int = EAR_FIR_TAPS):
    """Outer-ear and middle-ear FIR coefficients for sampling rate ``fs``."""
    return (
        _design_fir(outer_ear_gain_db, fs, numtaps),
        _design_fir(middle_ear_gain_db, fs, numtaps),
    )


def ear_impulse_response(fs: float) -> np.ndarray:
    h_outer, h_middle = ear_filters(fs)
    return np.convolve(h_outer, h_middle)


def outer_middle_ear(signal: AudioSignal) -> AudioSignal:
    """Filter ``signal`` through the outer- and middle-ear FIR cascade."""
    if signal.fs < 16000:
        raise ValueError(f"outer/middle-ear stage needs fs >= 16 kHz, got {signal.fs}")
    h = ear_impulse_response(signal.fs)
    y = sps.lfilter(h, 1.0, signal.samples)
    return signal.with_samples(y)


# --------------------------------------------------------------- gammatone

def gammatone_coefficients(fc, fs, order=4):
    """Complex pole and per-stage gain of the all-pole gammatone filters.

    The bandwidth parameter follows from the requirement that the filter's
    equivalent rectangular bandwidth equals ``erb_bandwidth(fc)``.
    """
    fc = np.atleast_1d(np.asarray(fc, dtype=float))
    a_gamma = (
        np.pi * math.factorial(2 * order - 2) * 2.0 ** -(2 * order - 2)
        / math.factorial(order - 1) ** 2
    )
    lam = np.exp(-2 * np.pi * erb_bandwidth(fc) / a_gamma / fs)
    pole = lam * np.exp(2j * np.pi * fc / fs)
    return pole, 1 - lam


@numba.njit(cache=True)
def _gammatone_kernel(x, poles, gains, order):
    nb = poles.shape[0]
    n = x.shape[0]
    out = np.empty((nb, n))
    for b in range(nb):
        p = poles[b]
        g = gains[b]
        st = np.zeros(order, dtype=np.complex128)
        for j in range(n):
            v = x[j] + 0j
            for s in range(order):
                v = g * v + p * st[s]
                st[s] = v
            out[b, j] = 2.0 * v.real
        # state is local; nothing carried across calls
    return out


def _check_gammatone_fs(fc_max, fs):
    need = 2 * (fc_max + 2 * erb_bandwidth(fc_max))
    if fs <= need:
        raise ValueError(
            f"sampling rate {fs} Hz too low for band at {fc_max:.0f} Hz (need > {need:.0f} Hz)"
        )


def gammatone_filterbank(signal: AudioSignal, cfg: PeripheralConfig) -> BandSignals:
    """Real-valued outputs of the complex all-pole gammatone filterbank."""
    fc, erbn = erb_space(cfg.flow, cfg.fhigh, cfg.erb_step)
    _check_gammatone_fs(fc.max(), signal.fs)
    return gammatone_bands(signal, fc, cfg.gt_order, erbn)


def gammatone_bands(signal: AudioSignal, fc, order=4, erb_numbers=None) -> BandSignals:
    """Gammatone analysis at arbitrary centre frequencies ``fc``."""
    fc = np.atleast_1d(np.asarray(fc, dtype=float))
    if erb_numbers is None:
        erb_numbers = freq_to_erb_number(fc)
    poles, gains = gammatone_coefficients(fc, signal.fs, order)
    data = _gammatone_kernel(np.ascontiguousarray(signal.samples), poles, gains, order)
    bands = [BandInfo(float(f), float(e), float(erb_bandwidth(f))) for f, e in zip(fc, erb_numbers)]
    return BandSignals(data, signal.fs, bands)


# --------------------------------------------------------------------- IHC

def ihc_filter(fs: float, cutoff: float = 2000.0):
    return sps.butter(1, cutoff, fs=fs)


def ihc_transduction(band, fs: float, cutoff: float = 2000.0, cascade: int = 5):
    """Half-wave rectification followed by a cascade of first-order low-passes.

    ``band`` may be 1-D or 2-D (bands along the first axis).
    """
    x = np.maximum(np.asarray(band, dtype=float), 0.0)
    b, a = ihc_filter(fs, cutoff)
    for _ in range(cascade):
        x = sps.lfilter(b, a, x, axis=-1)
    return x


# -------------------------------------------------------- adaptation loops

@dataclass(frozen=True)
class LoopState:
    """Initial charge and recursion coefficients of the adaptation loops."""

    s0: np.ndarray
    a1: np.ndarray
    b0: np.ndarray

    @classmethod
    def create(cls, fs: float, tau=TAU_DEFAULT, lvl_min: float = 1e-5) -> "LoopState":
        tau = np.asarray(tau, dtype=float)
        a1 = np.exp(-1.0 / (tau * fs))
        return cls(s0=initial_states(lvl_min, len(tau)), a1=a1, b0=1.0 - a1)


def initial_states(lvl_min: float = 1e-5, n_loops: int = 5) -> np.ndarray:
    """Steady-state charge of each loop for an input held at ``lvl_min``."""
    return lvl_min ** (1.0 / 2.0 ** np.arange(1, n_loops + 1))


def limiter_thresholds(limiter_factor: float, lvl_min: float = 1e-5, n_loops: int = 5) -> np.ndarray:
    """Maximum output of each loop, ``(1 - s0_i**2) * lim``."""
    s0 = initial_states(lvl_min, n_loops)
    return (1 - s0 ** 2) * limiter_factor


def overshoot_limiter(x, c):
    """Logistic compression above 1 with asymptote ``c + 1``.

    Identity for ``x <= 1``.  ``c`` is the limiter threshold minus one.
    """
    x = np.asarray(x, dtype=float)
    comp = 2 * c / (1 + np.exp(-2.0 / c * (x - 1))) - (c - 1)
    return np.where(x > 1, comp, x)


@numba.njit(cache=True)
def _adapt_kernel(x, a1, b0, s0, cmax, use_lim):
    nb, n = x.shape
    k = a1.shape[0]
    out = np.empty((nb, n))
    state = np.empty(k)
    for b in range(nb):
        for i in range(k):
            state[i] = s0[i]
        for j in range(n):
            t = x[b, j]
            for i in range(k):
                t = t / state[i]
                if use_lim and t > 1.0:
                    c = cmax[i]
                    t = 2.0 * c / (1.0 + np.exp(-2.0 / c * (t - 1.0))) - (c - 1.0)
                s = a1[i] * state[i] + b0[i] * t
                state[i] = s if s > s0[i] else s0[i]
            out[b, j] = t
    return out


def adaptation_loops(band, fs: float, cfg: PeripheralConfig = PeripheralConfig()) -> np.ndarray:
    """Adaptation-loop output in model units.

    Parameters
    ----------
    band : array_like
        Non-negative input, 1-D or (n_bands, n_samples).
    fs : float
        Sampling rate in Hz.
    cfg : PeripheralConfig
        Supplies ``tau``, ``limiter_factor`` and ``lvl_min``.

    Returns
    -------
    ndarray
        Same shape as ``band``. A steady input of 1.0 maps to 100 MU and an
        input at ``lvl_min`` to 0 MU.
    """
    x = np.asarray(band, dtype=float)
    if np.any(x < 0):
        raise ValueError("adaptation loops need a non-negative input")
    squeeze = x.ndim == 1
    x2 = np.ascontiguousarray(np.atleast_2d(np.maximum(x, cfg.lvl_min)))
    st = LoopState.create(fs, cfg.tau, cfg.lvl_min)
    lim = float(cfg.limiter_factor)
    use_lim = np.isfinite(lim)
    cmax = limiter_thresholds(lim if use_lim else 2.0, cfg.lvl_min, len(cfg.tau)) - 1
    o = _adapt_kernel(x2, st.a1, st.b0, st.s0, cmax, use_lim)
    s_last = st.s0[-1]
    psi = 100.0 * (o - s_last) / (1.0 - s_last)
    return psi[0] if squeeze else psi


def peripheral_stages(signal: AudioSignal, cfg: PeripheralConfig) -> BandSignals:
    """Outer/middle ear through adaptation loops; output in MU per band."""
    if cfg.outer_middle_ear:
        signal = outer_middle_ear(signal)
    bands = gammatone_filterbank(signal, cfg)
    ihc = ihc_transduction(bands.data, signal.fs, cfg.ihc_lpf_cutoff, cfg.ihc_lpf_cascade)
    mu = adaptation_loops(ihc, signal.fs, cfg)
    return BandSignals(mu, signal.fs, bands.bands)
