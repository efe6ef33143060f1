"""Optimal-detector back end: templates, difference representations,
lag-searched cross-correlation, internal noise and the 3-AFC decision.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import fft as sfft

from .modulation_analysis import InternalRepresentation, build_representation
from .signal_io import AudioSignal, mix_at_snr

SNR_SUPRA = 21.0
N_TEMPLATE_REALIZATIONS = 4
CRITERIA = ("difference", "target", "reference")


@dataclass(frozen=True)
class LagSearch:
    """Lag grid in seconds; lags are rounded to whole samples."""

    lag_min: float = -0.050
    lag_max: float = 0.050
    step: float = 0.001

    def __post_init__(self):
        if not (self.lag_min <= 0 <= self.lag_max):
            raise ValueError("lag range must include zero")
        if self.step <= 0:
            raise ValueError("lag step must be positive")

    def lags_seconds(self) -> np.ndarray:
        n_lo = int(round(-self.lag_min / self.step))
        n_hi = int(round(self.lag_max / self.step))
        return np.arange(-n_lo, n_hi + 1) * self.step

    def lags_samples(self, fs: float) -> np.ndarray:
        return np.round(self.lags_seconds() * fs).astype(int)


NO_LAG = LagSearch(0.0, 0.0, 1.0)


@dataclass
class InternalNoise:
    """Additive Gaussian noise on each CCV value."""

    sigma: float = 10.1
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")

    def draw(self, size) -> np.ndarray:
        if self.sigma == 0:
            return np.zeros(size)
        return self.rng.normal(0.0, self.sigma, size)


@dataclass
class TemplatePair:
    T_pt: InternalRepresentation
    T_pr: InternalRepresentation
    t_obs: Optional[float]
    snr_supra: float = SNR_SUPRA
    n_realizations: int = N_TEMPLATE_REALIZATIONS

    _spectra: dict = field(default_factory=dict, repr=False, compare=False)

    def swapped(self) -> "TemplatePair":
        """Same templates with target and reference roles exchanged."""
        return TemplatePair(self.T_pr, self.T_pt, self.t_obs, self.snr_supra, self.n_realizations)

    def spectra(self, nfft: int):
        """Cached real FFTs of ``(T_pt, T_pr)`` at length ``nfft``."""
        if nfft not in self._spectra:
            self._spectra[nfft] = tuple(sfft.rfft(T.data, nfft, axis=1) for T in (self.T_pt, self.T_pr))
        return self._spectra[nfft]


# ------------------------------------------------------------ operations

def truncate_to_tobs(R: InternalRepresentation, t_obs: Optional[float]) -> InternalRepresentation:
    """Keep the first ``round(t_obs * fs)`` samples of every channel."""
    if t_obs is None:
        return R
    n = int(round(t_obs * R.fs))
    if n > R.n_samples:
        raise ValueError(f"t_obs {t_obs} s exceeds representation duration {R.duration:.4f} s")
    return R.with_data(R.data[:, :n], t_obs=t_obs)


def normalize_energy(R: InternalRepresentation) -> InternalRepresentation:
    e = R.energy()
    if e == 0:
        raise ValueError("cannot normalize a representation with zero energy")
    return R.with_data(R.data / np.sqrt(e))


def difference_representation(R_x: InternalRepresentation, R_Nx: InternalRepresentation) -> InternalRepresentation:
    if not R_x.same_layout(R_Nx) or R_x.data.shape != R_Nx.data.shape:
        raise ValueError("representations differ in layout or length")
    return R_x.with_data(R_x.data - R_Nx.data)


def _lag_nfft(na: int, nb: int, ls) -> int:
    # circular correlation is alias-free for |lag| <= max|ls| at this length
    return sfft.next_fast_len(max(na, nb) + int(np.max(np.abs(ls))), real=True)


def _xcorr_from_spectra(A, B, nfft, ls, na, nb, fs):
    xc = sfft.irfft(np.einsum("ij,ij->j", A.conj(), B), nfft)
    # xc[l] = sum_n a[n] b[n + l]; negative lags wrap to the end
    vals = np.zeros(ls.size)
    for i, l in enumerate(ls):
        if -na < l < nb:
            vals[i] = xc[l % nfft]
    return vals / fs


def cross_correlation(dR: InternalRepresentation, T: InternalRepresentation, lags: LagSearch = LagSearch()):
    """``(1/fs) sum dR[n] T[n + lag]`` over all channels for each lag.

    Samples outside either representation count as zero.

    Returns
    -------
    lag_s : ndarray
        Lags in seconds (after rounding to samples).
    values : ndarray
    """
    if not dR.same_layout(T):
        raise ValueError("representations differ in layout")
    fs = dR.fs
    ls = lags.lags_samples(fs)
    a, b = dR.data, T.data
    na, nb = a.shape[1], b.shape[1]
    if ls.size == 1 and ls[0] == 0:
        n = min(na, nb)
        return ls / fs, np.array([np.vdot(a[:, :n], b[:, :n]) / fs])
    nfft = _lag_nfft(na, nb, ls)
    A = sfft.rfft(a, nfft, axis=1)
    B = sfft.rfft(b, nfft, axis=1)
    return ls / fs, _xcorr_from_spectra(A, B, nfft, ls, na, nb, fs)


def ccv(dR: InternalRepresentation, T: InternalRepresentation, lags: LagSearch = LagSearch()) -> float:
    """Maximum of the cross-correlation over the lag grid."""
    return float(np.max(cross_correlation(dR, T, lags)[1]))


def derive_templates(target: AudioSignal, reference: AudioSignal, noise_bank: Sequence[AudioSignal], cfg,
                     t_obs: Optional[float] = None, snr_supra: float = SNR_SUPRA,
                     n_realizations: int = N_TEMPLATE_REALIZATIONS) -> TemplatePair:
    """Unit-energy templates from sounds embedded in noise at ``snr_supra``.

    Each template is the mean representation over the first
    ``n_realizations`` noises, cut to ``t_obs`` and scaled to unit energy.
    ``snr_supra = inf`` uses the clean sounds.
    """
    if len(noise_bank) < n_realizations:
        raise ValueError(f"need {n_realizations} noise realizations, got {len(noise_bank)}")
    return TemplatePair(
        template_for(target, noise_bank[:n_realizations], cfg, t_obs, snr_supra),
        template_for(reference, noise_bank[:n_realizations], cfg, t_obs, snr_supra),
        t_obs, snr_supra, n_realizations,
    )


def template_for(sound: AudioSignal, noises: Sequence[AudioSignal], cfg, t_obs=None,
                 snr_supra: float = SNR_SUPRA) -> InternalRepresentation:
    acc = None
    for noise in noises:
        x = sound if np.isinf(snr_supra) else mix_at_snr(sound, noise, snr_supra)
        R = build_representation(x, cfg, t_obs)
        acc = R.data.copy() if acc is None else acc + R.data
    R = R.with_data(acc / len(noises), t_obs=t_obs)
    return normalize_energy(truncate_to_tobs(R, t_obs))


def decide_from_ccvs(ccv_t, ccv_r, noise: InternalNoise, criterion: str = "difference") -> int:
    """Pick the interval most likely to hold the target.

    ``difference`` maximizes ``CCV_t - CCV_r``; ``target`` maximizes
    ``CCV_t``; ``reference`` minimizes ``CCV_r``.  Each of the six values
    receives its own internal-noise draw.  Ties go to the lowest index.
    """
    ccv_t = np.asarray(ccv_t, dtype=float)
    ccv_r = np.asarray(ccv_r, dtype=float)
    if ccv_t.shape != ccv_r.shape:
        raise ValueError("CCV arrays differ in shape")
    nt = ccv_t + noise.draw(ccv_t.shape)
    nr = ccv_r + noise.draw(ccv_r.shape)
    if criterion == "difference":
        return int(np.argmax(nt - nr))
    if criterion == "target":
        return int(np.argmax(nt))
    if criterion == "reference":
        return int(np.argmin(nr))
    raise ValueError(f"unknown criterion {criterion!r}; choose from {CRITERIA}")


def interval_ccvs(intervals, templates: TemplatePair, lags: LagSearch = LagSearch()):
    """CCVs of each ``(R_x, R_Nx)`` against both templates."""
    ct, cr = [], []
    for R_x, R_Nx in intervals:
        dR = truncate_to_tobs(difference_representation(R_x, R_Nx), templates.t_obs)
        for T in (templates.T_pt, templates.T_pr):
            if not dR.same_layout(T):
                raise ValueError("representations differ in layout")
        ls = lags.lags_samples(dR.fs)
        na = dR.n_samples
        nb_t, nb_r = templates.T_pt.n_samples, templates.T_pr.n_samples
        if ls.size == 1 and ls[0] == 0:
            ct.append(ccv(dR, templates.T_pt, lags))
            cr.append(ccv(dR, templates.T_pr, lags))
            continue
        nfft = _lag_nfft(na, max(nb_t, nb_r), ls)
        A = sfft.rfft(dR.data, nfft, axis=1)
        Bt, Br = templates.spectra(nfft)
        ct.append(float(np.max(_xcorr_from_spectra(A, Bt, nfft, ls, na, nb_t, dR.fs))))
        cr.append(float(np.max(_xcorr_from_spectra(A, Br, nfft, ls, na, nb_r, dR.fs))))
    return np.array(ct), np.array(cr)


def decide_3afc(intervals, templates: TemplatePair, noise: InternalNoise, lags: LagSearch = LagSearch(),
                criterion: str = "difference") -> int:
    if len(intervals) != 3:
        raise ValueError(f"3-AFC needs exactly 3 intervals, got {len(intervals)}")
    ct, cr = interval_ccvs(intervals, templates, lags)
    return decide_from_ccvs(ct, cr, noise, criterion)


# ------------------------------------------------------------------ cache

class TemplateCache:
    """On-disk template store keyed by pair, version, SNR, t_obs and seeds."""

    def __init__(self, root):
        self.root = Path(root)

    def _dir(self, key: dict) -> Path:
        blob = json.dumps(key, sort_keys=True, default=str)
        return self.root / hashlib.sha1(blob.encode()).hexdigest()[:16]

    def get(self, key: dict) -> Optional[TemplatePair]:
        d = self._dir(key)
        meta = d / "meta.json"
        if not meta.exists():
            return None
        m = json.loads(meta.read_text())
        return TemplatePair(
            InternalRepresentation.load(d / "T_pt.npz"), InternalRepresentation.load(d / "T_pr.npz"),
            m["t_obs"], m["snr_supra"], m["n_realizations"],
        )

    def put(self, key: dict, tp: TemplatePair):
        d = self._dir(key)
        d.mkdir(parents=True, exist_ok=True)
        tp.T_pt.save(d / "T_pt.npz")
        tp.T_pr.save(d / "T_pr.npz")
        meta = {"key": key, "t_obs": tp.t_obs, "snr_supra": tp.snr_supra, "n_realizations": tp.n_realizations}
        (d / "meta.json").write_text(json.dumps(meta, sort_keys=True, default=str))
