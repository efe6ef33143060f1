"""Adaptive 3-AFC staircase, model observer and condition batching."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .central_processor import (
    InternalNoise,
    LagSearch,
    TemplatePair,
    ccv,
    decide_from_ccvs,
    difference_representation,
    interval_ccvs,
    normalize_energy,
    truncate_to_tobs,
)
from .modulation_analysis import build_representation
from .signal_io import AudioSignal, RoveSpec, draw_rove_db, noise_gain_for_snr
from .stats import median_iqr

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class StaircaseConfig:
    """Transformed up-down track parameters.

    ``steps[i]`` applies once ``step_after[i-1]`` reversals have occurred.
    """

    start_snr: float = 16.0
    n_down: int = 2
    n_up: int = 1
    n_reversals: int = 8
    steps: tuple = (4.0, 2.0, 1.0)
    step_after: tuple = (2, 4)
    n_threshold_reversals: int = 4
    n_runs: int = 6
    rove: RoveSpec = RoveSpec(4.0)
    internal_noise_on: bool = True
    t_obs: Optional[float] = 0.25
    max_trials: int = 300
    n_noise_bank: int = 12

    def __post_init__(self):
        if any(s <= 0 for s in self.steps):
            raise ValueError("step sizes must be positive")
        if any(b > a for a, b in zip(self.steps, self.steps[1:])):
            raise ValueError("step sizes must not increase")
        if len(self.step_after) != len(self.steps) - 1:
            raise ValueError("step_after needs one entry per step change")
        if self.n_threshold_reversals > self.n_reversals:
            raise ValueError("cannot average more reversals than the track collects")
        if self.n_down < 1 or self.n_up < 1:
            raise ValueError("n_down and n_up must be >= 1")

    def step_for(self, n_rev: int) -> float:
        i = sum(n_rev >= k for k in self.step_after)
        return float(self.steps[i])


@dataclass
class TrialRecord:
    snr: float
    correct: bool
    target_pos: Optional[int] = None
    choice: Optional[int] = None
    extra: dict = field(default_factory=dict)


@dataclass
class ThresholdEstimate:
    pair_id: str
    threshold_snr: float
    reversal_snrs: list
    trial_log: list
    seed: Optional[object] = None
    target_id: str = ""


class StaircaseError(RuntimeError):
    """Raised when a track exceeds its trial cap; carries the partial log."""

    def __init__(self, msg, trial_log, reversal_snrs):
        super().__init__(msg)
        self.trial_log = trial_log
        self.reversal_snrs = reversal_snrs


class Staircase:
    """State machine for an n-down/m-up track on SNR.

    A correct streak of ``n_down`` lowers the SNR; ``n_up`` consecutive
    errors raise it.  A reversal is a change of direction and is logged
    at the SNR of the trial that caused it.  The step for a move is chosen
    after the reversal (if any) has been counted.
    """

    def __init__(self, cfg: StaircaseConfig):
        self.cfg = cfg
        self.snr = float(cfg.start_snr)
        self.reversals: list[float] = []
        self.log: list[TrialRecord] = []
        self._direction = 0
        self._n_correct = 0
        self._n_wrong = 0

    @property
    def done(self) -> bool:
        return len(self.reversals) >= self.cfg.n_reversals

    def update(self, correct: bool, record: Optional[TrialRecord] = None) -> None:
        if self.done:
            raise RuntimeError("staircase already finished")
        rec = record if record is not None else TrialRecord(self.snr, bool(correct))
        rec.snr = self.snr
        rec.correct = bool(correct)
        self.log.append(rec)
        move = 0
        if correct:
            self._n_wrong = 0
            self._n_correct += 1
            if self._n_correct >= self.cfg.n_down:
                move, self._n_correct = -1, 0
        else:
            self._n_correct = 0
            self._n_wrong += 1
            if self._n_wrong >= self.cfg.n_up:
                move, self._n_wrong = 1, 0
        if move == 0:
            return
        if self._direction != 0 and move != self._direction:
            self.reversals.append(self.snr)
        self._direction = move
        if not self.done:
            self.snr += move * self.cfg.step_for(len(self.reversals))

    def threshold(self) -> float:
        if not self.done:
            raise RuntimeError("staircase not finished")
        return float(np.median(self.reversals[-self.cfg.n_threshold_reversals:]))


def run_staircase(respond: Callable[[float, np.random.Generator], TrialRecord | bool], cfg: StaircaseConfig,
                  rng: np.random.Generator, pair_id: str = "", seed=None) -> ThresholdEstimate:
    """Run one adaptive track.

    ``respond(snr, rng)`` returns a bool or a :class:`TrialRecord`.
    """
    sc = Staircase(cfg)
    while not sc.done:
        if len(sc.log) >= cfg.max_trials:
            raise StaircaseError(
                f"track {pair_id!r} did not finish within {cfg.max_trials} trials",
                sc.log, sc.reversals,
            )
        out = respond(sc.snr, rng)
        if isinstance(out, TrialRecord):
            sc.update(out.correct, out)
        else:
            sc.update(bool(out))
    return ThresholdEstimate(pair_id, sc.threshold(), list(sc.reversals), sc.log, seed)


# -------------------------------------------------------------- observer

@dataclass
class PairObserver:
    """Model listener for one target/reference orientation.

    Parameters
    ----------
    target, reference : AudioSignal
    templates : TemplatePair
        ``T_pt`` belongs to ``target``.
    noise_bank : sequence of AudioSignal
        Paired noises; each trial draws three distinct ones.
    model_cfg : ModelConfig
    rove : RoveSpec
    internal_noise : bool
    lags : LagSearch
    criterion : str
    """

    target: AudioSignal
    reference: AudioSignal
    templates: TemplatePair
    noise_bank: Sequence[AudioSignal]
    model_cfg: object
    rove: RoveSpec = RoveSpec(4.0)
    internal_noise: bool = True
    lags: LagSearch = LagSearch()
    criterion: str = "difference"

    def interval_representations(self, sound: AudioSignal, noise: AudioSignal, snr: float, rove_db: float):
        g = noise_gain_for_snr(sound, noise, snr)
        r = 10 ** (rove_db / 20)
        n = noise.samples[: len(sound)] * g
        t_obs = self.templates.t_obs
        R_x = build_representation(sound.with_samples(r * (sound.samples + n)), self.model_cfg, t_obs)
        R_n = build_representation(sound.with_samples(r * n), self.model_cfg, t_obs)
        return R_x, R_n

    def __call__(self, snr: float, rng: np.random.Generator) -> TrialRecord:
        if len(self.noise_bank) < 3:
            raise ValueError("noise bank needs at least 3 realizations")
        pos = int(rng.integers(3))
        picks = rng.choice(len(self.noise_bank), 3, replace=False)
        roves = [draw_rove_db(self.rove, rng) for _ in range(3)]
        intervals = []
        for x in range(3):
            sound = self.target if x == pos else self.reference
            intervals.append(self.interval_representations(sound, self.noise_bank[picks[x]], snr, roves[x]))
        ct, cr = interval_ccvs(intervals, self.templates, self.lags)
        sigma = self.model_cfg.sigma if self.internal_noise else 0.0
        choice = decide_from_ccvs(ct, cr, InternalNoise(sigma, rng), self.criterion)
        return TrialRecord(snr, choice == pos, pos, choice,
                           {"ccv_t": ct.tolist(), "ccv_r": cr.tolist(), "noise": picks.tolist(), "rove": roves})


def run_trial(target, reference, snr, noise_bank, templates, cfg, rng, model_cfg=None,
              lags: LagSearch = LagSearch(), criterion="difference") -> bool:
    """One 3-AFC trial; ``cfg`` is a :class:`StaircaseConfig`."""
    if not noise_bank:
        raise ValueError("empty noise bank")
    obs = PairObserver(target, reference, templates, noise_bank, model_cfg, cfg.rove,
                       cfg.internal_noise_on, lags, criterion)
    return obs(snr, rng).correct


@dataclass
class ConditionResult:
    pair_id: str
    median: float
    q25: float
    q75: float
    estimates: list

    @property
    def thresholds(self) -> list:
        return [e.threshold_snr for e in self.estimates]

    @property
    def n_runs(self) -> int:
        return len(self.estimates)


def summarize_runs(pair_id: str, estimates, method: str = "linear") -> ConditionResult:
    s = median_iqr([e.threshold_snr for e in estimates], method)
    return ConditionResult(pair_id, s.median, s.q25, s.q75, list(estimates))


def run_condition(pair_id: str, make_observer: Callable[[int], Callable], cfg: StaircaseConfig,
                  run_rngs: Sequence[np.random.Generator], method: str = "linear") -> ConditionResult:
    """``cfg.n_runs`` independent tracks and their median/IQR.

    ``make_observer(run)`` returns the responder for run ``run``; callers
    use it to alternate which sound is the target and to refresh the
    noise bank.
    """
    if len(run_rngs) < cfg.n_runs:
        raise ValueError("need one random stream per run")
    ests = []
    for k in range(cfg.n_runs):
        est = run_staircase(make_observer(k), cfg, run_rngs[k], pair_id, seed=k)
        log.info("pair %s run %d: %.2f dB after %d trials", pair_id, k, est.threshold_snr, len(est.trial_log))
        ests.append(est)
    return summarize_runs(pair_id, ests, method)


ABLATIONS = ("ext+int", "no-rove", "no-int")


def ablation_config(cfg: StaircaseConfig, mode: str) -> StaircaseConfig:
    if mode == "ext+int":
        return cfg
    if mode == "no-rove":
        return replace(cfg, rove=replace(cfg.rove, enabled=False))
    if mode == "no-int":
        return replace(cfg, internal_noise_on=False)
    if mode == "none":
        return replace(cfg, rove=replace(cfg.rove, enabled=False), internal_noise_on=False)
    raise ValueError(f"unknown ablation {mode!r}; choose from {ABLATIONS + ('none',)}")


def ablate_variability(pair_id, make_observer_for_cfg, mode: str, cfg: StaircaseConfig, run_rngs,
                       method: str = "linear") -> ConditionResult:
    """Run a condition with roving and/or internal noise switched off.

    ``make_observer_for_cfg(cfg, run)`` builds a responder honouring the
    ablated config.
    """
    acfg = ablation_config(cfg, mode)
    return run_condition(pair_id, lambda k: make_observer_for_cfg(acfg, k), acfg, run_rngs, method)


# ------------------------------------------------------ noise calibration

@dataclass
class CalibrationResult:
    sigma: float
    sigma_grid: np.ndarray
    pc: np.ndarray
    pc_per_stimulus: np.ndarray
    ccv_gap: np.ndarray


def increment_ccvs(stimulus: AudioSignal, model_cfg, delta_l: float = 1.0, t_obs=None,
                   lags: LagSearch = LagSearch()):
    """CCVs of the incremented and the standard interval against the
    template of the incremented sound (single-template detector).
    """
    inc = stimulus.scaled(10 ** (delta_l / 20))
    R_inc = build_representation(inc, model_cfg, t_obs)
    R_std = build_representation(stimulus, model_cfg, t_obs)
    silence = build_representation(stimulus.scaled(0.0), model_cfg, t_obs)
    T = normalize_energy(truncate_to_tobs(R_inc, t_obs))
    c_inc = ccv(difference_representation(R_inc, silence), T, lags)
    c_std = ccv(difference_representation(R_std, silence), T, lags)
    return c_inc, c_std


def percent_correct_3afc(c_target: float, c_ref: float, sigma: float, n_trials: int,
                         rng: np.random.Generator) -> float:
    """Monte-Carlo 3-AFC proportion correct for fixed CCVs plus internal noise."""
    if sigma == 0:
        return 1.0 if c_target > c_ref else (1 / 3 if c_target == c_ref else 0.0)
    z = rng.normal(0.0, sigma, (n_trials, 3))
    v = z + np.array([c_target, c_ref, c_ref])
    return float(np.mean(np.argmax(v, axis=1) == 0))


def calibrate_internal_noise(stimuli: Sequence[AudioSignal], model_cfg, delta_l: float = 1.0,
                             target_pc: float = 0.707, sigma_grid=None, n_trials: int = 10_000,
                             t_obs=None, rng: Optional[np.random.Generator] = None) -> CalibrationResult:
    """Internal-noise level giving ``target_pc`` for a ``delta_l`` increment.

    For every stimulus the increment task is run on a grid of sigma values;
    the sigma whose mean proportion correct is nearest ``target_pc`` wins.
    """
    if len(stimuli) == 0:
        raise ValueError("need at least one stimulus")
    if sigma_grid is None:
        sigma_grid = np.arange(0.0, 60.01, 0.5)
    sigma_grid = np.asarray(sigma_grid, dtype=float)
    rng = rng if rng is not None else np.random.default_rng(0)
    gaps = []
    pcs = np.empty((len(stimuli), sigma_grid.size))
    for i, s in enumerate(stimuli):
        c_inc, c_std = increment_ccvs(s, model_cfg, delta_l, t_obs)
        gaps.append(c_inc - c_std)
        for j, sg in enumerate(sigma_grid):
            pcs[i, j] = percent_correct_3afc(c_inc, c_std, sg, n_trials, rng)
    mean_pc = pcs.mean(axis=0)
    if not (mean_pc.min() <= target_pc <= mean_pc.max()):
        raise ValueError(
            f"target {target_pc} outside the reachable range [{mean_pc.min():.3f}, {mean_pc.max():.3f}] on this grid"
        )
    j = int(np.argmin(np.abs(mean_pc - target_pc)))
    return CalibrationResult(float(sigma_grid[j]), sigma_grid, mean_pc, pcs, np.array(gaps))
