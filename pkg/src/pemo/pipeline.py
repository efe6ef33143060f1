"""End-to-end threshold simulation for pairs of sounds.

Seeds are derived from one master seed (see :mod:`pemo.seeding`):

* noise realizations: ``("noise", pair, version, run, slot, sound)`` and
  ``("template-noise", pair, version, slot, sound)``.  ``t_obs`` is not part
  of the key, so a t_obs sweep reuses the same noises;
* trial streams: ``("run", pair, version, t_obs, mode, run)``.
"""
from __future__ import annotations

import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Optional


from .afc_harness import (
    ConditionResult,
    PairObserver,
    StaircaseConfig,
    ablation_config,
    run_condition,
)
from .central_processor import SNR_SUPRA, N_TEMPLATE_REALIZATIONS, LagSearch, TemplateCache, TemplatePair, template_for
from .icra_noise import IcraVersion, NoiseCache, generate_icra_noise, paired_noise
from .seeding import int_seed, rng_for
from .signal_io import AudioSignal

log = logging.getLogger(__name__)


@dataclass
class PairSimulator:
    """Runs conditions for pairs of stimuli under one model configuration.

    Parameters
    ----------
    stimuli : dict
        Stimulus id to calibrated :class:`AudioSignal`.
    model_cfg : ModelConfig
    master_seed : int
    snr_supra : float
    n_template_noises : int
    lags : LagSearch
    criterion : str
    noise_cache : NoiseCache, optional
        Persist realizations on disk.
    template_cache : TemplateCache, optional
    """

    stimuli: dict
    model_cfg: object
    master_seed: int = 0
    snr_supra: float = SNR_SUPRA
    n_template_noises: int = N_TEMPLATE_REALIZATIONS
    lags: LagSearch = LagSearch()
    criterion: str = "difference"
    noise_cache: Optional[NoiseCache] = None
    template_cache: Optional[TemplateCache] = None
    percentile_method: str = "linear"
    max_cached_noises: int = 400
    _noises: OrderedDict = field(default_factory=OrderedDict, repr=False)
    _templates: dict = field(default_factory=dict, repr=False)

    def _realization(self, sound_id: str, version, seed: int):
        key = (sound_id, IcraVersion(version), seed)
        if key in self._noises:
            self._noises.move_to_end(key)
        else:
            src = self.stimuli[sound_id]
            if self.noise_cache is not None:
                real = self.noise_cache.get(src, version, seed, sound_id)
            else:
                real = generate_icra_noise(src, version, seed, sound_id)
            self._noises[key] = real
            while len(self._noises) > self.max_cached_noises:
                self._noises.popitem(last=False)
        return self._noises[key]

    def paired(self, a: str, b: str, version, kind: str, *slot) -> AudioSignal:
        v = IcraVersion(version).value
        pair = f"{a}|{b}"
        ra = self._realization(a, version, int_seed(self.master_seed, kind, pair, v, *slot, a))
        rb = self._realization(b, version, int_seed(self.master_seed, kind, pair, v, *slot, b))
        return paired_noise(ra, rb)

    def noise_bank(self, a, b, version, run: int, size: int = 12) -> list:
        return [self.paired(a, b, version, "noise", run, i) for i in range(size)]

    def template_noises(self, a, b, version) -> list:
        return [self.paired(a, b, version, "template-noise", i) for i in range(self.n_template_noises)]

    def templates(self, a: str, b: str, version, t_obs) -> TemplatePair:
        """Templates with ``a`` as target; swap for the other orientation."""
        key = (a, b, IcraVersion(version).value, t_obs, self.snr_supra)
        if key in self._templates:
            return self._templates[key]
        ckey = {
            "target": a, "reference": b, "version": key[2], "t_obs": t_obs,
            "snr_supra": self.snr_supra, "n": self.n_template_noises, "seed": self.master_seed,
            "model": self.model_cfg.describe(),
        }
        tp = self.template_cache.get(ckey) if self.template_cache is not None else None
        if tp is None:
            noises = self.template_noises(a, b, version)
            tp = TemplatePair(
                template_for(self.stimuli[a], noises, self.model_cfg, t_obs, self.snr_supra),
                template_for(self.stimuli[b], noises, self.model_cfg, t_obs, self.snr_supra),
                t_obs, self.snr_supra, self.n_template_noises,
            )
            if self.template_cache is not None:
                self.template_cache.put(ckey, tp)
        self._templates[key] = tp
        return tp

    def observer(self, a, b, version, run: int, cfg: StaircaseConfig) -> PairObserver:
        """Responder for run ``run``; even runs use ``a`` as target."""
        tp = self.templates(a, b, version, cfg.t_obs)
        bank = self.noise_bank(a, b, version, run, cfg.n_noise_bank)
        if run % 2 == 0:
            tgt, ref = a, b
        else:
            tgt, ref, tp = b, a, tp.swapped()
        return PairObserver(
            self.stimuli[tgt], self.stimuli[ref], tp, bank, self.model_cfg,
            cfg.rove, cfg.internal_noise_on, self.lags, self.criterion,
        )

    def run_condition(self, a: str, b: str, version="A", cfg: StaircaseConfig = StaircaseConfig(),
                      mode: str = "ext+int", pair_id: Optional[str] = None) -> ConditionResult:
        pair_id = pair_id or f"{a}-{b}"
        acfg = ablation_config(cfg, mode)
        v = IcraVersion(version).value
        rngs = [rng_for(self.master_seed, "run", pair_id, v, str(acfg.t_obs), mode, k) for k in range(acfg.n_runs)]
        res = run_condition(
            pair_id, lambda k: self.observer(a, b, version, k, acfg), acfg, rngs, self.percentile_method,
        )
        for k, est in enumerate(res.estimates):
            est.seed = {"master": self.master_seed, "run": k}
            est.target_id = a if k % 2 == 0 else b
        return res
