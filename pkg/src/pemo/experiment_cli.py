"""Command-line front end.

Sub-commands::

    pemo simulate        threshold tables for pairs x t_obs x ICRA version
    pemo tobs-sweep      DR and correlations per t_obs
    pemo compare-icra    delta-SNR between ICRA versions A and B
    pemo tone-demo       adaptation-loop response to a 4-kHz tone
    pemo analyze-info    information shares per audio/modulation band
    pemo represent       dump an internal representation
    pemo calibrate-sigma internal-noise calibration
    pemo gen-noise       write ICRA noise realizations

Configuration is a TOML file (``[experiment]``, ``[staircase]`` and
``[model]`` tables); command-line flags override it.  The noise cache
lives under ``$PEMO_CACHE_DIR`` (default ``~/.cache/pemo``).
"""
from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .afc_harness import ABLATIONS, StaircaseConfig, calibrate_internal_noise
from .central_processor import CRITERIA, SNR_SUPRA, N_TEMPLATE_REALIZATIONS, difference_representation
from .config import PRESETS, get_preset
from .icra_noise import CACHE_ENV, IcraVersion, NoiseCache, default_cache_dir, generate_icra_noise
from .modulation_analysis import build_representation, info_percentages, weighted_difference
from .peripheral_model import PeripheralConfig, adaptation_loops, gammatone_bands, ihc_transduction
from .seeding import seed_sequence
from .signal_io import AudioSignal, RoveSpec, load_manifest, load_stimulus, load_wav, noise_gain_for_snr, write_wav
from .stats import dynamic_range, median_iqr, pearson, percentile_groups, spearman
from .stimuli import pure_tone, synthetic_set

log = logging.getLogger("pemo")

SUBSET9 = ("12", "15", "16", "23", "26", "27", "37", "45", "47")
PAIR_PRESETS = {"subset9": SUBSET9}
REFERENCE_FILE = Path(__file__).with_name("data") / "reference_thresholds.csv"
TABLE_FIELDS = ("pair_id", "median_snr", "q25", "q75", "iqr", "n_runs", "t_obs", "icra_version")


# ------------------------------------------------------------------ config

def _parse_tobs(v) -> Optional[float]:
    if v is None or (isinstance(v, str) and v.lower() in ("full", "none", "")):
        return None
    return float(v)


def _tobs_label(t: Optional[float]) -> str:
    return "full" if t is None else format(float(t), "g")


@dataclass
class ExperimentConfig:
    """Everything a batch simulation needs.

    Parameters
    ----------
    manifest : Path, optional
        Stimulus manifest; ``None`` uses the built-in synthetic set.
    model : str
        Model preset name.
    t_obs : tuple
        Observation periods in seconds; ``None`` means the full duration.
    versions : tuple of str
        ICRA versions to simulate.
    staircase : StaircaseConfig
    output_dir : Path
    seed : int
        Master seed.
    pairs : tuple of str, optional
        Pair ids (``"12"`` positional, or ``"a-b"`` by stimulus id).
    pair_preset : str, optional
        Named pair list, e.g. ``subset9``.
    """

    manifest: Optional[Path] = None
    model: str = "lim5"
    t_obs: tuple = (0.25,)
    versions: tuple = ("A",)
    staircase: StaircaseConfig = field(default_factory=StaircaseConfig)
    output_dir: Path = Path("results")
    seed: int = 0
    pairs: Optional[tuple] = None
    pair_preset: Optional[str] = None
    mode: str = "ext+int"
    criterion: str = "difference"
    snr_supra: float = SNR_SUPRA
    n_template_noises: int = N_TEMPLATE_REALIZATIONS
    percentile_method: str = "linear"
    synthetic_fs: float = 22050.0
    sigma: Optional[float] = None
    decimate: int = 1
    workers: int = 1
    noise_cache: bool = True

    def __post_init__(self):
        self.t_obs = tuple(_parse_tobs(t) for t in self.t_obs)
        self.versions = tuple(IcraVersion(v).value for v in self.versions)
        if self.manifest is not None:
            self.manifest = Path(self.manifest)
        self.output_dir = Path(self.output_dir)
        if self.pairs is not None:
            self.pairs = tuple(str(p) for p in self.pairs)
        if self.pair_preset is not None and self.pair_preset not in PAIR_PRESETS:
            raise ValueError(f"unknown pair preset {self.pair_preset!r}; choose from {sorted(PAIR_PRESETS)}")
        if self.model not in PRESETS:
            raise ValueError(f"unknown model preset {self.model!r}; choose from {sorted(PRESETS)}")
        if self.mode not in ABLATIONS + ("none",):
            raise ValueError(f"unknown variability mode {self.mode!r}")
        if self.criterion not in CRITERIA:
            raise ValueError(f"unknown criterion {self.criterion!r}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if any(t is not None and t <= 0 for t in self.t_obs):
            raise ValueError("t_obs values must be positive")

    @classmethod
    def from_toml(cls, path, **overrides) -> "ExperimentConfig":
        path = Path(path)
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
        unknown = set(doc) - {"experiment", "staircase", "model"}
        if unknown:
            raise ValueError(f"{path}: unknown tables {sorted(unknown)}")
        exp = dict(doc.get("experiment", {}))
        names = {f.name for f in fields(cls)} - {"staircase"}
        bad = set(exp) - names
        if bad:
            raise ValueError(f"{path}: unknown [experiment] keys {sorted(bad)}")
        for key in ("manifest", "output_dir"):
            if exp.get(key) is not None:
                p = Path(exp[key])
                exp[key] = p if p.is_absolute() else path.parent / p
        model = doc.get("model", {})
        if model:
            bad = set(model) - {"preset", "sigma", "decimate"}
            if bad:
                raise ValueError(f"{path}: unknown [model] keys {sorted(bad)}")
            exp.setdefault("model", model.get("preset", cls.model))
            if "sigma" in model:
                exp["sigma"] = model["sigma"]
            if "decimate" in model:
                exp["decimate"] = model["decimate"]
        exp["staircase"] = staircase_from_dict(doc.get("staircase", {}))
        exp.update({k: v for k, v in overrides.items() if v is not None})
        for key in ("t_obs", "versions", "pairs"):
            if key in exp and exp[key] is not None and not isinstance(exp[key], (list, tuple)):
                exp[key] = (exp[key],)
        return cls(**exp)

    def model_config(self):
        cfg = get_preset(self.model)
        if self.sigma is not None:
            cfg = replace(cfg, sigma=float(self.sigma))
        if self.decimate != 1:
            cfg = replace(cfg, decimate=int(self.decimate))
        return cfg

    def to_dict(self) -> dict:
        d = asdict(self)
        d["manifest"] = None if self.manifest is None else str(self.manifest)
        d["output_dir"] = str(self.output_dir)
        d["t_obs"] = [_tobs_label(t) for t in self.t_obs]
        return json.loads(json.dumps(d, default=str))


def staircase_from_dict(d: dict) -> StaircaseConfig:
    d = dict(d)
    allowed = {f.name for f in fields(StaircaseConfig)} | {"rove_db"}
    bad = set(d) - allowed
    if bad:
        raise ValueError(f"unknown [staircase] keys {sorted(bad)}")
    if "rove_db" in d:
        r = float(d.pop("rove_db"))
        d["rove"] = RoveSpec(r, enabled=r > 0)
    for key in ("steps", "step_after"):
        if key in d:
            d[key] = tuple(d[key])
    if "t_obs" in d:
        d["t_obs"] = _parse_tobs(d["t_obs"])
    return StaircaseConfig(**d)


def load_stimuli(cfg: ExperimentConfig) -> dict:
    """Ordered mapping of stimulus id to calibrated signal."""
    if cfg.manifest is None:
        return synthetic_set(cfg.synthetic_fs)
    if not cfg.manifest.exists():
        raise FileNotFoundError(f"manifest {cfg.manifest} does not exist")
    entries = load_manifest(cfg.manifest)
    missing = [str(e.path) for e in entries if not e.path.exists()]
    if missing:
        raise FileNotFoundError(f"missing stimuli: {', '.join(missing)}")
    stimuli = {e.id: load_stimulus(e) for e in entries}
    rates = {s.fs for s in stimuli.values()}
    if len(rates) > 1:
        raise ValueError(f"stimuli have different sampling rates: {sorted(rates)}")
    return stimuli


def validate(cfg: ExperimentConfig, stimuli: dict) -> None:
    if len(stimuli) < 2:
        raise ValueError("need at least two stimuli")
    shortest = min(s.duration for s in stimuli.values())
    for t in cfg.t_obs:
        if t is not None and t > shortest + 1e-9:
            raise ValueError(f"t_obs {t} s exceeds the shortest stimulus ({shortest:.3f} s)")


def resolve_pairs(cfg: ExperimentConfig, ids: Sequence[str]) -> list:
    """``[(pair_id, a, b), ...]``.

    A two-digit id ``"ij"`` selects the i-th and j-th stimulus (1-based,
    manifest order); ``"a-b"`` selects stimuli by id.
    """
    ids = list(ids)
    if cfg.pairs is not None:
        spec = cfg.pairs
    elif cfg.pair_preset is not None:
        spec = PAIR_PRESETS[cfg.pair_preset]
    else:
        positional = len(ids) <= 9
        return [
            (f"{i + 1}{j + 1}" if positional else f"{a}-{b}", a, b)
            for (i, a), (j, b) in itertools.combinations(enumerate(ids), 2)
        ]
    out = []
    for p in spec:
        if "-" in p:
            a, b = p.split("-", 1)
            for s in (a, b):
                if s not in ids:
                    raise KeyError(f"pair {p}: missing stimulus {s!r}")
        elif len(p) == 2 and p.isdigit():
            i, j = int(p[0]) - 1, int(p[1]) - 1
            if max(i, j) >= len(ids) or min(i, j) < 0:
                raise KeyError(f"pair {p}: manifest lists only {len(ids)} stimuli")
            a, b = ids[i], ids[j]
        else:
            raise ValueError(f"cannot parse pair id {p!r}")
        if a == b:
            raise ValueError(f"pair {p} compares a stimulus with itself")
        out.append((p, a, b))
    if len({p for p, _, _ in out}) != len(out):
        raise ValueError("duplicate pair ids")
    return out


def check_seed_collisions(cfg: ExperimentConfig, pairs) -> None:
    """Every run of every condition must get its own random stream."""
    seen = {}
    for (pid, _, _), v, t in itertools.product(pairs, cfg.versions, cfg.t_obs):
        for k in range(cfg.staircase.n_runs):
            key = seed_sequence(cfg.seed, "run", pid, v, str(t), cfg.mode, k).spawn_key
            label = (pid, v, t, k)
            if key in seen:
                raise ValueError(f"seed collision between {seen[key]} and {label}")
            seen[key] = label


# ----------------------------------------------------------------- tables

@dataclass(frozen=True)
class ThresholdRow:
    pair_id: str
    median_snr: float
    q25: float
    q75: float
    n_runs: int
    t_obs: Optional[float]
    icra_version: str

    @property
    def iqr(self) -> float:
        return self.q75 - self.q25


def _fmt(x) -> str:
    return format(float(x), ".6g")


class ThresholdTable:
    """Median thresholds keyed by (pair, t_obs, ICRA version)."""

    def __init__(self, rows=()):
        self.rows: list[ThresholdRow] = []
        for r in rows:
            self.add(r)

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def add(self, row: ThresholdRow) -> None:
        for r in self.rows:
            if (r.pair_id, r.t_obs, r.icra_version) == (row.pair_id, row.t_obs, row.icra_version):
                raise ValueError(
                    f"duplicate pair {row.pair_id} for t_obs={_tobs_label(row.t_obs)}, version {row.icra_version}"
                )
        self.rows.append(row)

    def conditions(self) -> list:
        out = []
        for r in self.rows:
            c = (r.t_obs, r.icra_version)
            if c not in out:
                out.append(c)
        return out

    def select(self, t_obs=None, version=None) -> dict:
        """``{pair_id: median}`` for one condition."""
        return {
            r.pair_id: r.median_snr for r in self.rows
            if r.t_obs == t_obs and r.icra_version == version
        }

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TABLE_FIELDS)
        for r in self.rows:
            w.writerow([r.pair_id, _fmt(r.median_snr), _fmt(r.q25), _fmt(r.q75), _fmt(r.iqr),
                        r.n_runs, _tobs_label(r.t_obs), r.icra_version])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "ThresholdTable":
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            missing = set(TABLE_FIELDS) - set(reader.fieldnames or ())
            if missing:
                raise ValueError(f"{path}: missing columns {sorted(missing)}")
            return cls(
                ThresholdRow(row["pair_id"], float(row["median_snr"]), float(row["q25"]), float(row["q75"]),
                             int(row["n_runs"]), _parse_tobs(row["t_obs"]), row["icra_version"])
                for row in reader
            )

    def to_json(self) -> list:
        return [
            {"pair_id": r.pair_id, "median_snr": r.median_snr, "q25": r.q25, "q75": r.q75, "iqr": r.iqr,
             "n_runs": r.n_runs, "t_obs": _tobs_label(r.t_obs), "icra_version": r.icra_version}
            for r in self.rows
        ]


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


# --------------------------------------------------------------- simulate

def _run_job(job):
    from .pipeline import PairSimulator

    cfg, stimuli, pid, a, b, version, t_obs = job
    cache = NoiseCache(default_cache_dir() / "noise") if cfg.noise_cache else None
    sim = PairSimulator(
        stimuli, cfg.model_config(), cfg.seed, cfg.snr_supra, cfg.n_template_noises,
        criterion=cfg.criterion, noise_cache=cache, percentile_method=cfg.percentile_method,
    )
    sc = replace(cfg.staircase, t_obs=t_obs)
    res = sim.run_condition(a, b, version, sc, cfg.mode, pid)
    return pid, version, t_obs, res


def simulate(cfg: ExperimentConfig, stimuli: Optional[dict] = None):
    """Run every pair x t_obs x version condition.

    Returns
    -------
    table : ThresholdTable
    results : list of (pair_id, version, t_obs, ConditionResult)
    """
    stimuli = load_stimuli(cfg) if stimuli is None else stimuli
    validate(cfg, stimuli)
    pairs = resolve_pairs(cfg, list(stimuli))
    check_seed_collisions(cfg, pairs)
    jobs = [
        (cfg, stimuli, pid, a, b, v, t)
        for t in cfg.t_obs for v in cfg.versions for pid, a, b in pairs
    ]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(cfg.workers) as ex:
            results = list(ex.map(_run_job, jobs))
    else:
        results = [_run_job(j) for j in jobs]
    table = ThresholdTable(
        ThresholdRow(pid, res.median, res.q25, res.q75, res.n_runs, t, v)
        for pid, v, t, res in results
    )
    return table, results


def write_simulation(cfg: ExperimentConfig, table: ThresholdTable, results, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    table.to_csv(out / "thresholds.csv")
    _write_json(out / "thresholds.json", {"config": cfg.to_dict(), "thresholds": table.to_json()})
    run_rows, trial_rows = [], []
    for pid, v, t, res in results:
        for k, est in enumerate(res.estimates):
            run_rows.append([pid, _tobs_label(t), v, k, est.target_id, _fmt(est.threshold_snr),
                             len(est.trial_log), " ".join(_fmt(r) for r in est.reversal_snrs)])
            for i, tr in enumerate(est.trial_log):
                trial_rows.append([pid, _tobs_label(t), v, k, i, _fmt(tr.snr), int(tr.correct),
                                   tr.target_pos, tr.choice])
    _write_csv(out / "runs.csv",
               ("pair_id", "t_obs", "icra_version", "run", "target_id", "threshold_snr", "n_trials", "reversals"),
               run_rows)
    _write_csv(out / "trials.csv",
               ("pair_id", "t_obs", "icra_version", "run", "trial", "snr", "correct", "target_pos", "choice"),
               trial_rows)


# ------------------------------------------------------------- reference

def load_reference(path=None, quantity: str = "thres_exp", t_obs=None, version=None) -> dict:
    """``{pair_id: value}`` from a long-format reference file or a threshold table.

    Long format has columns ``pair_id,quantity,t_obs,icra_version,value``.
    A threshold table (``thresholds.csv``) must hold a single condition
    unless ``t_obs``/``version`` pick one.
    """
    path = Path(path) if path is not None else REFERENCE_FILE
    if not path.exists():
        raise FileNotFoundError(f"reference file {path} does not exist")
    with open(path, newline="") as fh:
        header = next(csv.reader(fh), [])
    if "median_snr" in header:
        tab = ThresholdTable.from_csv(path)
        conds = tab.conditions()
        if t_obs is not None or version is not None:
            conds = [c for c in conds if (t_obs is None or c[0] == t_obs) and (version is None or c[1] == version)]
        if len(conds) != 1:
            raise ValueError(f"{path}: need exactly one condition, found {conds}")
        return tab.select(*conds[0])
    out = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            if row["quantity"] != quantity or row["pair_id"] == "*":
                continue
            if t_obs is not None and _parse_tobs(row.get("t_obs")) != t_obs:
                continue
            if version is not None and row.get("icra_version") and row["icra_version"] != version:
                continue
            out[row["pair_id"]] = float(row["value"])
    return out


def _corr(fn, x, y, seed):
    try:
        return fn(x, y, seed=seed)
    except ValueError as e:
        log.warning("correlation skipped: %s", e)
        return None


def tobs_summary(table: ThresholdTable, reference: Optional[dict] = None, exclude=(),
                 intersect: bool = False, seed: int = 0) -> list:
    """Per-condition ``thres_max``, ``thres_min``, ``DR`` and correlations.

    Spearman uses every pair; Pearson leaves out ``exclude``.  With a
    reference, missing pairs raise unless ``intersect`` is set.
    """
    out = []
    for t, v in table.conditions():
        sim = table.select(t, v)
        hi, lo, dr = dynamic_range(list(sim.values()))
        row = {
            "t_obs": _tobs_label(t), "icra_version": v, "n_pairs": len(sim),
            "thres_max": hi, "pair_max": max(sim, key=sim.get),
            "thres_min": lo, "pair_min": min(sim, key=sim.get), "dr": dr,
            "r_p": None, "p_p": None, "n_p": None, "r_s": None, "p_s": None, "n_s": None,
        }
        if reference is not None:
            missing = sorted(set(sim) - set(reference))
            if missing and not intersect:
                raise KeyError(f"reference lacks pairs {missing}")
            ids = [p for p in sim if p in reference]
            rs = _corr(spearman, [sim[p] for p in ids], [reference[p] for p in ids], seed)
            ids_p = [p for p in ids if p not in set(exclude)]
            rp = _corr(pearson, [sim[p] for p in ids_p], [reference[p] for p in ids_p], seed)
            if rs is not None:
                row.update(r_s=rs.r, p_s=rs.p, n_s=rs.n)
            if rp is not None:
                row.update(r_p=rp.r, p_p=rp.p, n_p=rp.n)
        out.append(row)
    return out


def compare_icra(table_a: dict, table_b: dict, method: str = "linear") -> dict:
    """``delta = thres(A) - thres(B)`` per pair, median/IQR and percentile groups."""
    if not table_a:
        raise ValueError("version A table missing or empty")
    if not table_b:
        raise ValueError("version B table missing or empty")
    missing = sorted(set(table_a) ^ set(table_b))
    if missing:
        raise KeyError(f"pairs present in only one version: {missing}")
    ids = list(table_a)
    delta = [table_a[p] - table_b[p] for p in ids]
    g = percentile_groups(ids, delta, method)
    s = g["summary"]
    return {
        "delta": dict(zip(ids, delta)),
        "median": s.median, "q25": s.q25, "q75": s.q75, "n": s.n,
        "group1": g["group1"], "group2": g["group2"], "group3": g["group3"],
    }


# --------------------------------------------------------------- tone demo

@dataclass
class ToneDemoRow:
    level_db: float
    limiter: float
    onset_max: float
    steady_avg: float

    @property
    def ratio(self) -> float:
        return self.onset_max / self.steady_avg


def tone_response(level_db, limiter, fs=44100.0, freq=4000.0, dur=0.3, ramp=0.0025, pad=0.05):
    """Adaptation-loop output for a gated tone in one gammatone band at ``freq``.

    No outer/middle-ear filter is applied.  Returns ``(t, psi, onset_max,
    steady_avg)``; ``steady_avg`` averages the 20 ms before the offset ramp.
    """
    x = pure_tone(freq, level_db, dur, fs, ramp, pre=pad, post=pad)
    per = PeripheralConfig(limiter_factor=limiter)
    bm = gammatone_bands(x, [freq], per.gt_order).data
    ihc = ihc_transduction(bm, fs, per.ihc_lpf_cutoff, per.ihc_lpf_cascade)
    psi = adaptation_loops(ihc, fs, per)[0]
    off = int(round(pad * fs)) + int(round(dur * fs)) - int(round(ramp * fs))
    steady = float(np.mean(psi[off - int(round(0.02 * fs)):off]))
    return np.arange(psi.size) / fs, psi, float(psi.max()), steady


def steady_state_dc(level_db: float = 100.0, limiter=5.0, fs=44100.0, dur=2.0) -> float:
    """Loop output after ``dur`` s of a constant input at ``level_db`` (100 dB = 1.0)."""
    x = np.full(int(round(dur * fs)), 10 ** ((level_db - 100) / 20))
    return float(adaptation_loops(x, fs, PeripheralConfig(limiter_factor=limiter))[-1])


def tone_demo(levels=range(10, 101, 10), limiters=(np.inf, 10.0, 5.0), fs=44100.0):
    """``(rows, series)``; ``series[(lim, level)] = (t, psi)``."""
    rows, series = [], {}
    for lim in limiters:
        for lvl in levels:
            t, psi, on, st = tone_response(lvl, lim, fs)
            rows.append(ToneDemoRow(float(lvl), float(lim), on, st))
            series[(float(lim), float(lvl))] = (t, psi)
    return rows, series


# ----------------------------------------------------------- information

def info_table(R, label=""):
    pm, pk = info_percentages(R)
    return {
        "label": label,
        "audio_fc": R.audio_fc.tolist(), "audio_erb": R.audio_erb.tolist(), "I_m_pct": pm.tolist(),
        "mod_mfc": R.mod_mfc.tolist(), "I_k_pct": pk.tolist(),
    }


def info_for_pairs(stimuli: dict, pairs, thresholds: dict, model_cfg, t_obs, version="A", seed=0):
    """Median information shares of ``dR * T`` at threshold SNR.

    For each pair both sounds serve once as target; the median runs over
    pairs x 2 values.
    """
    from .pipeline import PairSimulator

    sim = PairSimulator(stimuli, model_cfg, seed)
    pm_all, pk_all = [], []
    ref = None
    for pid, a, b in pairs:
        if pid not in thresholds:
            raise KeyError(f"threshold table lacks pair {pid}")
        tp = sim.templates(a, b, version, t_obs)
        noise = sim.noise_bank(a, b, version, 0, 1)[0]
        for sound, T in ((stimuli[a], tp.T_pt), (stimuli[b], tp.T_pr)):
            g = noise_gain_for_snr(sound, noise, thresholds[pid])
            n = noise.samples[: len(sound)] * g
            R_x = build_representation(sound.with_samples(sound.samples + n), model_cfg, t_obs)
            R_n = build_representation(sound.with_samples(n), model_cfg, t_obs)
            W = weighted_difference(difference_representation(R_x, R_n), T)
            pm, pk = info_percentages(W)
            pm_all.append(pm)
            pk_all.append(pk)
            ref = W
    return {
        "label": "dR*T", "n_values": len(pm_all),
        "audio_fc": ref.audio_fc.tolist(), "audio_erb": ref.audio_erb.tolist(),
        "I_m_pct": np.median(pm_all, axis=0).tolist(),
        "mod_mfc": ref.mod_mfc.tolist(), "I_k_pct": np.median(pk_all, axis=0).tolist(),
    }


# -------------------------------------------------------------- commands

def _config_from_args(args) -> ExperimentConfig:
    over = {
        "manifest": getattr(args, "manifest", None),
        "model": getattr(args, "model", None),
        "output_dir": getattr(args, "out", None),
        "seed": args.seed,
        "pair_preset": getattr(args, "preset", None),
        "pairs": getattr(args, "pairs", None),
        "t_obs": getattr(args, "t_obs", None),
        "versions": getattr(args, "versions", None),
        "workers": getattr(args, "workers", None),
        "mode": getattr(args, "mode", None),
    }
    if getattr(args, "no_cache", False):
        over["noise_cache"] = False
    if args.config:
        cfg = ExperimentConfig.from_toml(args.config, **over)
    else:
        cfg = ExperimentConfig(**{k: v for k, v in over.items() if v is not None})
    if getattr(args, "runs", None) is not None:
        cfg.staircase = replace(cfg.staircase, n_runs=args.runs)
    return cfg


def cmd_simulate(args) -> int:
    cfg = _config_from_args(args)
    table, results = simulate(cfg)
    write_simulation(cfg, table, results, cfg.output_dir)
    sys.stdout.write(table.to_csv())
    return 0


def cmd_tobs_sweep(args) -> int:
    if args.table:
        table = ThresholdTable.from_csv(args.table)
        out = Path(args.out) if args.out else Path(args.table).parent
    else:
        cfg = _config_from_args(args)
        table, results = simulate(cfg)
        write_simulation(cfg, table, results, cfg.output_dir)
        out = cfg.output_dir
    reference = None
    if not args.no_reference:
        reference = load_reference(args.reference, args.quantity)
    rows = tobs_summary(table, reference, args.exclude or (), args.intersect, args.seed)
    out.mkdir(parents=True, exist_ok=True)
    keys = list(rows[0]) if rows else []
    _write_csv(out / "tobs_sweep.csv", keys, [[_cell(r[k]) for k in keys] for r in rows])
    _write_json(out / "tobs_sweep.json", rows)
    for r in rows:
        print(f"t_obs={r['t_obs']:>5} {r['icra_version']}  max {r['thres_max']:6.2f} ({r['pair_max']})  "
              f"min {r['thres_min']:6.2f} ({r['pair_min']})  DR {r['dr']:6.2f}  "
              f"r_p {_cell(r['r_p'])}  r_s {_cell(r['r_s'])}")
    return 0


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return _fmt(v)
    return v


def cmd_compare_icra(args) -> int:
    tab = ThresholdTable.from_csv(args.table)
    tab_b = ThresholdTable.from_csv(args.table_b) if args.table_b else tab
    t = _parse_tobs(args.t_obs) if args.t_obs is not None else None
    if args.t_obs is None:
        tvals = {c[0] for c in tab.conditions()}
        if len(tvals) != 1:
            raise ValueError(f"table holds several t_obs values {sorted(map(_tobs_label, tvals))}; pick one")
        t = tvals.pop()
    res = compare_icra(tab.select(t, "A"), tab_b.select(t, "B"), args.method)
    out = Path(args.out) if args.out else Path(args.table).parent
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "delta_snr.csv", ("pair_id", "delta_snr", "group"),
               [[p, _fmt(d), next(g for g in (1, 2, 3) if p in res[f"group{g}"])] for p, d in res["delta"].items()])
    _write_json(out / "delta_snr.json", res)
    print(f"median {res['median']:.2f} dB, IQR {res['q25']:.2f} to {res['q75']:.2f} dB (n={res['n']})")
    for g in (1, 2, 3):
        print(f"group {g}: {' '.join(res[f'group{g}'])}")
    return 0


def cmd_tone_demo(args) -> int:
    levels = range(args.level_min, args.level_max + 1, args.level_step)
    lims = [np.inf if str(x).lower() in ("inf", "none") else float(x) for x in args.lims]
    rows, series = tone_demo(levels, lims, args.fs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "tone_demo.csv", ("limiter", "level_db", "onset_max", "steady_avg", "ratio"),
               [[_fmt(r.limiter), _fmt(r.level_db), _fmt(r.onset_max), _fmt(r.steady_avg), _fmt(r.ratio)]
                for r in rows])
    np.savez_compressed(
        out / "tone_demo_series.npz",
        **{f"lim{_fmt(lim)}_L{_fmt(lvl)}": psi for (lim, lvl), (_, psi) in series.items()},
        t=next(iter(series.values()))[0],
    )
    dc = {_fmt(lim): steady_state_dc(100.0, lim, args.fs) for lim in lims}
    _write_json(out / "tone_demo.json", {"rows": [asdict(r) | {"ratio": r.ratio} for r in rows],
                                         "steady_100dB_dc": dc})
    for r in rows:
        print(f"lim={_fmt(r.limiter):>4} L={r.level_db:5.1f}  onset {r.onset_max:9.1f}  "
              f"steady {r.steady_avg:7.2f}  ratio {r.ratio:7.2f}")
    return 0


def cmd_analyze_info(args) -> int:
    cfg = _config_from_args(args)
    stimuli = load_stimuli(cfg)
    t_obs = cfg.t_obs[0]
    presets = args.presets or [cfg.model]
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = {}
    for name in presets:
        mc = get_preset(name)
        if args.table:
            tab = ThresholdTable.from_csv(args.table)
            thr = tab.select(t_obs, cfg.versions[0])
            if not thr:
                raise ValueError(f"{args.table} has no rows for t_obs={_tobs_label(t_obs)}, version {cfg.versions[0]}")
            pairs = [p for p in resolve_pairs(cfg, list(stimuli)) if p[0] in thr]
            result[name] = info_for_pairs(stimuli, pairs, thr, mc, t_obs, cfg.versions[0], cfg.seed)
        else:
            ids = [args.stimulus] if args.stimulus else list(stimuli)
            result[name] = {sid: info_table(build_representation(stimuli[sid], mc, t_obs), sid) for sid in ids}
    _write_json(out / "info.json", result)
    print(json.dumps({k: "ok" for k in result}))
    return 0


def _signal_from(args) -> AudioSignal:
    if args.wav:
        return load_wav(args.wav)
    cfg = _config_from_args(args)
    stimuli = load_stimuli(cfg)
    if args.stimulus not in stimuli:
        raise KeyError(f"unknown stimulus {args.stimulus!r}; available: {list(stimuli)}")
    return stimuli[args.stimulus]


def cmd_represent(args) -> int:
    sig = _signal_from(args)
    t_obs = _parse_tobs(args.t_obs[0]) if args.t_obs else None
    R = build_representation(sig, get_preset(args.model), t_obs)
    R.save(args.out)
    print(f"{args.out}: {R.n_channels} channels x {R.n_samples} samples at {R.fs:g} Hz")
    return 0


def cmd_calibrate_sigma(args) -> int:
    cfg = _config_from_args(args)
    stimuli = load_stimuli(cfg)
    res = calibrate_internal_noise(
        list(stimuli.values()), cfg.model_config(), args.delta_l, args.target_pc,
        n_trials=args.trials, t_obs=_parse_tobs(args.t_obs[0]) if args.t_obs else None, rng=np.random.default_rng(args.seed),
    )
    obj = {"sigma": res.sigma, "sigma_grid": res.sigma_grid, "pc": res.pc, "ccv_gap": res.ccv_gap,
           "stimuli": list(stimuli)}
    if args.out:
        _write_json(args.out, obj)
    print(f"sigma = {res.sigma:g} MU")
    return 0


def cmd_gen_noise(args) -> int:
    sig = _signal_from(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for k in range(args.count):
        seed = int(seed_sequence(args.seed, "gen-noise", args.version, k).generate_state(1)[0])
        real = generate_icra_noise(sig, args.version, seed, args.stimulus or "")
        write_wav(out / f"icra_{args.version}_{k}.wav", real.signal)
    print(f"wrote {args.count} version-{args.version} noises to {out}")
    return 0


# ------------------------------------------------------------------ parser

def _add_experiment_args(p, with_sim=True):
    p.add_argument("--config", type=Path, help="TOML experiment file")
    p.add_argument("--manifest", type=Path, help="stimulus manifest CSV (default: synthetic set)")
    p.add_argument("--model", choices=sorted(PRESETS))
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--t-obs", dest="t_obs", nargs="+", help="observation periods in s, or 'full'")
    p.add_argument("--versions", nargs="+", choices=["A", "B"])
    p.add_argument("--pairs", nargs="+", help="pair ids, e.g. 12 or a-b")
    if with_sim:
        p.add_argument("--preset", choices=sorted(PAIR_PRESETS), help="named pair list")
        p.add_argument("--runs", type=int, help="staircase runs per condition")
        p.add_argument("--workers", type=int)
        p.add_argument("--mode", choices=ABLATIONS + ("none",), help="variability sources")
        p.add_argument("--no-cache", action="store_true", help=f"do not store noises under ${CACHE_ENV}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pemo", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master seed")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="threshold tables")
    _add_experiment_args(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("tobs-sweep", parents=[common], help="DR and correlations per t_obs")
    _add_experiment_args(p)
    p.add_argument("--table", type=Path, help="existing thresholds.csv (skips simulation)")
    p.add_argument("--reference", type=Path, help="reference file (default: shipped data)")
    p.add_argument("--quantity", default="thres_exp", help="reference quantity to correlate with")
    p.add_argument("--exclude", nargs="*", help="pairs left out of the Pearson correlation")
    p.add_argument("--intersect", action="store_true", help="correlate over pairs present in both")
    p.add_argument("--no-reference", action="store_true")
    p.set_defaults(func=cmd_tobs_sweep)

    p = sub.add_parser("compare-icra", parents=[common], help="delta-SNR between versions A and B")
    p.add_argument("table", type=Path, help="thresholds.csv with version A (and B) rows")
    p.add_argument("--table-b", type=Path, help="separate table for version B")
    p.add_argument("--t-obs", dest="t_obs")
    p.add_argument("--method", default="linear", help="numpy percentile method")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_compare_icra)

    p = sub.add_parser("tone-demo", parents=[common], help="adaptation-loop tone responses")
    p.add_argument("--level-min", type=int, default=10)
    p.add_argument("--level-max", type=int, default=100)
    p.add_argument("--level-step", type=int, default=10)
    p.add_argument("--lims", nargs="+", default=["inf", "10", "5"])
    p.add_argument("--fs", type=float, default=44100.0)
    p.add_argument("--out", type=Path, default=Path("tone_demo"))
    p.set_defaults(func=cmd_tone_demo)

    p = sub.add_parser("analyze-info", parents=[common], help="information shares per band")
    _add_experiment_args(p, with_sim=False)
    p.add_argument("--stimulus", help="single stimulus id")
    p.add_argument("--presets", nargs="+", choices=sorted(PRESETS))
    p.add_argument("--table", type=Path, help="thresholds.csv; switches to dR*T mode")
    p.set_defaults(func=cmd_analyze_info)

    p = sub.add_parser("represent", parents=[common], help="dump an internal representation")
    _add_experiment_args(p, with_sim=False)
    p.set_defaults(model="lim5")
    p.add_argument("--wav", type=Path)
    p.add_argument("--stimulus")
    p.set_defaults(func=cmd_represent)

    p = sub.add_parser("calibrate-sigma", parents=[common], help="internal-noise calibration")
    _add_experiment_args(p, with_sim=False)
    p.add_argument("--delta-l", type=float, default=1.0)
    p.add_argument("--target-pc", type=float, default=0.707)
    p.add_argument("--trials", type=int, default=10_000)
    p.set_defaults(func=cmd_calibrate_sigma)

    p = sub.add_parser("gen-noise", parents=[common], help="write ICRA noise realizations")
    _add_experiment_args(p, with_sim=False)
    p.add_argument("--wav", type=Path)
    p.add_argument("--stimulus")
    p.add_argument("--version", choices=["A", "B"], default="A")
    p.add_argument("--count", type=int, default=1)
    p.set_defaults(func=cmd_gen_noise)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (FileNotFoundError, KeyError, ValueError) as e:
        parser.exit(2, f"pemo {args.command}: error: {e}\n")


if __name__ == "__main__":
    sys.exit(main())
