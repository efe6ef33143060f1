"""Summary statistics for threshold tables."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

N_PERMUTATIONS = 10_000


@dataclass(frozen=True)
class Correlation:
    r: float
    p: float
    n: int


def _check_xy(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-D and of equal length")
    if x.size < 3:
        raise ValueError("need at least 3 points")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise ValueError("correlation undefined for constant input")
    return x, y


def _r(x, y):
    xc = x - x.mean()
    yc = y - y.mean()
    return float(np.dot(xc, yc) / np.sqrt(np.dot(xc, xc) * np.dot(yc, yc)))


def rankdata(x):
    """Average ranks (1-based), ties share the mean rank."""
    x = np.asarray(x, dtype=float)
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(len(x))
    xs = x[order]
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and xs[j + 1] == xs[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def _perm_p(x, y, r_obs, n_perm, seed):
    rng = np.random.default_rng(seed)
    xc = x - x.mean()
    yc = y - y.mean()
    denom = np.sqrt(np.dot(xc, xc) * np.dot(yc, yc))
    perms = np.argsort(rng.random((n_perm, len(y))), axis=1)
    r_perm = (yc[perms] @ xc) / denom
    hits = np.sum(np.abs(r_perm) >= abs(r_obs) - 1e-12)
    return float((hits + 1) / (n_perm + 1))


def pearson(x, y, n_perm: int = N_PERMUTATIONS, seed: int = 0) -> Correlation:
    """Product-moment correlation with a two-sided permutation p-value."""
    x, y = _check_xy(x, y)
    r = _r(x, y)
    return Correlation(r, _perm_p(x, y, r, n_perm, seed), len(x))


def spearman(x, y, n_perm: int = N_PERMUTATIONS, seed: int = 0) -> Correlation:
    """Rank-order correlation with a two-sided permutation p-value."""
    x, y = _check_xy(x, y)
    rx, ry = rankdata(x), rankdata(y)
    r = _r(rx, ry)
    return Correlation(r, _perm_p(rx, ry, r, n_perm, seed), len(x))


@dataclass(frozen=True)
class MedianIQR:
    median: float
    q25: float
    q75: float
    n: int


def median_iqr(values, method: str = "linear") -> MedianIQR:
    """Median and 25th/75th percentiles.

    ``method`` is passed to :func:`numpy.percentile`.
    """
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("no values")
    q25, med, q75 = np.percentile(v, [25, 50, 75], method=method)
    return MedianIQR(float(med), float(q25), float(q75), int(v.size))


def dynamic_range(thresholds) -> tuple[float, float, float]:
    """``(thres_max, thres_min, thres_max - thres_min)``."""
    t = np.asarray(thresholds, dtype=float)
    if t.size == 0:
        raise ValueError("no thresholds")
    return float(t.max()), float(t.min()), float(t.max() - t.min())


def percentile_groups(pair_ids, deltas, method: str = "linear") -> dict:
    """Split pairs by the 25th and 75th percentiles of ``deltas``.

    Group 1 holds deltas at or above the 75th percentile, group 3 those at
    or below the 25th, group 2 the rest.
    """
    d = np.asarray(list(deltas), dtype=float)
    ids = list(pair_ids)
    if len(ids) != d.size:
        raise ValueError("pair_ids and deltas differ in length")
    s = median_iqr(d, method)
    g1 = [p for p, v in zip(ids, d) if v >= s.q75]
    g3 = [p for p, v in zip(ids, d) if v <= s.q25 and p not in g1]
    g2 = [p for p in ids if p not in g1 and p not in g3]
    return {"group1": g1, "group2": g2, "group3": g3, "summary": s}
