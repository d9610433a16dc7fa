"""Histogram entropy / mutual information and auto-MI lag selection.

All estimators are plug-in estimators on equal-width bins spanning the
observed min-max, in bits. Sums go through ``math.fsum`` so results do not
depend on summation order (MI(x, y) == MI(y, x) exactly).
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

from .grid import PixelSeries

MAX_BINS = 64
DEFAULT_TAU_MAX = 24
FALLBACK_LAG = 7
# a curve counts as informative when some lag beats this multiple of the
# Miller-Madow bias expected under independence
NOISE_FLOOR_FACTOR = 2.0


def default_bins(n: int) -> int:
    return max(1, min(MAX_BINS, math.ceil(math.sqrt(n))))


def _edges(x: np.ndarray, bins: int) -> Tuple[float, float, int]:
    return float(np.min(x)), float(np.max(x)), bins


def _bin_index(x: np.ndarray, edges: Tuple[float, float, int]) -> np.ndarray:
    lo, hi, k = edges
    if hi <= lo:
        return np.zeros(x.shape, dtype=np.int64)
    idx = np.floor((x - lo) / (hi - lo) * k).astype(np.int64)
    return np.clip(idx, 0, k - 1)


def _plogp_sum(counts: np.ndarray, n: int) -> float:
    p = counts[counts > 0] / n
    return -math.fsum((p * np.log2(p)).tolist())


@dataclass(frozen=True)
class Histogram2D:
    bins_x: int
    bins_y: int
    edges_x: np.ndarray
    edges_y: np.ndarray
    joint_counts: np.ndarray
    n: int

    @property
    def counts_x(self) -> np.ndarray:
        return self.joint_counts.sum(axis=1)

    @property
    def counts_y(self) -> np.ndarray:
        return self.joint_counts.sum(axis=0)


def _check(x, name="samples") -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValueError(f"{name} must be non-empty")
    if np.isnan(x).any():
        raise ValueError(f"{name} contain NaN; drop missing samples first")
    return x


def histogram2d(x, y, bins: Optional[int] = None, edges_x=None, edges_y=None) -> Histogram2D:
    x, y = _check(x, "x"), _check(y, "y")
    if x.size != y.size:
        raise ValueError(f"length mismatch: {x.size} vs {y.size}")
    bins = default_bins(x.size) if bins is None else int(bins)
    if bins < 1:
        raise ValueError("bins must be >= 1")
    ex = _edges(x, bins) if edges_x is None else edges_x
    ey = _edges(y, bins) if edges_y is None else edges_y
    ix, iy = _bin_index(x, ex), _bin_index(y, ey)
    joint = np.bincount(ix * ey[2] + iy, minlength=ex[2] * ey[2]).reshape(ex[2], ey[2])
    return Histogram2D(ex[2], ey[2], np.linspace(ex[0], ex[1], ex[2] + 1),
                       np.linspace(ey[0], ey[1], ey[2] + 1), joint, x.size)


def entropy(samples, bins: Optional[int] = None) -> float:
    x = _check(samples)
    bins = default_bins(x.size) if bins is None else int(bins)
    if bins < 1:
        raise ValueError("bins must be >= 1")
    counts = np.bincount(_bin_index(x, _edges(x, bins)), minlength=bins)
    return max(0.0, _plogp_sum(counts, x.size))


def _mi_from_joint(joint: np.ndarray, n: int) -> float:
    px = joint.sum(axis=1) / n
    py = joint.sum(axis=0) / n
    i, j = np.nonzero(joint)
    pxy = joint[i, j] / n
    terms = pxy * np.log2(pxy / (px[i] * py[j]))
    return max(0.0, math.fsum(terms.tolist()))


def mutual_information(x, y, bins: Optional[int] = None) -> float:
    """Plug-in MI in bits from the joint histogram of (x, y)."""
    x, y = _check(x, "x"), _check(y, "y")
    if x.size != y.size:
        raise ValueError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise ValueError("need at least 2 paired samples")
    h = histogram2d(x, y, bins)
    return _mi_from_joint(h.joint_counts, h.n)


def conditional_entropy(x, y, bins: Optional[int] = None) -> float:
    """H(X|Y) = -sum p(x,y) log2(p(x,y) / p(y))."""
    h = histogram2d(x, y, bins)
    py = h.counts_y / h.n
    i, j = np.nonzero(h.joint_counts)
    pxy = h.joint_counts[i, j] / h.n
    return max(0.0, -math.fsum((pxy * np.log2(pxy / py[j])).tolist()))


def mi_by_entropies(x, y, bins: Optional[int] = None) -> float:
    """MI as H(X) - H(X|Y); agrees with :func:`mutual_information` up to rounding."""
    h = histogram2d(x, y, bins)
    hx = _plogp_sum(h.counts_x, h.n)
    return hx - conditional_entropy(x, y, bins)


def _independence_bias(joint: np.ndarray, n: int) -> float:
    kx = int((joint.sum(axis=1) > 0).sum())
    ky = int((joint.sum(axis=0) > 0).sum())
    return (kx - 1) * (ky - 1) / (2.0 * n * math.log(2.0))


@dataclass(frozen=True)
class MiCurve:
    lags: np.ndarray
    mi: np.ndarray
    selected_lag: int
    entropy: float
    noise_floor: np.ndarray
    fallback: bool

    def to_csv(self) -> str:
        lines = ["lag,mi_bits"] + [f"{int(l)},{m:.10g}" for l, m in zip(self.lags, self.mi)]
        return "\n".join(lines) + "\n"


def first_local_minimum(mi0: float, mi: Sequence[float]) -> Optional[int]:
    """Smallest lag tau in 1..len-1 with mi[tau-1] > mi[tau] < mi[tau+1] (mi[0] = mi0)."""
    full = [mi0] + list(mi)
    for tau in range(1, len(full) - 1):
        if full[tau - 1] > full[tau] < full[tau + 1]:
            return tau
    return None


def auto_mi_curve(series, tau_max: int = DEFAULT_TAU_MAX, bins: Optional[int] = None,
                  fallback_lag: int = FALLBACK_LAG) -> MiCurve:
    """MI between the series and its lagged copy for lags 1..tau_max.

    Missing samples are deleted pairwise. Bin edges come from all valid samples
    and are shared by every lagged copy. The lag-0 value is the series entropy.
    If no lag exceeds the independence noise floor, or the curve has no
    interior local minimum, ``fallback_lag`` is selected.
    """
    values = series.values if isinstance(series, PixelSeries) else np.asarray(series, dtype=np.float64)
    if tau_max < 2:
        raise ValueError("tau_max must be >= 2")
    if values.size <= tau_max + 2:
        raise ValueError(f"series of length {values.size} too short for tau_max={tau_max}")
    valid = ~np.isnan(values)
    if valid.sum() < 2:
        raise ValueError("series has fewer than 2 valid samples")
    v = values[valid]
    k = default_bins(v.size) if bins is None else int(bins)
    edges = _edges(v, k)
    idx = np.full(values.shape, -1, dtype=np.int64)
    idx[valid] = _bin_index(v, edges)
    h0 = _plogp_sum(np.bincount(idx[valid], minlength=k), int(valid.sum()))
    mi = np.zeros(tau_max)
    floor = np.zeros(tau_max)
    for tau in range(1, tau_max + 1):
        a, b = idx[tau:], idx[:-tau]
        ok = (a >= 0) & (b >= 0)
        n = int(ok.sum())
        if n < 2:
            mi[tau - 1] = np.nan
            floor[tau - 1] = np.inf
            continue
        joint = np.bincount(a[ok] * k + b[ok], minlength=k * k).reshape(k, k)
        mi[tau - 1] = _mi_from_joint(joint, n)
        floor[tau - 1] = NOISE_FLOOR_FACTOR * _independence_bias(joint, n)
    informative = bool(np.any(mi > floor))
    sel = first_local_minimum(h0, mi.tolist()) if informative else None
    fallback = sel is None
    return MiCurve(np.arange(1, tau_max + 1), mi, fallback_lag if fallback else sel, h0, floor, fallback)


@dataclass(frozen=True)
class LagSummary:
    min: int
    max: int
    mean: float
    median: float
    std: float
    count: int


def grid_lag_statistics(curves: Iterable) -> LagSummary:
    """Order statistics of the selected lags; accepts MiCurves or plain integers.

    ``std`` is the population standard deviation.
    """
    lags = [c.selected_lag if isinstance(c, MiCurve) else int(c) for c in curves]
    if not lags:
        raise ValueError("need at least one curve")
    return LagSummary(min(lags), max(lags), statistics.fmean(lags), float(statistics.median(lags)),
                      statistics.pstdev(lags), len(lags))
