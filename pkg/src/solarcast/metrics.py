"""Forecast verification: pixel error, nRMSE, gamma index and passing rate."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import partial
from pathlib import Path
from typing import List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .grid import AlignmentError, DaylightFilter, GridSpec, Kind, MapStack, daylight_mask
from .parallel import chunk_ranges, map_ordered

SEASONS = ("winter", "spring", "summer", "autumn")
_SEASON_OF_MONTH = {12: "winter", 1: "winter", 2: "winter", 3: "spring", 4: "spring", 5: "spring",
                    6: "summer", 7: "summer", 8: "summer", 9: "autumn", 10: "autumn", 11: "autumn"}


class DegenerateReferenceError(ValueError):
    pass


@dataclass(frozen=True)
class ErrorSummary:
    nrmse: float
    mean_error: float
    n_samples: int


@dataclass(frozen=True)
class GammaConfig:
    """Gamma-index tolerances.

    ``tol_i_mode="fraction"`` takes ``tol_i`` as a fraction of each reference
    pixel's intensity, never below ``tol_i_floor`` (Wh/m2); ``"absolute"``
    takes ``tol_i`` in Wh/m2. ``search_radius`` (pixels) defaults to three
    times the distance tolerance in pixels.
    """

    tol_r: float = 2500.0
    tol_i: float = 0.10
    tol_i_mode: str = "fraction"
    tol_i_floor: float = 10.0
    search_radius: Optional[int] = None
    intensity_only: bool = False

    def __post_init__(self):
        if not self.tol_r > 0:
            raise ValueError("tol_r must be > 0")
        if not self.tol_i > 0:
            raise ValueError("tol_i must be > 0")
        if self.tol_i_mode not in ("fraction", "absolute"):
            raise ValueError(f"tol_i_mode must be 'fraction' or 'absolute', got {self.tol_i_mode!r}")
        if self.search_radius is not None and self.search_radius < 1:
            raise ValueError("search_radius must be >= 1")

    def radius_px(self, pixel_size_m: float) -> int:
        if self.search_radius is not None:
            return int(self.search_radius)
        return 3 * math.ceil(self.tol_r / pixel_size_m)

    def intensity_tolerance(self, reference: np.ndarray) -> np.ndarray:
        if self.tol_i_mode == "absolute":
            return np.where(np.isnan(reference), np.nan, float(self.tol_i))
        return np.maximum(self.tol_i * reference, self.tol_i_floor)


@dataclass(frozen=True)
class GammaResult:
    gamma_map: np.ndarray
    pass_mask: np.ndarray
    passing_rate: float

    @property
    def evaluated(self) -> int:
        return int(np.count_nonzero(~np.isnan(self.gamma_map)))


# -- error and nRMSE ------------------------------------------------------------

def pixel_error(measured: MapStack, predicted: MapStack) -> MapStack:
    """Signed error measured - predicted per pixel-hour; NaN propagates."""
    measured.check_aligned(predicted)
    err = measured.frames.astype(np.float64) - predicted.frames.astype(np.float64)
    return MapStack(measured.spec, err, Kind.IRRADIANCE_ERROR, validate=False)


def _retained(measured: MapStack, predicted: MapStack, filt: Optional[DaylightFilter]) -> np.ndarray:
    measured.check_aligned(predicted)
    ok = ~np.isnan(measured.frames) & ~np.isnan(predicted.frames)
    if filt is not None:
        ok &= daylight_mask(measured, filt)
    return ok


def nrmse(measured: MapStack, predicted: MapStack, filt: Optional[DaylightFilter] = DaylightFilter(),
          mask: Optional[np.ndarray] = None) -> ErrorSummary:
    """Pooled nRMSE in percent: 100 * sqrt(mean(err^2)) / mean(measured)
    over every retained pixel-hour."""
    ok = _retained(measured, predicted, filt)
    if mask is not None:
        ok &= mask
    n = int(ok.sum())
    if n == 0:
        raise ValueError("no valid pixel-hours after filtering")
    m = measured.frames[ok].astype(np.float64)
    e = m - predicted.frames[ok].astype(np.float64)
    denom = float(np.mean(m))
    if denom == 0:
        raise DegenerateReferenceError("reference mean is zero")
    return ErrorSummary(100.0 * math.sqrt(float(np.mean(e * e))) / denom, float(np.mean(e)), n)


def nrmse_map(measured: MapStack, predicted: MapStack,
              filt: Optional[DaylightFilter] = DaylightFilter()) -> np.ndarray:
    """Per-pixel nRMSE (percent) over the time axis; NaN where undefined."""
    ok = _retained(measured, predicted, filt)
    m = np.where(ok, measured.frames.astype(np.float64), 0.0)
    e = np.where(ok, m - predicted.frames.astype(np.float64), 0.0)
    cnt = ok.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_m = m.sum(axis=0) / cnt
        out = 100.0 * np.sqrt((e * e).sum(axis=0) / cnt) / mean_m
    out[(cnt == 0) | ~(mean_m > 0)] = np.nan
    return out


# -- gamma index ----------------------------------------------------------------

def _gamma_sq(ref: np.ndarray, ev: np.ndarray, tol_i: np.ndarray, px: float, cfg: GammaConfig) -> np.ndarray:
    """Squared gamma for reference frames ``ref`` (F, H, W); NaN where undefined."""
    if cfg.intensity_only:
        return ((ev - ref) / tol_i) ** 2
    _, h, w = ref.shape
    radius = cfg.radius_px(px)
    best = np.full(ref.shape, np.inf)
    inv_tol_r2 = 1.0 / (cfg.tol_r * cfg.tol_r)
    for dy in range(-radius, radius + 1):
        i0, i1 = max(0, -dy), min(h, h - dy)
        if i0 >= i1:
            continue
        for dx in range(-radius, radius + 1):
            j0, j1 = max(0, -dx), min(w, w - dx)
            if j0 >= j1:
                continue
            d2 = ((dy * px) ** 2 + (dx * px) ** 2) * inv_tol_r2
            r = ref[:, i0:i1, j0:j1]
            e = ev[:, i0 + dy:i1 + dy, j0 + dx:j1 + dx]
            g2 = d2 + ((e - r) / tol_i[:, i0:i1, j0:j1]) ** 2
            view = best[:, i0:i1, j0:j1]
            np.fmin(view, g2, out=view)
    best[np.isinf(best) | np.isnan(ref)] = np.nan
    return best


def _gamma_frames(pair: Tuple[np.ndarray, np.ndarray], px: float, cfg: GammaConfig) -> np.ndarray:
    ref, ev = pair
    return np.sqrt(_gamma_sq(ref, ev, cfg.intensity_tolerance(ref), px, cfg))


def gamma_map(reference, evaluated, cfg: GammaConfig = GammaConfig(),
              spec: Optional[GridSpec] = None, pixel_size_m: Optional[float] = None) -> GammaResult:
    """Gamma index of each reference pixel against the evaluated raster.

    A pixel passes when gamma <= 1. NaN reference pixels are not evaluated;
    NaN evaluated pixels are never candidates.
    """
    ref = np.asarray(reference, dtype=np.float64)
    ev = np.asarray(evaluated, dtype=np.float64)
    if ref.shape != ev.shape or ref.ndim != 2:
        raise AlignmentError(f"raster shapes differ or are not 2-D: {ref.shape} vs {ev.shape}")
    if spec is not None and spec.shape != ref.shape:
        raise AlignmentError(f"raster shape {ref.shape} does not match grid {spec.shape}")
    px = float(spec.pixel_size_m if spec is not None else (pixel_size_m or 2500.0))
    g = _gamma_frames((ref[None], ev[None]), px, cfg)[0]
    return _result(g)


def _result(g: np.ndarray) -> GammaResult:
    valid = ~np.isnan(g)
    passed = valid & (g <= 1.0)
    n = int(valid.sum())
    rate = 100.0 * int(passed.sum()) / n if n else float("nan")
    return GammaResult(g, passed, rate)


def gamma_stack(reference: MapStack, evaluated: MapStack, cfg: GammaConfig = GammaConfig(),
                filt: Optional[DaylightFilter] = DaylightFilter(), workers: int = 1,
                frames_per_task: int = 64) -> np.ndarray:
    """Gamma maps for every frame pair, shape (frames, h, w).

    Reference pixels rejected by ``filt`` are not evaluated (NaN).
    """
    reference.check_aligned(evaluated)
    ref = reference.frames.astype(np.float64)
    if filt is not None:
        ref = np.where(daylight_mask(reference, filt), ref, np.nan)
    ev = evaluated.frames.astype(np.float64)
    n = ref.shape[0]
    if n == 0:
        return np.empty(ref.shape)
    # evaluate only frames with at least one reference pixel and one candidate
    active = np.nonzero(~np.isnan(ref).all(axis=(1, 2)) & ~np.isnan(ev).all(axis=(1, 2)))[0]
    out = np.full(ref.shape, np.nan)
    if active.size == 0:
        return out
    ref_a, ev_a = ref[active], ev[active]
    n_tasks = max(1, math.ceil(active.size / frames_per_task))
    # each task carries only its own frames
    tasks = [(ref_a[r.start:r.stop], ev_a[r.start:r.stop]) for r in chunk_ranges(active.size, n_tasks)]
    parts = map_ordered(partial(_gamma_frames, px=reference.spec.pixel_size_m, cfg=cfg), tasks, workers)
    out[active] = np.concatenate(parts, axis=0)
    return out


def passing_rate(gamma: np.ndarray) -> float:
    valid = ~np.isnan(gamma)
    n = int(valid.sum())
    return 100.0 * int((gamma[valid] <= 1.0).sum()) / n if n else float("nan")


# -- seasonal report ------------------------------------------------------------

def season_of(timestamps) -> np.ndarray:
    ts = np.asarray(timestamps, dtype=np.int64)
    months = ts.astype("datetime64[s]").astype("datetime64[M]").astype(np.int64) % 12 + 1
    return np.array([_SEASON_OF_MONTH[int(m)] for m in months], dtype=object)


@dataclass(frozen=True)
class ReportRow:
    predictor: str
    season: str
    nrmse: Optional[float]
    gamma_mean: Optional[float]
    gp_percent: Optional[float]
    n_samples: int


def seasonal_report(measured: MapStack, predictions: Mapping[str, MapStack],
                    cfg: GammaConfig = GammaConfig(), filt: DaylightFilter = DaylightFilter(),
                    gammas: Optional[Mapping[str, np.ndarray]] = None,
                    workers: int = 1) -> List[ReportRow]:
    """nRMSE, mean gamma and passing rate per predictor and season.

    Seasons are meteorological quarters plus ``all`` for the whole span. Mean
    gamma and %GP pool every evaluated pixel-hour of the season. Cells with
    no data are None.
    """
    rows: List[ReportRow] = []
    seasons = season_of(measured.timestamps)
    for name, pred in predictions.items():
        g = gammas[name] if gammas is not None and name in gammas else gamma_stack(measured, pred, cfg, filt, workers)
        for season in ("all",) + SEASONS:
            sel = np.ones(len(measured), bool) if season == "all" else seasons == season
            tmask = np.broadcast_to(sel[:, None, None], measured.frames.shape)
            try:
                es = nrmse(measured, pred, filt, mask=tmask)
                nr, n = es.nrmse, es.n_samples
            except (ValueError, DegenerateReferenceError):
                nr, n = None, 0
            gs = g[sel]
            valid = gs[~np.isnan(gs)]
            if valid.size:
                gm, gp = float(valid.mean()), 100.0 * float((valid <= 1.0).sum()) / valid.size
            else:
                gm, gp = None, None
            rows.append(ReportRow(name, season, nr, gm, gp, n))
    return rows


def _fmt(x: Optional[float]) -> str:
    return "NA" if x is None else f"{x:.6f}"


def report_csv(rows: Sequence[ReportRow]) -> str:
    lines = ["predictor,season,nrmse,gamma_mean,gp_percent"]
    lines += [f"{r.predictor},{r.season},{_fmt(r.nrmse)},{_fmt(r.gamma_mean)},{_fmt(r.gp_percent)}" for r in rows]
    return "\n".join(lines) + "\n"


def parse_report_csv(text: str) -> List[ReportRow]:
    out = []
    for line in text.strip().splitlines()[1:]:
        p, s, a, b, c = line.split(",")
        conv = [None if v == "NA" else float(v) for v in (a, b, c)]
        out.append(ReportRow(p, s, conv[0], conv[1], conv[2], 0))
    return out


def table2(rows: Sequence[ReportRow]) -> List[List[str]]:
    """Comparison table: one column per predictor, rows nRMSE (whole span),
    mean gamma per season, %GP per season."""
    preds = list(dict.fromkeys(r.predictor for r in rows))
    cell = {(r.predictor, r.season): r for r in rows}
    short = {"winter": "wi", "spring": "sp", "summer": "su", "autumn": "au"}

    def val(p, s, attr):
        r = cell.get((p, s))
        v = None if r is None else getattr(r, attr)
        return "NA" if v is None else f"{v:.2f}"

    table = [["criteria"] + preds, ["nRMSE (%)"] + [val(p, "all", "nrmse") for p in preds]]
    for s in SEASONS:
        table.append([f"gamma_{short[s]}"] + [val(p, s, "gamma_mean") for p in preds])
    for s in SEASONS:
        table.append([f"%GP_{short[s]}"] + [val(p, s, "gp_percent") for p in preds])
    return table


def write_pgm(path, gamma: np.ndarray) -> None:
    """Binary graymap of a gamma map: white passes, black fails, grey not evaluated."""
    g = np.asarray(gamma)
    img = np.full(g.shape, 128, dtype=np.uint8)
    valid = ~np.isnan(g)
    img[valid & (g <= 1.0)] = 255
    img[valid & (g > 1.0)] = 0
    h, w = g.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + img.tobytes())
