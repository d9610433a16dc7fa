"""Next-hour irradiance predictors applied pixel-wise.

Each predictor maps data up to time t onto a forecast raster for t+1. The
single-map functions take a :class:`ForecastRequest`; :func:`forecast_stack`
produces every t+1 forecast over a span of frames at once.

Missing inputs give missing outputs (NaN); nothing is imputed.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import partial
from typing import Dict, Optional, Sequence, Union

import numpy as np

from .grid import AlignmentError, DaylightFilter, GridSpec, Kind, MapStack
from .heliosat import CSI_FLOOR_WH, clamp_csi, csi_from_irradiance
from .mlp import ModelBundle, PixelMlp
from .parallel import chunk_ranges, map_ordered

PREDICTORS = ("persistence", "scaled_persistence", "clear_sky", "mlp")
ALIASES = {"scaled": "scaled_persistence", "clearsky": "clear_sky", "persist": "persistence"}
MLP_OUTPUT_RANGE = (0.0, 1.2)


def canonical_predictor(name: str) -> str:
    name = ALIASES.get(name, name)
    if name not in PREDICTORS:
        raise ValueError(f"unknown predictor {name!r}; choose from {', '.join(PREDICTORS)}")
    return name


@dataclass(frozen=True)
class ForecastRequest:
    """History through time t plus clear-sky frames covering t+1.

    ``target_time`` defaults to one step after the last history frame.
    """

    history: MapStack
    clear_sky: MapStack
    target_time: Optional[int] = None

    def __post_init__(self):
        if not self.history.spec.same_geometry(self.clear_sky.spec):
            raise AlignmentError("history and clear-sky grids differ")
        if self.history.spec.step_s != self.clear_sky.spec.step_s:
            raise AlignmentError("history and clear-sky steps differ")
        if len(self.history) == 0:
            raise ValueError("history has no frames")
        nxt = int(self.history.timestamps[-1]) + self.history.spec.step_s
        if self.target_time is None:
            object.__setattr__(self, "target_time", nxt)
        elif int(self.target_time) != nxt:
            raise ValueError(f"target_time {self.target_time} is not one step after the history ({nxt})")
        self.clear_sky.index_of(self.target_time)

    @property
    def t(self) -> int:
        return int(self.history.timestamps[-1])

    def clear_sky_at(self, ts: int) -> np.ndarray:
        return self.clear_sky.frames[self.clear_sky.index_of(ts)].astype(np.float64)

    def last(self) -> np.ndarray:
        return self.history.frames[-1].astype(np.float64)


@dataclass(frozen=True)
class ForecastMap:
    spec: GridSpec
    values: np.ndarray
    predictor_id: str
    target_time: int

    def to_stack(self) -> MapStack:
        return MapStack(self.spec.with_time(self.target_time), self.values[None], Kind.IRRADIANCE, validate=False)


def _finish(req: ForecastRequest, values: np.ndarray, pid: str,
            daylight: Optional[DaylightFilter]) -> ForecastMap:
    values = np.asarray(values, dtype=np.float64)
    if daylight is not None and not daylight.hour_mask([req.target_time])[0]:
        values = np.full_like(values, np.nan)
    return ForecastMap(req.history.spec, values.astype(np.float32), pid, int(req.target_time))


# -- array kernels --------------------------------------------------------------

def _scaled(prev, cs_prev, cs_next, floor=CSI_FLOOR_WH):
    ok = cs_prev > floor
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(ok, prev * (cs_next / np.where(ok, cs_prev, 1.0)), np.nan)


def _mlp_kernel(windows: np.ndarray, cs_next: np.ndarray, weights: Dict[str, np.ndarray]) -> np.ndarray:
    """windows: (..., P, In) newest first; cs_next: (..., P); weights stacked over P."""
    hidden = np.tanh(np.einsum("...pi,phi->...ph", windows, weights["w1"]) + weights["b1"])
    csi = np.einsum("...ph,ph->...p", hidden, weights["w2"]) + weights["b2"]
    csi = np.clip(csi, *MLP_OUTPUT_RANGE)
    return np.where(cs_next == 0, 0.0, cs_next * csi)


def _stack_weights(models, n_pixels: int) -> Dict[str, np.ndarray]:
    if isinstance(models, ModelBundle):
        if models.height * models.width != n_pixels:
            raise AlignmentError(f"model bundle covers {models.height}x{models.width} pixels, grid has {n_pixels}")
        return models.stacked()
    if isinstance(models, dict):
        return models
    models = list(models)
    if len(models) != n_pixels:
        raise AlignmentError(f"{len(models)} models for {n_pixels} pixels")
    first = next((m for m in models if m is not None), None)
    if first is None:
        raise ValueError("no trained models")
    bundle = ModelBundle(1, n_pixels, first.in_count, first.hidden_count, 0, 0, 0, models)
    return bundle.stacked()


def _csi_history(measured: np.ndarray, clear: np.ndarray) -> np.ndarray:
    return clamp_csi(csi_from_irradiance(measured, clear))


# -- single-map predictors ------------------------------------------------------

def persistence(req: ForecastRequest, daylight: Optional[DaylightFilter] = None) -> ForecastMap:
    return _finish(req, req.last(), "persistence", daylight)


def scaled_persistence(req: ForecastRequest, daylight: Optional[DaylightFilter] = None) -> ForecastMap:
    vals = _scaled(req.last(), req.clear_sky_at(req.t), req.clear_sky_at(req.target_time))
    return _finish(req, vals, "scaled_persistence", daylight)


def clear_sky_predictor(req: ForecastRequest, daylight: Optional[DaylightFilter] = None) -> ForecastMap:
    return _finish(req, req.clear_sky_at(req.target_time), "clear_sky", daylight)


def mlp_predict(req: ForecastRequest, models: Union[ModelBundle, Sequence[Optional[PixelMlp]]],
                daylight: Optional[DaylightFilter] = None) -> ForecastMap:
    """Forecast = I_CS(t+1) * clip(net(CSI_t, ..., CSI_{t-In+1}), 0, 1.2)."""
    spec = req.history.spec
    w = _stack_weights(models, spec.n_pixels)
    n_in = w["w1"].shape[2]
    h, wd = spec.shape
    cs_next = req.clear_sky_at(req.target_time)
    if len(req.history) < n_in:
        return _finish(req, np.full(spec.shape, np.nan), "mlp", daylight)
    step = spec.step_s
    lags = []
    for k in range(n_in):
        ts = req.t - k * step
        meas = req.history.frames[req.history.index_of(ts)].astype(np.float64)
        try:
            cs = req.clear_sky_at(ts)
        except AlignmentError:
            return _finish(req, np.full(spec.shape, np.nan), "mlp", daylight)
        lags.append(_csi_history(meas, cs).reshape(-1))
    windows = np.stack(lags, axis=-1)  # P x In, newest first
    vals = _mlp_kernel(windows, cs_next.reshape(-1), w).reshape(h, wd)
    return _finish(req, vals, "mlp", daylight)


# -- whole-span forecasting -----------------------------------------------------

def _mlp_chunk(task, weights, n_in: int) -> np.ndarray:
    # task = (csi rows k0-n_in .. k1-1, clear-sky rows k0 .. k1-1, k0); target k uses csi[k-1] .. csi[k-n_in]
    csi, clear, k0 = task
    out = np.full(clear.shape, np.nan)
    ks = np.arange(k0, k0 + clear.shape[0])
    ok = ks - n_in >= 0
    if not ok.any():
        return out
    local = ks[ok] - (k0 - n_in)
    windows = np.stack([csi[local - 1 - lag] for lag in range(n_in)], axis=-1)  # n x P x In
    out[ok] = _mlp_kernel(windows, clear[ks[ok] - k0], weights)
    return out


def _pad_rows(a: np.ndarray, lo: int, hi: int) -> np.ndarray:
    """Rows lo..hi-1 of ``a``, NaN-padded where lo < 0."""
    if lo >= 0:
        return a[lo:hi]
    return np.concatenate([np.full((-lo,) + a.shape[1:], np.nan), a[:hi]], axis=0)


def forecast_stack(predictor: str, measured: MapStack, clear_sky: MapStack, start: int = 1,
                   stop: Optional[int] = None, models=None,
                   daylight: Optional[DaylightFilter] = DaylightFilter(),
                   workers: int = 1, chunk: int = 256) -> MapStack:
    """Forecasts for target frames ``start..stop-1`` of ``measured``.

    Frame k of the result is the prediction of ``measured`` frame ``start+k``
    from data up to frame ``start+k-1``. Targets outside the daylight hour
    window are missing.
    """
    pid = canonical_predictor(predictor)
    measured.check_aligned(clear_sky)
    n = len(measured)
    stop = n if stop is None else stop
    if not 1 <= start <= stop <= n:
        raise ValueError(f"bad target range {start}:{stop} for {n} frames")
    meas = measured.frames.reshape(n, -1).astype(np.float64)
    clear = clear_sky.frames.reshape(n, -1).astype(np.float64)
    idx = np.arange(start, stop)
    if pid == "persistence":
        out = meas[idx - 1]
    elif pid == "scaled_persistence":
        out = _scaled(meas[idx - 1], clear[idx - 1], clear[idx])
    elif pid == "clear_sky":
        out = clear[idx].copy()
    else:
        if models is None:
            raise ValueError("the mlp predictor needs trained models")
        weights = _stack_weights(models, measured.spec.n_pixels)
        n_in = weights["w1"].shape[2]
        csi = _csi_history(meas, clear)
        n_chunks = max(1, (stop - start + chunk - 1) // chunk)
        tasks = []
        for r in chunk_ranges(stop - start, n_chunks):
            k0, k1 = start + r.start, start + r.stop
            tasks.append((_pad_rows(csi, k0 - n_in, k1), clear[k0:k1], k0))
        parts = map_ordered(partial(_mlp_chunk, weights=weights, n_in=n_in), tasks, workers)
        out = np.concatenate(parts, axis=0) if parts else np.empty((0, meas.shape[1]))
    out = np.array(out, dtype=np.float64)
    if daylight is not None:
        out[~daylight.hour_mask(measured.timestamps[idx])] = np.nan
    spec = measured.spec.with_time(int(measured.timestamps[start]) if start < n else measured.spec.t0)
    return MapStack(spec, out.reshape((stop - start,) + measured.spec.shape), Kind.IRRADIANCE, validate=False)
