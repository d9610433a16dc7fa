"""Seeded synthetic irradiance stacks: clear-sky field times a cloud-index field.

The cloud index follows a per-pixel AR(1) process around ``mean_index``::

    n_t = mean + phi * (n_{t-1} - mean) + sqrt(1 - phi^2) * sigma * eps_t

where ``eps_t`` is white noise smoothed spatially with a Gaussian kernel of
``spatial_sigma`` pixels (periodic boundaries) and rescaled back to unit
variance, so ``sigma`` is the stationary standard deviation of the field. The
first frame is drawn from the stationary distribution.

``advecting_blobs`` adds Gaussian cloud blobs of ``blob_amplitude`` that move
across the grid at ``blob_drift`` pixels per hour in random fixed directions,
wrapping at the edges. The field is clipped to [-0.2, 1.3] and mapped to the
clear-sky index with the piecewise cloud-index curve, so irradiance stays in
[0.05, 1.2] times clear sky.

Every random draw comes from one ``numpy.random.default_rng(seed)`` stream in
a fixed order. Default parameter values are tuning choices, not measurements.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.ndimage import gaussian_filter

from .clearsky import ClearSkyParams, clear_sky_stack
from .grid import GridSpec, Kind, MapStack
from .heliosat import csi_from_cloud_index

MODES = ("clear", "ar1", "advecting_blobs")
CLOUD_INDEX_RANGE = (-0.2, 1.3)


@dataclass(frozen=True)
class CloudProcess:
    mode: str = "ar1"
    ar1_phi: float = 0.9
    noise_sigma: float = 0.25
    mean_index: float = 0.2
    spatial_sigma: float = 1.5
    blob_count: int = 3
    blob_radius: float = 3.0
    blob_drift: float = 1.0
    blob_amplitude: float = 0.6
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0.0 <= self.ar1_phi < 1.0:
            raise ValueError("ar1_phi must be in [0, 1)")
        if self.noise_sigma < 0 or self.spatial_sigma < 0:
            raise ValueError("noise_sigma and spatial_sigma must be >= 0")
        if self.blob_count < 0 or self.blob_radius <= 0 or self.blob_drift < 0:
            raise ValueError("invalid blob parameters")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")


def _smooth(noise: np.ndarray, sigma: float) -> np.ndarray:
    """Spatially smooth (T, H, W) white noise, keeping unit variance."""
    if sigma == 0:
        return noise
    _, h, w = noise.shape
    impulse = np.zeros((h, w))
    impulse[0, 0] = 1.0
    gain = math.sqrt(float(np.sum(gaussian_filter(impulse, sigma, mode="wrap") ** 2)))
    return gaussian_filter(noise, (0, sigma, sigma), mode="wrap") / gain


def _ar1_field(rng: np.random.Generator, shape: Tuple[int, int, int], proc: CloudProcess) -> np.ndarray:
    eps = _smooth(rng.standard_normal(shape), proc.spatial_sigma)
    phi, s = proc.ar1_phi, proc.noise_sigma
    innov = math.sqrt(1.0 - phi * phi) * s
    out = np.empty(shape)
    out[0] = proc.mean_index + s * eps[0]
    for t in range(1, shape[0]):
        out[t] = proc.mean_index + phi * (out[t - 1] - proc.mean_index) + innov * eps[t]
    return out


def _blobs(rng: np.random.Generator, shape: Tuple[int, int, int], proc: CloudProcess) -> np.ndarray:
    n_t, h, w = shape
    y0 = rng.uniform(0, h, proc.blob_count)
    x0 = rng.uniform(0, w, proc.blob_count)
    heading = rng.uniform(0, 2 * math.pi, proc.blob_count)
    t = np.arange(n_t, dtype=np.float64)[:, None]
    cy = (y0 + proc.blob_drift * np.sin(heading) * t) % h  # (T, count)
    cx = (x0 + proc.blob_drift * np.cos(heading) * t) % w
    rows = np.arange(h, dtype=np.float64)
    cols = np.arange(w, dtype=np.float64)
    out = np.zeros(shape)
    inv = 1.0 / (2.0 * proc.blob_radius ** 2)
    for b in range(proc.blob_count):
        # shortest periodic distance so blobs wrap smoothly
        dy = np.abs(rows[None, :] - cy[:, b:b + 1])
        dy = np.minimum(dy, h - dy)
        dx = np.abs(cols[None, :] - cx[:, b:b + 1])
        dx = np.minimum(dx, w - dx)
        out += proc.blob_amplitude * np.exp(-(dy[:, :, None] ** 2 + dx[:, None, :] ** 2) * inv)
    return out


def cloud_field(spec: GridSpec, n_frames: int, proc: CloudProcess) -> np.ndarray:
    """Clipped cloud-index field, shape (n_frames, height, width)."""
    shape = (n_frames,) + spec.shape
    if proc.mode == "clear" or n_frames == 0:
        return np.zeros(shape)
    rng = np.random.default_rng(int(proc.seed))
    n = _ar1_field(rng, shape, proc)
    if proc.mode == "advecting_blobs":
        n += _blobs(rng, shape, proc)
    return np.clip(n, *CLOUD_INDEX_RANGE)


def generate(spec: GridSpec, n_frames: int, cs_params: ClearSkyParams = ClearSkyParams(),
             proc: CloudProcess = CloudProcess()) -> Tuple[MapStack, MapStack]:
    """Return (irradiance, cloud index) stacks of ``n_frames`` frames."""
    if n_frames < 0:
        raise ValueError("n_frames must be >= 0")
    clear = clear_sky_stack(spec, cs_params, n_frames)
    n = cloud_field(spec, n_frames, proc)
    truth = csi_from_cloud_index(n) * clear.frames.astype(np.float64)
    return (MapStack(spec, truth.astype(np.float32), Kind.IRRADIANCE),
            MapStack(spec, n.astype(np.float32), Kind.CLOUD_INDEX, validate=False))


def year_frames(step_s: int = 3600, days: int = 365) -> int:
    return days * 86400 // step_s
