"""Gridded hourly time series: raster geometry, map stacks, per-pixel series.

Missing samples are held as NaN in memory. On disk they are encoded with the
SSI1 sentinel (see :mod:`solarcast.ssi1`).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

MISSING = float("nan")
EARTH_RADIUS_M = 6371008.8


class Kind(enum.IntEnum):
    IRRADIANCE = 0
    CLEAR_SKY_INDEX = 1
    CLOUD_INDEX = 2
    # signed irradiance differences (forecast errors); in-memory and file extension
    IRRADIANCE_ERROR = 3


class AlignmentError(ValueError):
    """Two rasters or stacks do not share grid geometry or time axis."""


def _as_f32(x: float) -> float:
    return float(np.float32(x))


@dataclass(frozen=True, eq=False)
class GridSpec:
    """Raster geometry and timestamp axis.

    Row ``i`` runs north to south and column ``j`` west to east; ``origin_lat``
    and ``origin_lon`` locate the centre of pixel (0, 0). Pixel centres are laid
    out on an equirectangular lattice so each row shares a latitude and each
    column a longitude.
    """

    width: int
    height: int
    pixel_size_m: float = 2500.0
    origin_lat: float = 42.0
    origin_lon: float = 9.0
    t0: int = 0
    step_s: int = 3600
    elevation_m: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if int(self.width) < 1 or int(self.height) < 1:
            raise ValueError(f"grid dimensions must be >= 1, got {self.width}x{self.height}")
        if not self.pixel_size_m > 0:
            raise ValueError("pixel_size_m must be > 0")
        if int(self.step_s) <= 0:
            raise ValueError("step_s must be > 0")
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))
        object.__setattr__(self, "t0", int(self.t0))
        object.__setattr__(self, "step_s", int(self.step_s))
        # the file header stores pixel size as f32; keep the in-memory value identical
        object.__setattr__(self, "pixel_size_m", _as_f32(self.pixel_size_m))
        object.__setattr__(self, "origin_lat", float(self.origin_lat))
        object.__setattr__(self, "origin_lon", float(self.origin_lon))
        if self.elevation_m is not None:
            elev = np.array(self.elevation_m, dtype=np.float64)
            if elev.ndim == 0:
                elev = np.full(self.shape, float(elev))
            if elev.shape != self.shape:
                raise ValueError(f"elevation raster shape {elev.shape} != grid shape {self.shape}")
            elev.setflags(write=False)
            object.__setattr__(self, "elevation_m", elev)

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.height, self.width)

    @property
    def n_pixels(self) -> int:
        return self.width * self.height

    def same_geometry(self, other: "GridSpec") -> bool:
        return (
            self.width == other.width
            and self.height == other.height
            and self.pixel_size_m == other.pixel_size_m
            and self.origin_lat == other.origin_lat
            and self.origin_lon == other.origin_lon
        )

    def __eq__(self, other):
        if not isinstance(other, GridSpec):
            return NotImplemented
        if not (self.same_geometry(other) and self.t0 == other.t0 and self.step_s == other.step_s):
            return False
        a, b = self.elevation(), other.elevation()
        return bool(np.array_equal(a, b))

    def __hash__(self):
        return hash((self.width, self.height, self.pixel_size_m, self.origin_lat,
                     self.origin_lon, self.t0, self.step_s))

    def with_time(self, t0: int, step_s: Optional[int] = None) -> "GridSpec":
        return GridSpec(self.width, self.height, self.pixel_size_m, self.origin_lat,
                        self.origin_lon, t0, self.step_s if step_s is None else step_s,
                        self.elevation_m)

    def timestamps(self, n_frames: int) -> np.ndarray:
        return self.t0 + self.step_s * np.arange(n_frames, dtype=np.int64)

    def elevation(self) -> np.ndarray:
        if self.elevation_m is None:
            return np.zeros(self.shape)
        return self.elevation_m

    def latitudes(self) -> np.ndarray:
        """Latitude (degrees) of each row's pixel centres."""
        dlat = math.degrees(self.pixel_size_m / EARTH_RADIUS_M)
        return self.origin_lat - dlat * np.arange(self.height)

    def longitudes(self) -> np.ndarray:
        """Longitude (degrees) of each column's pixel centres."""
        dlat = math.degrees(self.pixel_size_m / EARTH_RADIUS_M)
        dlon = dlat / math.cos(math.radians(self.origin_lat))
        return self.origin_lon + dlon * np.arange(self.width)

    def pixel_coordinates(self) -> Tuple[np.ndarray, np.ndarray]:
        """(lat, lon) rasters of pixel centres in degrees."""
        lon, lat = np.meshgrid(self.longitudes(), self.latitudes())
        return lat, lon


class MapStack:
    """Time-ordered stack of rasters, shape ``(frames, height, width)``, float32.

    Instances are read-only: the frame array is flagged non-writeable.
    """

    __slots__ = ("spec", "frames", "kind")

    def __init__(self, spec: GridSpec, frames, kind: Kind = Kind.IRRADIANCE, validate: bool = True):
        arr = np.array(frames, dtype=np.float32)
        if arr.ndim == 2:
            arr = arr[None]
        if arr.ndim != 3 or arr.shape[1:] != spec.shape:
            raise ValueError(f"frames shape {arr.shape} does not match grid {spec.shape}")
        kind = Kind(kind)
        if validate and kind == Kind.IRRADIANCE:
            bad = arr < 0
            if bad.any():
                raise ValueError(f"{int(bad.sum())} negative irradiance values (use NaN for missing)")
        arr.setflags(write=False)
        object.__setattr__(self, "spec", spec)
        object.__setattr__(self, "frames", arr)
        object.__setattr__(self, "kind", kind)

    def __setattr__(self, name, value):
        raise AttributeError("MapStack is immutable")

    def __len__(self):
        return self.frames.shape[0]

    def __eq__(self, other):
        if not isinstance(other, MapStack):
            return NotImplemented
        return (
            self.spec == other.spec
            and self.kind == other.kind
            and self.frames.shape == other.frames.shape
            and bool(np.array_equal(self.frames, other.frames, equal_nan=True))
        )

    def __repr__(self):
        return (f"MapStack(kind={self.kind.name}, frames={len(self)}, "
                f"grid={self.spec.height}x{self.spec.width}, t0={self.spec.t0})")

    @property
    def timestamps(self) -> np.ndarray:
        return self.spec.timestamps(len(self))

    def index_of(self, timestamp: int) -> int:
        off = int(timestamp) - self.spec.t0
        if off % self.spec.step_s:
            raise AlignmentError(f"timestamp {timestamp} is not on the stack's time axis")
        k = off // self.spec.step_s
        if not 0 <= k < len(self):
            raise AlignmentError(f"timestamp {timestamp} outside stack span")
        return k

    def slice(self, start: int, stop: Optional[int] = None) -> "MapStack":
        """Frames ``start:stop`` with the time axis shifted accordingly."""
        stop = len(self) if stop is None else stop
        if not 0 <= start <= stop <= len(self):
            raise IndexError(f"bad frame range {start}:{stop} for {len(self)} frames")
        spec = self.spec.with_time(self.spec.t0 + start * self.spec.step_s)
        return MapStack(spec, self.frames[start:stop], self.kind, validate=False)

    def check_aligned(self, other: "MapStack") -> None:
        if not self.spec.same_geometry(other.spec):
            raise AlignmentError(
                f"grid mismatch: {self.spec.height}x{self.spec.width} "
                f"vs {other.spec.height}x{other.spec.width} (or differing anchor/pixel size)")
        if (self.spec.t0, self.spec.step_s, len(self)) != (other.spec.t0, other.spec.step_s, len(other)):
            raise AlignmentError(
                f"time axis mismatch: t0={self.spec.t0}/step={self.spec.step_s}/n={len(self)} "
                f"vs t0={other.spec.t0}/step={other.spec.step_s}/n={len(other)}")


@dataclass(frozen=True, eq=False)
class PixelSeries:
    pixel: Tuple[int, int]
    values: np.ndarray
    timestamps: np.ndarray
    kind: Kind = Kind.IRRADIANCE

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        ts = np.asarray(self.timestamps, dtype=np.int64)
        if v.shape != ts.shape or v.ndim != 1:
            raise ValueError("values and timestamps must be 1-D and of equal length")
        if ts.size > 1 and np.any(np.diff(ts) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        v.setflags(write=False)
        ts.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "kind", Kind(self.kind))

    def __len__(self):
        return self.values.size

    def __eq__(self, other):
        if not isinstance(other, PixelSeries):
            return NotImplemented
        return (tuple(self.pixel) == tuple(other.pixel) and self.kind == other.kind
                and np.array_equal(self.timestamps, other.timestamps)
                and np.array_equal(self.values, other.values, equal_nan=True))

    @property
    def step_s(self) -> Optional[int]:
        if self.timestamps.size < 2:
            return None
        return int(self.timestamps[1] - self.timestamps[0])


@dataclass(frozen=True)
class DaylightFilter:
    hour_min: float = 8.0
    hour_max: float = 18.0
    irradiance_floor: float = 10.0

    def __post_init__(self):
        if not 0 <= self.hour_min < self.hour_max <= 24:
            raise ValueError(f"need 0 <= hour_min < hour_max <= 24, got [{self.hour_min}, {self.hour_max})")
        if self.irradiance_floor < 0:
            raise ValueError("irradiance_floor must be >= 0")

    def hour_mask(self, timestamps) -> np.ndarray:
        hours = (np.asarray(timestamps, dtype=np.int64) % 86400) / 3600.0
        return (hours >= self.hour_min) & (hours < self.hour_max)

    def value_mask(self, values) -> np.ndarray:
        # NaN compares False, so missing samples are never retained
        return np.asarray(values) >= self.irradiance_floor


def extract_series(stack: MapStack, pixel: Tuple[int, int]) -> PixelSeries:
    i, j = pixel
    h, w = stack.spec.shape
    if not (0 <= i < h and 0 <= j < w):
        raise IndexError(f"pixel {(i, j)} outside {h}x{w} grid")
    return PixelSeries((int(i), int(j)), stack.frames[:, i, j].astype(np.float64),
                       stack.timestamps, stack.kind)


def apply_filter(series: PixelSeries, filt: DaylightFilter) -> PixelSeries:
    """Keep samples inside the UTC hour window whose value reaches the floor."""
    if series.kind != Kind.IRRADIANCE:
        raise ValueError(f"daylight filtering applies to irradiance series, got {series.kind.name}")
    keep = filt.hour_mask(series.timestamps) & filt.value_mask(series.values)
    return PixelSeries(series.pixel, series.values[keep], series.timestamps[keep], series.kind)


def daylight_mask(stack: MapStack, filt: DaylightFilter) -> np.ndarray:
    """Boolean ``(frames, h, w)`` mask of samples retained by ``filt``."""
    hours = filt.hour_mask(stack.timestamps)[:, None, None]
    return hours & filt.value_mask(stack.frames)
