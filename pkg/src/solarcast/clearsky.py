"""Clear-sky global horizontal irradiation (ESRA model) and solar geometry.

Solar position
    Declination and equation of time from Spencer's Fourier series (1971),
    with a fractional day angle. Earth-sun distance correction as used by
    ESRA: ``1 + 0.03344 cos(2*pi*doy/365.25 - 0.048869)``.

Beam (horizontal)
    ``B = I0 * eps * exp(-0.8662 * TL * m * dR(m)) * sin(h)`` with
    ``I0 = 1367 W/m2``. The relative optical air mass ``m`` follows Kasten and
    Young (1989) evaluated at the refraction-corrected elevation and scaled by
    the station pressure ratio ``p/p0 = exp(-z / 8434.5)``. The Rayleigh
    optical thickness is ``1/dR = 6.625928 + 1.92969 m - 0.170073 m^2
    + 0.011517 m^3 - 0.000285 m^4`` for ``m <= 20`` and ``10.4 + 0.718 m``
    above; for elevated sites ``dR`` is divided by a pressure correction
    interpolated linearly between ``p/p0 = 1`` (1.0), ``0.75``
    (``1.248174 - 0.011997 m + 0.00037 m^2``) and ``0.5``
    (``1.68219 - 0.03059 m + 0.00089 m^2``).

Diffuse (horizontal)
    ``D = I0 * eps * Trd(TL) * Fd(h)`` with
    ``Trd = -1.5843e-2 + 3.0543e-2 TL + 3.797e-4 TL^2`` and
    ``Fd = A0 + A1 sin h + A2 sin^2 h`` where
    ``A0 = 0.26463 - 0.061581 TL + 0.0031408 TL^2`` (raised to
    ``2e-3 / Trd`` when ``A0 * Trd < 2e-3``),
    ``A1 = 2.04020 + 0.018945 TL - 0.011161 TL^2``,
    ``A2 = -1.3025 + 0.039231 TL + 0.0085079 TL^2``.

Hourly irradiation is the instantaneous irradiance at the interval midpoint
times the interval length. A frame timestamp marks the start of its interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import numpy as np

from .grid import GridSpec, Kind, MapStack

SOLAR_CONSTANT = 1367.0
SCALE_HEIGHT_M = 8434.5
_DAY = 86400


@dataclass(frozen=True)
class ClearSkyParams:
    linke_turbidity: Union[float, Tuple[float, ...]] = 3.0

    def __post_init__(self):
        tl = self.linke_turbidity
        if np.ndim(tl) == 0:
            vals = (float(tl),)
            object.__setattr__(self, "linke_turbidity", float(tl))
        else:
            vals = tuple(float(v) for v in tl)
            if len(vals) != 12:
                raise ValueError(f"monthly Linke turbidity needs 12 values, got {len(vals)}")
            object.__setattr__(self, "linke_turbidity", vals)
        if min(vals) < 1:
            raise ValueError("Linke turbidity must be >= 1")

    def turbidity_at(self, timestamps) -> np.ndarray:
        ts = np.asarray(timestamps, dtype=np.int64)
        if isinstance(self.linke_turbidity, float):
            return np.full(ts.shape, self.linke_turbidity)
        months = ts.astype("datetime64[s]").astype("datetime64[M]").astype(np.int64) % 12
        return np.asarray(self.linke_turbidity)[months]


@dataclass(frozen=True)
class SolarPosition:
    declination: np.ndarray
    hour_angle: np.ndarray
    solar_elevation: np.ndarray
    earth_sun_correction: np.ndarray


def _day_of_year(ts: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    days = np.floor_divide(ts, _DAY)
    year_start = days.astype("datetime64[D]").astype("datetime64[Y]").astype("datetime64[D]").astype(np.int64)
    doy = days - year_start + 1
    utc_hours = (ts - days * _DAY) / 3600.0
    return doy, utc_hours


def _spencer(doy, utc_hours):
    g = 2.0 * np.pi * (doy - 1 + (utc_hours - 12.0) / 24.0) / 365.0
    decl = (0.006918 - 0.399912 * np.cos(g) + 0.070257 * np.sin(g)
            - 0.006758 * np.cos(2 * g) + 0.000907 * np.sin(2 * g)
            - 0.002697 * np.cos(3 * g) + 0.00148 * np.sin(3 * g))
    eot_min = 229.18 * (0.000075 + 0.001868 * np.cos(g) - 0.032077 * np.sin(g)
                        - 0.014615 * np.cos(2 * g) - 0.040849 * np.sin(2 * g))
    return decl, eot_min


def solar_position(timestamp, lat, lon) -> SolarPosition:
    """Sun position for UTC Unix timestamps at (lat, lon) in degrees; broadcasts."""
    ts = np.asarray(timestamp, dtype=np.float64)
    doy, utc_hours = _day_of_year(np.floor(ts).astype(np.int64))
    utc_hours = utc_hours + (ts - np.floor(ts)) / 3600.0
    decl, eot = _spencer(doy, utc_hours)
    tst = utc_hours + np.asarray(lon, dtype=np.float64) / 15.0 + eot / 60.0
    omega = np.radians(15.0 * (tst - 12.0))
    phi = np.radians(np.asarray(lat, dtype=np.float64))
    sin_el = np.sin(phi) * np.sin(decl) + np.cos(phi) * np.cos(decl) * np.cos(omega)
    el = np.arcsin(np.clip(sin_el, -1.0, 1.0))
    eps = 1.0 + 0.03344 * np.cos(2.0 * np.pi * doy / 365.25 - 0.048869)
    return SolarPosition(decl, omega, el, eps)


def solar_noon(day_timestamp: int, lon: float) -> float:
    """UTC timestamp of local solar noon on the day containing ``day_timestamp``."""
    day0 = (int(day_timestamp) // _DAY) * _DAY
    t = day0 + (12.0 - lon / 15.0) * 3600.0
    for _ in range(3):
        doy, hours = _day_of_year(np.array([int(t)]))
        _, eot = _spencer(doy, hours + (t - int(t)) / 3600.0)
        t = day0 + (12.0 - lon / 15.0 - float(eot[0]) / 60.0) * 3600.0
    return t


def _air_mass(elev, pressure_ratio):
    h = np.maximum(elev, 0.0)
    refr = 0.061359 * (0.1594 + 1.1230 * h + 0.065656 * h * h) / (1.0 + 28.9344 * h + 277.3971 * h * h)
    h_true = h + refr
    return pressure_ratio / (np.sin(h_true) + 0.50572 * (np.degrees(h_true) + 6.07995) ** -1.6364)


def _rayleigh_thickness(m, pressure_ratio):
    inv = np.where(m <= 20.0,
                   6.625928 + 1.92969 * m - 0.170073 * m ** 2 + 0.011517 * m ** 3 - 0.000285 * m ** 4,
                   10.4 + 0.718 * m)
    c075 = 1.248174 - 0.011997 * m + 0.00037 * m ** 2
    c050 = 1.68219 - 0.03059 * m + 0.00089 * m ** 2
    r = np.clip(pressure_ratio, 0.5, 1.0)
    corr = np.where(r >= 0.75, c075 + (1.0 - c075) * (r - 0.75) / 0.25,
                    c050 + (c075 - c050) * (r - 0.5) / 0.25)
    return 1.0 / (inv * corr)


def _tl_array(params_or_tl, shape):
    if isinstance(params_or_tl, ClearSkyParams):
        tl = params_or_tl.linke_turbidity
        if not isinstance(tl, float):
            raise ValueError("monthly turbidity needs timestamps; use ClearSkyParams.turbidity_at")
        return np.full(shape, tl)
    return np.broadcast_to(np.asarray(params_or_tl, dtype=np.float64), shape)


def clear_sky_components(pos: SolarPosition, params, elevation_m=0.0, hours: float = 1.0):
    """(beam, diffuse) horizontal irradiation in Wh/m2 over ``hours`` at the given geometry.

    ``params`` is a ClearSkyParams or a Linke turbidity array broadcastable to
    the geometry.
    """
    el = np.asarray(pos.solar_elevation, dtype=np.float64)
    elev_m = np.asarray(elevation_m, dtype=np.float64)
    shape = np.broadcast_shapes(el.shape, elev_m.shape, np.shape(pos.earth_sun_correction))
    tl = _tl_array(params, shape)
    up = el > 0
    sin_h = np.sin(el)
    e0 = SOLAR_CONSTANT * np.asarray(pos.earth_sun_correction)
    p_ratio = np.exp(-elev_m / SCALE_HEIGHT_M)
    m = _air_mass(el, p_ratio)
    d_r = _rayleigh_thickness(m, p_ratio)
    beam = e0 * np.exp(-0.8662 * tl * m * d_r) * sin_h
    trd = -1.5843e-2 + 3.0543e-2 * tl + 3.797e-4 * tl ** 2
    a0 = 0.26463 - 0.061581 * tl + 0.0031408 * tl ** 2
    a0 = np.where(a0 * trd < 2e-3, 2e-3 / trd, a0)
    a1 = 2.04020 + 0.018945 * tl - 0.011161 * tl ** 2
    a2 = -1.3025 + 0.039231 * tl + 0.0085079 * tl ** 2
    diffuse = e0 * trd * (a0 + a1 * sin_h + a2 * sin_h ** 2)
    beam = np.where(up, np.maximum(beam, 0.0), 0.0) * hours
    diffuse = np.where(up, np.maximum(diffuse, 0.0), 0.0) * hours
    return beam, diffuse


def clear_sky_ghi(pos: SolarPosition, params, elevation_m=0.0, hours: float = 1.0):
    beam, diffuse = clear_sky_components(pos, params, elevation_m, hours)
    out = beam + diffuse
    return out[()] if out.ndim == 0 else out


def clear_sky_stack(spec: GridSpec, params: ClearSkyParams, n_frames: int, chunk: int = 512) -> MapStack:
    """Clear-sky irradiation for every pixel and frame of the grid."""
    lat, lon = spec.pixel_coordinates()
    elev = spec.elevation()
    ts = spec.timestamps(n_frames)
    mid = ts + spec.step_s / 2.0
    hours = spec.step_s / 3600.0
    out = np.empty((n_frames,) + spec.shape, dtype=np.float32)
    for a in range(0, n_frames, chunk):
        t = mid[a:a + chunk][:, None, None]
        pos = solar_position(t, lat[None], lon[None])
        tl = params.turbidity_at(ts[a:a + chunk])[:, None, None]
        out[a:a + chunk] = clear_sky_ghi(pos, tl, elev[None], hours)
    return MapStack(spec, out, Kind.IRRADIANCE)


def clear_sky_series(timestamps: Sequence[int], lat: float, lon: float, params: ClearSkyParams,
                     elevation_m: float = 0.0, step_s: int = 3600) -> np.ndarray:
    """Pointwise hourly irradiation at one site, same convention as clear_sky_stack."""
    ts = np.asarray(timestamps, dtype=np.int64)
    pos = solar_position(ts + step_s / 2.0, lat, lon)
    return np.asarray(clear_sky_ghi(pos, params.turbidity_at(ts), elevation_m, step_s / 3600.0))


def noon_elevation_deg(lat: float, declination_rad: float) -> float:
    return 90.0 - abs(lat - math.degrees(declination_rad))
