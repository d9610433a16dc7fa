"""Heliosat-2 index relations: albedo -> cloud index -> clear-sky index -> irradiance."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# clear-sky irradiation at or below this (Wh/m2) makes the CSI undefined
CSI_FLOOR_WH = 10.0
CSI_CLAMP = (0.0, 1.5)


class DegenerateAlbedoError(ValueError):
    pass


@dataclass(frozen=True)
class AlbedoTriple:
    rho: float
    rho_cloud: float
    rho_cs: float

    def __post_init__(self):
        for name in ("rho", "rho_cloud", "rho_cs"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.5:
                raise ValueError(f"{name}={v} outside [0, 1.5]")
        if self.rho_cloud == self.rho_cs:
            raise DegenerateAlbedoError("rho_cloud equals rho_cs")


def _out(x):
    return x[()] if isinstance(x, np.ndarray) and x.ndim == 0 else x


def cloud_index(rho, rho_cloud=None, rho_cs=None):
    """n = (rho - rho_cs) / (rho_cloud - rho_cs); accepts an AlbedoTriple or arrays."""
    if isinstance(rho, AlbedoTriple):
        rho, rho_cloud, rho_cs = rho.rho, rho.rho_cloud, rho.rho_cs
    rho, rho_cloud, rho_cs = (np.asarray(a, dtype=np.float64) for a in (rho, rho_cloud, rho_cs))
    denom = rho_cloud - rho_cs
    if np.any(denom == 0):
        raise DegenerateAlbedoError("rho_cloud equals rho_cs: cloud index undefined")
    return _out((rho - rho_cs) / denom)


def csi_from_cloud_index(n):
    """Piecewise cloud-index to clear-sky-index map.

    1.2 below -0.2, ``1 - n`` on the closed interval [-0.2, 0.8], the rounded
    quadratic on (0.8, 1.1] and 0.05 above 1.1.
    """
    n = np.asarray(n, dtype=np.float64)
    quad = 2.0667 - 3.6667 * n + 1.6667 * n * n
    out = np.where(n < -0.2, 1.2,
                   np.where(n <= 0.8, 1.0 - n,
                            np.where(n <= 1.1, quad, 0.05)))
    out = np.where(np.isnan(n), np.nan, out)
    return _out(out)


def irradiance_from_csi(csi, i_cs):
    i_cs = np.asarray(i_cs, dtype=np.float64)
    if np.any(i_cs < 0):
        raise ValueError("clear-sky irradiation must be >= 0")
    out = np.asarray(csi, dtype=np.float64) * i_cs
    # zero clear-sky irradiation gives zero regardless of the index
    out = np.where(i_cs == 0, 0.0, out)
    return _out(out)


def csi_from_irradiance(i, i_cs, floor: float = CSI_FLOOR_WH):
    """I / I_CS where I_CS > floor, NaN (missing) elsewhere."""
    i = np.asarray(i, dtype=np.float64)
    i_cs = np.asarray(i_cs, dtype=np.float64)
    ok = i_cs > floor
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(ok, i / np.where(ok, i_cs, 1.0), np.nan)
    return _out(out)


def clamp_csi(csi, lo: float = CSI_CLAMP[0], hi: float = CSI_CLAMP[1]):
    """Clamp data-derived CSI before training; NaN passes through."""
    return _out(np.clip(np.asarray(csi, dtype=np.float64), lo, hi))
