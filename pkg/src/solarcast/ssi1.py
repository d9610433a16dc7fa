"""SSI1 binary raster-stack format.

Layout (all little-endian)::

    magic      4s   b"SSI1"
    version    u16  1
    kind       u8   0 irradiance, 1 clear-sky index, 2 cloud index (3: signed error)
    width      u32
    height     u32
    frames     u32
    t0         i64  Unix seconds, UTC
    step_s     u32
    pixel_size f32  metres
    origin_lat f64
    origin_lon f64
    payload    frames x height x width f32, row-major, time order

Missing samples are written as ``MISSING_SENTINEL`` and read back as NaN.
"""

from __future__ import annotations

import csv
import os
import struct
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np

from .grid import GridSpec, Kind, MapStack

MAGIC = b"SSI1"
VERSION = 1
HEADER = struct.Struct("<4sHBIIIqIfdd")
MISSING_SENTINEL = np.float32(-1.0e30)
# anything at or below this on disk is treated as the sentinel
_SENTINEL_CUTOFF = np.float32(-1.0e29)

PathLike = Union[str, os.PathLike]


class FormatError(ValueError):
    pass


class TruncationError(FormatError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


def encode(stack: MapStack) -> bytes:
    spec = stack.spec
    n, h, w = stack.frames.shape
    header = HEADER.pack(MAGIC, VERSION, int(stack.kind), w, h, n, spec.t0, spec.step_s,
                         spec.pixel_size_m, spec.origin_lat, spec.origin_lon)
    payload = np.where(np.isnan(stack.frames), MISSING_SENTINEL, stack.frames).astype("<f4")
    return header + payload.tobytes(order="C")


def decode(data: bytes, elevation_m: Optional[np.ndarray] = None) -> MapStack:
    if len(data) < HEADER.size:
        if data[:4] != MAGIC[: len(data[:4])]:
            raise FormatError(f"bad magic {data[:4]!r}")
        raise FormatError(f"header needs {HEADER.size} bytes, file has {len(data)}")
    magic, version, kind, w, h, n, t0, step, px, lat, lon = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"unsupported SSI1 version {version}")
    try:
        kind = Kind(kind)
    except ValueError:
        raise FormatError(f"unknown kind tag {kind}") from None
    if w < 1 or h < 1 or step < 1 or not px > 0:
        raise FormatError(f"invalid header geometry w={w} h={h} step={step} px={px}")
    expected = HEADER.size + 4 * n * h * w
    if len(data) < expected:
        raise TruncationError(f"payload truncated: expected {expected} bytes, got {len(data)}", len(data))
    if len(data) > expected:
        raise FormatError(f"{len(data) - expected} trailing bytes after payload")
    frames = np.frombuffer(data, dtype="<f4", count=n * h * w, offset=HEADER.size)
    frames = frames.reshape(n, h, w).astype(np.float32)
    frames[frames <= _SENTINEL_CUTOFF] = np.nan
    spec = GridSpec(w, h, float(px), lat, lon, t0, step, elevation_m)
    return MapStack(spec, frames, kind, validate=False)


def write_stack(stack: MapStack, path: PathLike) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(encode(stack))
    os.replace(tmp, path)


def read_stack(path: PathLike, elevation_m: Optional[np.ndarray] = None) -> MapStack:
    """Read an SSI1 file. Elevation is not part of the format and may be supplied."""
    with open(path, "rb") as fh:
        head = fh.read(4)
        if head != MAGIC:
            raise FormatError(f"{path}: bad magic {head!r}, expected {MAGIC!r}")
        data = head + fh.read()
    return decode(data, elevation_m)


def write_meta(path: PathLike, meta: Dict[str, object]) -> Path:
    """Write ``key=value`` sidecar next to ``path`` (``<path>.meta``), keys sorted."""
    side = Path(str(path) + ".meta")
    lines = [f"{k}={meta[k]}" for k in sorted(meta)]
    side.write_text("\n".join(lines) + "\n")
    return side


def read_meta(path: PathLike) -> Dict[str, str]:
    side = Path(str(path) + ".meta")
    out = {}
    for line in side.read_text().splitlines():
        if line.strip() and "=" in line:
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


def read_csv_stack(path: PathLike, kind: Kind = Kind.IRRADIANCE, width: Optional[int] = None,
                   height: Optional[int] = None, step_s: Optional[int] = None, **grid_kw) -> MapStack:
    """Build a stack from a ``t,i,j,value`` CSV (t in Unix seconds).

    Cells absent from the file are missing. Grid dimensions default to the
    largest indices present; the step defaults to the smallest gap between
    distinct timestamps.
    """
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["t", "i", "j", "value"]:
            raise FormatError(f"{path}: CSV header must be t,i,j,value")
        for rec in reader:
            rows.append((int(rec["t"]), int(rec["i"]), int(rec["j"]), float(rec["value"])))
    if not rows:
        raise FormatError(f"{path}: no samples")
    t = np.array([r[0] for r in rows], dtype=np.int64)
    i = np.array([r[1] for r in rows])
    j = np.array([r[2] for r in rows])
    v = np.array([r[3] for r in rows])
    uniq = np.unique(t)
    t0 = int(uniq[0])
    if step_s is None:
        step_s = int(np.diff(uniq).min()) if uniq.size > 1 else 3600
    offs = t - t0
    if np.any(offs % step_s):
        raise FormatError(f"{path}: timestamps not on a {step_s}s axis")
    k = offs // step_s
    h = int(i.max()) + 1 if height is None else height
    w = int(j.max()) + 1 if width is None else width
    frames = np.full((int(k.max()) + 1, h, w), np.nan, dtype=np.float32)
    frames[k, i, j] = v
    spec = GridSpec(w, h, t0=t0, step_s=step_s, **grid_kw)
    return MapStack(spec, frames, kind)
