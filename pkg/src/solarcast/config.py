"""Run configuration: a ``key = value`` text file plus command-line overrides.

Blank lines and ``#`` comments are ignored. Values are Python literals where
they parse as one (``3``, ``0.9``, ``True``, ``(3.0, 3.2)``) and plain strings
otherwise. Unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import ast
import dataclasses
import datetime as dt
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Dict, Iterable, Optional, Tuple, Union

from .clearsky import ClearSkyParams
from .grid import DaylightFilter, GridSpec
from .metrics import GammaConfig
from .mlp import TrainConfig
from .predictors import PREDICTORS, canonical_predictor
from .synth import CloudProcess


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    out: str = "run"
    measured: Optional[str] = None
    clear_sky: Optional[str] = None
    # grid
    width: int = 8
    height: int = 8
    pixel_size_m: float = 2500.0
    origin_lat: float = 42.0
    origin_lon: float = 9.0
    start: Union[int, str] = "2011-01-01"
    step_s: int = 3600
    days: int = 90
    linke_turbidity: Union[float, Tuple[float, ...]] = 3.0
    # synthetic clouds
    mode: str = "ar1"
    ar1_phi: float = 0.9
    noise_sigma: float = 0.25
    mean_index: float = 0.2
    spatial_sigma: float = 1.5
    blob_count: int = 3
    blob_radius: float = 3.0
    blob_drift: float = 1.0
    blob_amplitude: float = 0.6
    # pipeline
    seed: int = 0
    workers: int = 1
    predictors: Tuple[str, ...] = PREDICTORS
    test_fraction: float = 0.25
    tau_max: int = 24
    mi_pixel: Optional[Tuple[int, int]] = None
    # training
    in_count: Union[int, str] = 7
    hidden_count: int = 7
    max_fail: int = 3
    max_epochs: int = 1000
    lm_lambda0: float = 1e-3
    val_fraction: float = 0.2
    # evaluation
    tol_r: float = 2500.0
    tol_i: float = 0.10
    tol_i_mode: str = "fraction"
    tol_i_floor: float = 10.0
    search_radius: Optional[int] = None
    intensity_only: bool = False
    hour_min: float = 8.0
    hour_max: float = 18.0
    irradiance_floor: float = 10.0
    pgm_frame: Optional[int] = None

    def __post_init__(self):
        if isinstance(self.predictors, str):
            self.predictors = tuple(p.strip() for p in self.predictors.split(",") if p.strip())
        self.predictors = tuple(canonical_predictor(p) for p in self.predictors)
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError("test_fraction must be in (0, 1)")
        if self.days < 1:
            raise ConfigError("days must be >= 1")
        if isinstance(self.in_count, str) and self.in_count != "auto":
            raise ConfigError("in_count must be an integer or 'auto'")
        if isinstance(self.linke_turbidity, list):
            self.linke_turbidity = tuple(self.linke_turbidity)
        if isinstance(self.mi_pixel, list):
            self.mi_pixel = tuple(self.mi_pixel)

    @property
    def out_dir(self) -> Path:
        return Path(self.out)

    @property
    def t0(self) -> int:
        if isinstance(self.start, int):
            return self.start
        d = dt.datetime.fromisoformat(str(self.start))
        if d.tzinfo is None:
            d = d.replace(tzinfo=dt.timezone.utc)
        return int(d.timestamp())

    @property
    def n_frames(self) -> int:
        return self.days * 86400 // self.step_s

    def grid(self) -> GridSpec:
        return GridSpec(self.width, self.height, self.pixel_size_m, self.origin_lat, self.origin_lon,
                        self.t0, self.step_s)

    def clear_sky_params(self) -> ClearSkyParams:
        return ClearSkyParams(self.linke_turbidity)

    def cloud_process(self) -> CloudProcess:
        return CloudProcess(self.mode, self.ar1_phi, self.noise_sigma, self.mean_index, self.spatial_sigma,
                            self.blob_count, self.blob_radius, self.blob_drift, self.blob_amplitude,
                            self.seed)

    def train_config(self, in_count: int) -> TrainConfig:
        return TrainConfig(1.0 - self.val_fraction, self.val_fraction, 0.0, self.max_fail, self.max_epochs,
                           self.lm_lambda0, in_count=in_count, hidden_count=self.hidden_count)

    def gamma_config(self) -> GammaConfig:
        return GammaConfig(self.tol_r, self.tol_i, self.tol_i_mode, self.tol_i_floor, self.search_radius,
                           self.intensity_only)

    def daylight(self) -> DaylightFilter:
        return DaylightFilter(self.hour_min, self.hour_max, self.irradiance_floor)

    def as_text(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)!r}\n" for f in fields(self))


def _literal(text: str):
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def parse_pairs(lines: Iterable[str], origin: str = "<config>") -> Dict[str, object]:
    known = {f.name for f in fields(RunConfig)}
    out: Dict[str, object] = {}
    for no, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{no}: expected key = value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"{origin}:{no}: unknown key {key!r}")
        out[key] = _literal(value)
    return out


def load_config(path: Optional[str] = None, overrides: Optional[Dict[str, object]] = None) -> RunConfig:
    values: Dict[str, object] = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {path}")
        values.update(parse_pairs(p.read_text().splitlines(), str(p)))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        return RunConfig(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def replace(cfg: RunConfig, **changes) -> RunConfig:
    return dataclasses.replace(cfg, **changes)
