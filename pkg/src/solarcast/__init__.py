"""Next-hour forecasting of gridded solar irradiation maps."""

from .clearsky import ClearSkyParams, clear_sky_stack
from .grid import AlignmentError, DaylightFilter, GridSpec, Kind, MapStack, PixelSeries
from .metrics import GammaConfig, gamma_map, gamma_stack, nrmse
from .predictors import ForecastRequest, forecast_stack
from .synth import CloudProcess, generate

__version__ = "0.1.0"

__all__ = [
    "AlignmentError", "ClearSkyParams", "CloudProcess", "DaylightFilter", "ForecastRequest", "GammaConfig",
    "GridSpec", "Kind", "MapStack", "PixelSeries", "clear_sky_stack", "forecast_stack", "gamma_map",
    "gamma_stack", "generate", "nrmse",
]
