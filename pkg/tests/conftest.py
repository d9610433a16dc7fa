import numpy as np
import pytest

from solarcast.grid import GridSpec, Kind, MapStack

# 2011-06-21 00:00 UTC
SOLSTICE_2011 = 1308614400
JAN_2011 = 1293840000


@pytest.fixture
def small_spec():
    return GridSpec(width=4, height=3, pixel_size_m=2500.0, origin_lat=42.0, origin_lon=9.0,
                    t0=SOLSTICE_2011, step_s=3600)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def make_stack(frames, t0=SOLSTICE_2011, step_s=3600, kind=Kind.IRRADIANCE, **kw):
    arr = np.asarray(frames, dtype=np.float32)
    spec = GridSpec(arr.shape[2], arr.shape[1], t0=t0, step_s=step_s, **kw)
    return MapStack(spec, arr, kind, validate=False)
