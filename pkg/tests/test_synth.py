import numpy as np
import pytest

from solarcast.clearsky import ClearSkyParams, clear_sky_stack
from solarcast.grid import GridSpec, Kind
from solarcast.metrics import nrmse
from solarcast.predictors import forecast_stack
from solarcast.synth import CloudProcess, cloud_field, generate

from conftest import JAN_2011, SOLSTICE_2011


@pytest.fixture
def spec():
    return GridSpec(6, 5, t0=SOLSTICE_2011)


class TestGenerate:
    def test_clear_mode_bit_exact(self, spec):
        truth, cloud = generate(spec, 72, ClearSkyParams(3.0), CloudProcess("clear"))
        assert truth.frames.tobytes() == clear_sky_stack(spec, ClearSkyParams(3.0), 72).frames.tobytes()
        assert np.all(cloud.frames == 0) and cloud.kind == Kind.CLOUD_INDEX

    @pytest.mark.parametrize("mode", ["ar1", "advecting_blobs"])
    def test_same_seed_same_stacks(self, spec, mode):
        a = generate(spec, 48, proc=CloudProcess(mode, seed=3))
        b = generate(spec, 48, proc=CloudProcess(mode, seed=3))
        assert a[0] == b[0] and a[1] == b[1]
        assert not generate(spec, 48, proc=CloudProcess(mode, seed=4))[1] == a[1]

    @pytest.mark.parametrize("mode", ["ar1", "advecting_blobs"])
    def test_ranges(self, spec, mode):
        truth, cloud = generate(spec, 96, proc=CloudProcess(mode, noise_sigma=0.8, seed=1))
        assert cloud.frames.min() >= -0.2 and cloud.frames.max() <= 1.3
        cs = clear_sky_stack(spec, ClearSkyParams(), 96).frames.astype(np.float64)
        t = truth.frames.astype(np.float64)
        day = cs > 0
        assert np.all(t[day] >= 0.05 * cs[day] * (1 - 1e-6))
        assert np.all(t[day] <= 1.2 * cs[day] * (1 + 1e-6))
        assert np.all(t[~day] == 0)

    def test_independent_noise_at_phi_zero(self):
        n = cloud_field(GridSpec(1, 1), 10_000, CloudProcess("ar1", ar1_phi=0.0, seed=5))[:, 0, 0]
        n = n - n.mean()
        assert abs(float(n[1:] @ n[:-1] / (n @ n))) <= 0.1

    def test_persistent_noise_at_high_phi(self):
        n = cloud_field(GridSpec(1, 1), 10_000, CloudProcess("ar1", ar1_phi=0.9, noise_sigma=0.1, seed=5))[:, 0, 0]
        n = n - n.mean()
        assert float(n[1:] @ n[:-1] / (n @ n)) == pytest.approx(0.9, abs=0.03)

    def test_stationary_sigma_with_smoothing(self):
        n = cloud_field(GridSpec(16, 16), 400, CloudProcess("ar1", 0.0, 0.1, 0.3, spatial_sigma=2.0, seed=2))
        assert n.std() == pytest.approx(0.1, rel=0.05)

    @pytest.mark.parametrize("bad", [dict(mode="storm"), dict(ar1_phi=1.0), dict(noise_sigma=-1),
                                     dict(blob_radius=0), dict(seed=-1)])
    def test_validation(self, bad):
        with pytest.raises(ValueError):
            CloudProcess(**bad)


class TestOrderings:
    def test_high_phi_scaled_beats_clear_sky(self):
        spec = GridSpec(6, 6, t0=JAN_2011)
        n = 24 * 120
        truth, _ = generate(spec, n, proc=CloudProcess("ar1", 0.9, seed=8))
        clear = clear_sky_stack(spec, ClearSkyParams(), n)
        sp = nrmse(truth.slice(1), forecast_stack("scaled", truth, clear)).nrmse
        cs = nrmse(truth.slice(1), forecast_stack("clearsky", truth, clear)).nrmse
        assert sp < cs

    def test_fast_drift_degrades_persistence(self):
        spec = GridSpec(16, 16, t0=SOLSTICE_2011)
        n = 24 * 60
        clear = clear_sky_stack(spec, ClearSkyParams(), n)
        err = {}
        for drift in (0.2, 3.0):
            proc = CloudProcess("advecting_blobs", 0.9, 0.05, blob_drift=drift, blob_amplitude=0.8, seed=2)
            truth, _ = generate(spec, n, proc=proc)
            err[drift] = nrmse(truth.slice(1), forecast_stack("scaled", truth, clear)).nrmse
        assert err[3.0] > err[0.2]
