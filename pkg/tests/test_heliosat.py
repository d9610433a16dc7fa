import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from solarcast.heliosat import (AlbedoTriple, DegenerateAlbedoError, clamp_csi, cloud_index,
                                csi_from_cloud_index, csi_from_irradiance, irradiance_from_csi)


def quad(n):
    return 2.0667 - 3.6667 * n + 1.6667 * n * n


class TestCloudIndex:
    def test_clear_and_cloudy_limits(self):
        assert cloud_index(0.2, 0.8, 0.2) == 0.0
        assert cloud_index(0.8, 0.8, 0.2) == 1.0

    def test_one_third(self):
        assert cloud_index(0.4, 0.8, 0.2) == pytest.approx(1 / 3, abs=1e-15)

    def test_triple(self):
        assert cloud_index(AlbedoTriple(0.4, 0.8, 0.2)) == pytest.approx(1 / 3, abs=1e-15)

    def test_degenerate(self):
        with pytest.raises(DegenerateAlbedoError):
            cloud_index(0.3, 0.5, 0.5)
        with pytest.raises(DegenerateAlbedoError):
            AlbedoTriple(0.3, 0.5, 0.5)

    def test_vectorised(self):
        out = cloud_index(np.array([0.2, 0.5, 0.8]), 0.8, 0.2)
        np.testing.assert_allclose(out, [0.0, 0.5, 1.0])


class TestCsiFromCloudIndex:
    @pytest.mark.parametrize("n, expected", [(-0.5, 1.2), (0.5, 0.5), (2.0, 0.05)])
    def test_branches(self, n, expected):
        assert csi_from_cloud_index(n) == pytest.approx(expected, abs=1e-15)

    def test_quadratic_value(self):
        # 2.0667 - 3.6667*0.9 + 1.6667*0.81
        assert csi_from_cloud_index(0.9) == pytest.approx(0.116697, abs=1e-5)

    def test_linear_branch_is_closed(self):
        assert csi_from_cloud_index(-0.2) == 1.2
        assert csi_from_cloud_index(0.8) == pytest.approx(0.2, abs=1e-15)

    @pytest.mark.parametrize("n, tol", [(-0.2, 3e-5), (0.8, 3e-5), (1.1, 1e-4)])
    def test_continuity(self, n, tol):
        left = csi_from_cloud_index(np.nextafter(n, -np.inf))
        right = csi_from_cloud_index(np.nextafter(n, np.inf))
        assert abs(left - right) <= tol

    def test_nan_passes_through(self):
        assert np.isnan(csi_from_cloud_index(np.nan))

    def test_monotone_on_grid(self):
        n = np.linspace(-1, 2, 100_001)
        assert np.all(np.diff(csi_from_cloud_index(n)) <= 0)

    @settings(max_examples=200)
    @given(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6))
    def test_monotone_and_bounded(self, a, b):
        lo, hi = sorted((a, b))
        ca, cb = csi_from_cloud_index(lo), csi_from_cloud_index(hi)
        assert ca >= cb
        assert 0.05 <= cb <= ca <= 1.2


class TestIrradianceConversion:
    def test_examples(self):
        assert irradiance_from_csi(1.0, 800.0) == 800.0
        assert irradiance_from_csi(0.05, 800.0) == pytest.approx(40.0)
        assert irradiance_from_csi(0.7, 0.0) == 0.0
        assert csi_from_irradiance(400.0, 800.0) == 0.5
        assert csi_from_irradiance(600.0, 600.0) == 1.0
        assert np.isnan(csi_from_irradiance(5.0, 0.0))

    def test_floor_is_exclusive(self):
        assert np.isnan(csi_from_irradiance(5.0, 10.0))
        assert csi_from_irradiance(5.0, 10.5) == pytest.approx(5.0 / 10.5)

    def test_negative_clear_sky(self):
        with pytest.raises(ValueError):
            irradiance_from_csi(1.0, -1.0)

    @settings(max_examples=100)
    @given(st.floats(0, 2000), st.floats(10.001, 1200))
    def test_round_trip(self, i, ics):
        assert irradiance_from_csi(csi_from_irradiance(i, ics), ics) == pytest.approx(i, rel=1e-12, abs=1e-9)

    def test_clamp(self):
        out = clamp_csi(np.array([-0.1, 0.5, 2.0, np.nan]))
        assert out[:3].tolist() == [0.0, 0.5, 1.5] and np.isnan(out[3])
