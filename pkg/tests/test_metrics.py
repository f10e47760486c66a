import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from roomlight import MetricReport, compare, psnr, rgb_angular, rmse, si_rmse
from roomlight.metrics import summarize


class TestRmse:
    def test_identical_zero(self, rng):
        a = rng.uniform(0, 1, (4, 4, 3))
        assert rmse(a, a) == 0.0

    def test_unit_offset(self):
        assert rmse(np.zeros((3, 3)), np.ones((3, 3))) == 1.0

    def test_two_pixel_case(self):
        assert rmse(np.array([0.0, 1.0]), np.array([1.0, 1.0])) == \
            pytest.approx(np.sqrt(0.5), rel=1e-12)

    def test_symmetric(self, rng):
        a, b = rng.uniform(0, 1, (2, 5, 5, 3))
        assert rmse(a, b) == pytest.approx(rmse(b, a), rel=1e-15)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            rmse(np.zeros((2, 2)), np.zeros((3, 2)))


class TestSiRmse:
    def test_scale_invariant(self, rng):
        a = rng.uniform(0.1, 1, (6, 6, 3))
        assert si_rmse(a, 3.0 * a) == pytest.approx(0.0, abs=1e-12)

    def test_zero_reference_degenerates(self, rng):
        b = rng.uniform(0.1, 1, (4, 4, 3))
        assert si_rmse(np.zeros_like(b), b) == pytest.approx(rmse(np.zeros_like(b), b))

    def test_matches_grid_search(self, rng):
        a = rng.uniform(0.0, 1.0, (8, 8, 3))
        b = rng.uniform(0.0, 1.0, (8, 8, 3))
        closed = si_rmse(a, b)
        alphas = np.arange(0.0, 3.0, 1e-3)
        grid = min(rmse(al * a, b) for al in alphas)
        assert closed <= grid + 1e-9
        assert abs(closed - grid) < 1e-6

    def test_negative_scale_clamped(self):
        a = np.array([1.0, 1.0])
        b = np.array([-0.0, 0.0])  # optimal unconstrained scale would be 0
        assert si_rmse(a, b) == pytest.approx(0.0, abs=1e-12)
        # anti-correlated pair clamps to zero scale
        a = np.array([1.0, 2.0])
        b = np.array([0.0, 0.0])
        assert si_rmse(a, b) == pytest.approx(rmse(0 * a, b), abs=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, (4, 4), elements=st.floats(0, 10)),
           arrays(np.float64, (4, 4), elements=st.floats(0, 10)))
    def test_never_exceeds_rmse(self, a, b):
        assert si_rmse(a, b) <= rmse(a, b) + 1e-12

    @settings(max_examples=30, deadline=None)
    @given(arrays(np.float64, (3, 3), elements=st.floats(0.01, 10)),
           st.floats(0.1, 10))
    def test_self_scale_zero(self, a, alpha):
        assert si_rmse(alpha * a, a) == pytest.approx(0.0, abs=1e-9)


class TestPsnr:
    def test_mse_001_is_20db(self):
        a = np.zeros((10, 10))
        b = np.full((10, 10), 0.1)
        assert psnr(a, b) == pytest.approx(20.0, abs=1e-9)

    def test_identical_capped(self, rng):
        a = rng.uniform(0, 1, (4, 4, 3))
        assert psnr(a, a) == 99.0

    def test_monotone_in_noise(self, rng):
        a = rng.uniform(0.3, 0.7, (32, 32, 3))
        noise = rng.normal(0, 1, a.shape)
        values = [psnr(a + amp * noise, a) for amp in (0.01, 0.03, 0.1)]
        assert values[0] > values[1] > values[2]

    def test_peak_parameter(self):
        a = np.zeros((4, 4))
        b = np.full((4, 4), 0.1)
        assert psnr(a, b, peak=2.0) == pytest.approx(20.0 + 10 * np.log10(4.0), abs=1e-9)


class TestRgbAngular:
    def test_per_pixel_scaling_invariant(self, rng):
        a = rng.uniform(0.1, 1, (6, 6, 3))
        scale = rng.uniform(0.5, 4.0, (6, 6, 1))
        assert rgb_angular(a, a * scale) == pytest.approx(0.0, abs=1e-6)

    def test_orthogonal_is_90(self):
        a = np.array([[[1.0, 0.0, 0.0]]])
        b = np.array([[[0.0, 1.0, 0.0]]])
        assert rgb_angular(a, b) == pytest.approx(90.0, abs=1e-9)

    def test_zero_pixels_skipped(self):
        a = np.array([[[1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]])
        b = np.array([[[0.0, 1.0, 0.0], [1.0, 1.0, 1.0]]])
        assert rgb_angular(a, b) == pytest.approx(90.0, abs=1e-9)

    def test_all_zero_returns_zero(self):
        z = np.zeros((2, 2, 3))
        assert rgb_angular(z, z) == 0.0


class TestReport:
    def test_compare_bundles_all_metrics(self, rng):
        a = rng.uniform(0, 1, (8, 8, 3))
        b = rng.uniform(0, 1, (8, 8, 3))
        rep = compare(a, b)
        assert rep.rmse == pytest.approx(rmse(a, b))
        assert rep.si_rmse <= rep.rmse + 1e-12
        assert np.isfinite(rep.psnr_db) and np.isfinite(rep.rgb_angular_deg)

    def test_invalid_report_rejected(self):
        with pytest.raises(ValueError):
            MetricReport(rmse=0.1, si_rmse=0.2, psnr_db=10.0, rgb_angular_deg=1.0)

    def test_summarize_percentiles(self, rng):
        reports = [compare(rng.uniform(0, 1, (4, 4, 3)), rng.uniform(0, 1, (4, 4, 3)))
                   for _ in range(5)]
        agg = summarize(reports)
        assert set(agg.percentiles["rmse"]) == {25, 50, 75}
        assert len(agg.per_image) == 5
