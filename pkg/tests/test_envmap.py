import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roomlight import (
    EquirectImage,
    direction_to_pixel,
    pixel_to_direction,
    reexpose_percentile,
    solid_angle_map,
    solid_angle_of_row,
    tonemap_ldr,
)
from roomlight.envmap import sample_bilinear


class TestProjection:
    def test_center_pixel_is_forward(self):
        # u = 1.5 straddles the image center of a 4x2 sphere
        d = pixel_to_direction(1.5, 0.5, 4, 2)
        np.testing.assert_allclose(d, [0.0, 0.0, -1.0], atol=1e-12)

    def test_top_row_latitude(self):
        # at height 2 the first row sits at +45 degrees
        d = pixel_to_direction(0, 0, 4, 2)
        assert d[1] == pytest.approx(np.sin(np.radians(45.0)), abs=1e-12)
        # cross-check through the inverse
        u, v = direction_to_pixel(d, 4, 2)
        assert (u, v) == (pytest.approx(0.0, abs=1e-9), pytest.approx(0.0, abs=1e-9))

    def test_roundtrip_8x4_exact(self):
        uu, vv = np.meshgrid(np.arange(8), np.arange(4))
        dirs = pixel_to_direction(uu, vv, 8, 4)
        u2, v2 = direction_to_pixel(dirs, 8, 4)
        np.testing.assert_allclose(u2, uu, atol=1e-6)
        np.testing.assert_allclose(v2, vv, atol=1e-6)

    @settings(max_examples=25, deadline=None)
    @given(h=st.integers(min_value=1, max_value=96))
    def test_roundtrip_any_resolution(self, h):
        w = 2 * h
        uu, vv = np.meshgrid(np.arange(w), np.arange(h))
        dirs = pixel_to_direction(uu, vv, w, h)
        u2, v2 = direction_to_pixel(dirs, w, h)
        assert np.abs(u2 - uu).max() < 1e-6
        assert np.abs(v2 - vv).max() < 1e-6

    def test_forward_direction_pixel(self):
        u, v = direction_to_pixel([0.0, 0.0, -1.0], 8, 4)
        assert (u, v) == (3.5, 1.5)

    def test_plus_x_direction(self):
        u, _ = direction_to_pixel([1.0, 0.0, 0.0], 16, 8)
        assert u == pytest.approx(0.75 * 16 - 0.5, abs=1e-9)

    def test_zenith_clamps_to_top_row(self):
        _, v = direction_to_pixel([0.0, 1.0, 0.0], 8, 4)
        assert v == pytest.approx(-0.5)
        assert int(np.clip(np.round(v), 0, 3)) == 0

    def test_zero_vector_rejected(self):
        with pytest.raises(ValueError):
            direction_to_pixel([0.0, 0.0, 0.0], 8, 4)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            pixel_to_direction(8, 0, 8, 4)
        with pytest.raises(ValueError):
            pixel_to_direction(0, -2, 8, 4)

    def test_unit_norm(self):
        uu, vv = np.meshgrid(np.arange(32), np.arange(16))
        dirs = pixel_to_direction(uu, vv, 32, 16)
        np.testing.assert_allclose(np.linalg.norm(dirs, axis=-1), 1.0, atol=1e-12)


class TestSolidAngles:
    @pytest.mark.parametrize("h", [1, 2, 7, 64, 113])
    def test_sphere_total(self, h):
        w = 2 * h
        total = solid_angle_map(w, h).sum() * w
        assert total == pytest.approx(4.0 * np.pi, rel=1e-9)

    def test_upper_hemisphere(self):
        w, h = 64, 32
        per_row = solid_angle_map(w, h)
        assert per_row[: h // 2].sum() * w == pytest.approx(2.0 * np.pi, rel=1e-9)

    def test_height2_top_row(self):
        # each top-row pixel spans a quarter-sphere band cell
        assert solid_angle_of_row(0, 4, 2) == pytest.approx(np.pi / 2, rel=1e-12)
        assert solid_angle_of_row(0, 4, 2) * 4 == pytest.approx(2 * np.pi, rel=1e-12)

    def test_positive_and_equator_symmetric(self):
        per_row = solid_angle_map(30, 15)
        assert np.all(per_row > 0)
        np.testing.assert_allclose(per_row, per_row[::-1], rtol=1e-12)

    def test_bad_row_rejected(self):
        with pytest.raises(ValueError):
            solid_angle_of_row(5, 8, 4)


class TestEquirectImage:
    def test_resolution_enforced(self):
        with pytest.raises(ValueError):
            EquirectImage(np.zeros((4, 9, 3), np.float32))

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            EquirectImage(np.full((2, 4, 3), -0.5, np.float32))

    def test_nan_rejected(self):
        bad = np.zeros((2, 4, 3), np.float32)
        bad[0, 0, 0] = np.nan
        with pytest.raises(ValueError):
            EquirectImage(bad)

    def test_ldr_bound(self):
        with pytest.raises(ValueError):
            EquirectImage(np.full((2, 4, 3), 1.5, np.float32), is_hdr=False)

    def test_immutable(self):
        img = EquirectImage(np.ones((2, 4, 3), np.float32))
        with pytest.raises(ValueError):
            img.data[0, 0, 0] = 2.0


class TestReexpose:
    def test_scale_to_target(self, rng):
        data = rng.uniform(0.0, 1.0, (8, 16, 3)).astype(np.float32)
        img = EquirectImage(data)
        # construct so the 90th percentile is exactly 0.4
        lum = img.luminance()
        factor = 0.4 / np.percentile(lum, 90)
        img = img.scaled(factor)
        out, scale = reexpose_percentile(img, 90, 0.8)
        assert scale == pytest.approx(2.0, rel=1e-6)
        assert np.percentile(out.luminance(), 90) == pytest.approx(0.8, rel=1e-6)

    def test_median_on_constant(self):
        img = EquirectImage(np.full((4, 8, 3), 0.9, np.float32))
        _, scale = reexpose_percentile(img, 50, 0.45)
        assert scale == pytest.approx(0.5, rel=1e-6)

    def test_texture_extraction_defaults(self):
        # default arguments are the texture-extraction exposure settings
        import inspect
        sig = inspect.signature(reexpose_percentile)
        assert sig.parameters["percentile"].default == 90.0
        assert sig.parameters["target"].default == 0.8

    def test_all_zero_errors(self):
        img = EquirectImage(np.zeros((2, 4, 3), np.float32))
        with pytest.raises(ValueError):
            reexpose_percentile(img)

    def test_linearity(self, rng):
        data = rng.uniform(0.1, 2.0, (4, 8, 3)).astype(np.float32)
        img = EquirectImage(data)
        out1, s1 = reexpose_percentile(img, 90, 0.8)
        out2, s2 = reexpose_percentile(img.scaled(4.0), 90, 0.8)
        assert s2 == pytest.approx(s1 / 4.0, rel=1e-5)
        np.testing.assert_allclose(out1.data, out2.data, rtol=1e-5)


class TestTonemap:
    def test_endpoints(self):
        img = EquirectImage(np.array([[[0.0] * 3, [2.0] * 3]], np.float32))
        out = tonemap_ldr(img)
        assert out.data[0, 0, 0] == 0.0
        assert out.data[0, 1, 0] == 1.0
        assert not out.is_hdr

    def test_half_value(self):
        img = EquirectImage(np.full((2, 4, 3), 0.5, np.float32))
        out = tonemap_ldr(img, gamma=2.4)
        assert out.data[0, 0, 0] == pytest.approx(0.5 ** (1 / 2.4), rel=1e-6)

    def test_gamma_one_identity(self, rng):
        data = rng.uniform(0.0, 1.0, (4, 8, 3)).astype(np.float32)
        img = EquirectImage(data)
        np.testing.assert_allclose(tonemap_ldr(img, gamma=1.0).data, data, atol=1e-7)

    def test_bad_gamma(self):
        img = EquirectImage(np.ones((2, 4, 3), np.float32))
        with pytest.raises(ValueError):
            tonemap_ldr(img, gamma=0.0)

    def test_monotone(self, rng):
        vals = np.sort(rng.uniform(0.0, 2.0, 64)).astype(np.float32)
        img = EquirectImage(np.tile(vals[None, :, None], (32, 1, 3)))
        out = tonemap_ldr(img)
        row = out.data[0, :, 0]
        assert np.all(np.diff(row) >= 0)


class TestBilinear:
    def test_pixel_centers_exact(self, rng):
        px = rng.uniform(0, 1, (4, 8, 3))
        uu, vv = np.meshgrid(np.arange(8), np.arange(4))
        out = sample_bilinear(px, uu, vv)
        np.testing.assert_allclose(out, px, atol=1e-12)

    def test_horizontal_wrap(self):
        px = np.zeros((2, 4, 1))
        px[:, 0] = 1.0
        # halfway between last and first column
        out = sample_bilinear(px, 3.5, 0.0)
        assert out[0] == pytest.approx(0.5)

    def test_clamped_when_requested(self):
        px = np.zeros((2, 4, 1))
        px[:, 0] = 1.0
        out = sample_bilinear(px, -2.0, 0.0, wrap_u=False)
        assert out[0] == pytest.approx(1.0)
