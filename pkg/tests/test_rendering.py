import numpy as np
import pytest

from roomlight import (
    EquirectImage,
    ParametricLight,
    RenderCancelled,
    ambient_geometry,
    bare_plane,
    composite_differential,
    direction_from_angles,
    direction_grid,
    emitter_geometry,
    grid3x3,
    render_combined,
    render_ibl,
    render_parametric,
    sphere_to_cuboid_texture,
    three_spheres,
)
from roomlight.geometry import CuboidGeom
from roomlight.rendering import primary_object_mask

from conftest import make_cap_pano


def basic_light(color=20.0, ambient=0.2, azimuth=0.4, elevation=0.8,
                distance=3.0, radius=0.4):
    return ParametricLight(direction=direction_from_angles(azimuth, elevation),
                           distance_m=distance, radius_m=radius,
                           color=(color,) * 3, ambient=(ambient,) * 3)


def uniform_env(value=1.0, width=32):
    return EquirectImage(np.full((width // 2, width, 3), value, np.float32))


class TestFurnace:
    def test_ibl_furnace(self):
        # unit albedo plane under a unit environment reflects unit radiance
        img = render_ibl(bare_plane(1.0), uniform_env(1.0), spp=256, seed=3, width=32)
        assert abs(img.data.mean() - 1.0) < 0.01
        assert np.abs(img.data - 1.0).max() < 0.03

    def test_ambient_furnace_exact(self):
        light = ParametricLight(direction=(0, 0, -1), distance_m=3, radius_m=1e-6,
                                color=(0, 0, 0), ambient=(1, 1, 1))
        img = render_parametric(bare_plane(1.0), light, spp=64, seed=1, width=16)
        np.testing.assert_allclose(img.data, 1.0, atol=1e-12)

    def test_black_env_black_image(self):
        img = render_ibl(grid3x3(), uniform_env(0.0), spp=16, seed=0, width=32)
        assert np.all(img.data == 0.0)


class TestShadows:
    def test_disk_on_left_casts_right(self):
        # bright disk toward -x (elevated): shadows push toward +x
        pano = make_cap_pano(direction_from_angles(-np.pi / 2, np.radians(40.0)),
                             np.radians(15.0), 60.0, 0.0, width=128, height=64)
        img = render_ibl(grid3x3(), pano, spp=32, seed=2, width=96)
        lum = img.data.mean(axis=-1)
        plane = ~primary_object_mask(grid3x3(), 96)
        lit = np.percentile(lum[plane], 85)
        shadow = plane & (lum < 0.2 * lit)
        assert shadow.sum() > 20
        xs = np.nonzero(shadow)[1]
        assert xs.mean() > 96 / 2  # +x is to the right of the image

    def test_azimuth_flip_mirrors_shadows(self):
        scene = grid3x3()
        w = 128
        plane = ~primary_object_mask(scene, w)

        def shadow_centroid(azimuth):
            light = basic_light(color=40.0, ambient=0.0, azimuth=azimuth,
                                elevation=np.radians(45.0), distance=50.0,
                                radius=50.0 * np.sin(np.radians(8.0)))
            img = render_parametric(scene, light, spp=32, seed=4, width=w)
            lum = img.data.mean(axis=-1)
            lit = np.percentile(lum[plane], 85)
            mask = plane & (lum < 0.2 * lit)
            ys, xs = np.nonzero(mask)
            return np.array([xs.mean(), ys.mean()])

        c0 = shadow_centroid(np.radians(30.0))
        c1 = shadow_centroid(np.radians(210.0))
        center = (w - 1) / 2.0
        np.testing.assert_allclose(c1, 2 * center - c0, atol=2.0)


class TestParametric:
    def test_zero_color_equals_ambient_only(self):
        light = basic_light(color=0.0, ambient=0.35)
        scene = grid3x3()
        img = render_parametric(scene, light, spp=16, seed=5, width=48)
        amb = ambient_geometry(scene, 16, 5, width=48) * 0.35
        np.testing.assert_array_equal(img.data, amb)

    def test_doubling_color_doubles_direct(self):
        scene = grid3x3()
        l1 = basic_light(color=10.0, ambient=0.1)
        l2 = basic_light(color=20.0, ambient=0.1)
        r1 = render_parametric(scene, l1, spp=8, seed=6, width=48).data
        r2 = render_parametric(scene, l2, spp=8, seed=6, width=48).data
        amb = ambient_geometry(scene, 8, 6, width=48) * 0.1
        np.testing.assert_allclose(r2 - amb, 2.0 * (r1 - amb), atol=1e-9)

    def test_linearity_in_both_terms(self):
        scene = grid3x3()
        l1 = basic_light(color=8.0, ambient=0.2)
        l3 = basic_light(color=24.0, ambient=0.6)
        r1 = render_parametric(scene, l1, spp=8, seed=7, width=48).data
        r3 = render_parametric(scene, l3, spp=8, seed=7, width=48).data
        np.testing.assert_allclose(r3, 3.0 * r1, atol=1e-9)

    def test_three_spheres_runs(self):
        img = render_parametric(three_spheres(), basic_light(), spp=8, seed=1, width=64)
        assert img.data.shape == (64, 64, 3)
        assert np.all(np.isfinite(img.data))

    def test_mirror_reflects_environment_source(self):
        # a bright elevated disk must appear at full radiance in the mirror
        pano = make_cap_pano(direction_from_angles(0.0, np.radians(50.0)),
                             np.radians(20.0), 50.0, 0.05, width=128, height=64)
        img = render_ibl(three_spheres(), pano, spp=16, seed=2, width=96)
        assert np.all(np.isfinite(img.data))
        assert img.data.max() == pytest.approx(50.0, rel=0.05)


class TestCombined:
    @pytest.fixture
    def room(self):
        return CuboidGeom(floor_corners=np.array([[-2, -2], [2, -2], [2, 2], [-2, 2]]),
                          ceiling_height_m=3.0)

    def test_black_texture_equals_parametric_no_ambient(self, room):
        black = EquirectImage(np.zeros((32, 64, 3), np.float32), is_hdr=False)
        ctex = sphere_to_cuboid_texture(black, room)
        light = basic_light(color=15.0, ambient=0.4)
        c = render_combined(grid3x3(), light, ctex, spp=8, seed=9, width=48)
        p = render_parametric(grid3x3(),
                              ParametricLight(direction=light.direction,
                                              distance_m=light.distance_m,
                                              radius_m=light.radius_m,
                                              color=light.color, ambient=(0, 0, 0)),
                              spp=8, seed=9, width=48)
        np.testing.assert_array_equal(c.data, p.data)

    def test_point_light_leaves_texture_pass(self, room, rng):
        tex = EquirectImage(rng.uniform(0.05, 0.4, (32, 64, 3)).astype(np.float32),
                            is_hdr=False)
        ctex = sphere_to_cuboid_texture(tex, room)
        tiny = basic_light(color=20.0, radius=1e-6)
        c = render_combined(grid3x3(), tiny, ctex, spp=16, seed=11, width=48)
        dark = ParametricLight(direction=tiny.direction, distance_m=tiny.distance_m,
                               radius_m=tiny.radius_m, color=(0, 0, 0), ambient=(0, 0, 0))
        t_only = render_combined(grid3x3(), dark, ctex, spp=16, seed=11, width=48)
        # a vanishing emitter contributes nothing beyond the texture pass
        assert np.abs(c.data - t_only.data).max() < 1e-3

    def test_mask_zeroing_removes_double_count(self, room):
        # constant texture: the combined render must not light the scene twice
        # where the emitter cap sits
        tex = EquirectImage(np.full((32, 64, 3), 0.3, np.float32), is_hdr=False)
        ctex = sphere_to_cuboid_texture(tex, room)
        wide = basic_light(color=5.0, ambient=0.0, radius=1.0, distance=2.0)
        c = render_combined(bare_plane(1.0), wide, ctex, spp=128, seed=13, width=16)
        # upper bound: emitter contribution + full-texture pass; the masked
        # render must fall strictly below it
        ge = emitter_geometry(bare_plane(1.0), wide, 128, 13, width=16)
        full_t = render_combined(bare_plane(1.0),
                                 ParametricLight(direction=wide.direction,
                                                 distance_m=50.0, radius_m=1e-6,
                                                 color=(0, 0, 0), ambient=(0, 0, 0)),
                                 ctex, spp=128, seed=13, width=16)
        upper = ge * 5.0 + full_t.data
        assert c.data.mean() < upper.mean() - 1e-3


class TestComposite:
    def test_no_object_identity(self, rng):
        bg = rng.uniform(0, 1, (16, 16, 3))
        r = rng.uniform(0, 1, (16, 16, 3))
        out = composite_differential(bg, r, r.copy(), np.zeros((16, 16), bool))
        np.testing.assert_array_equal(out, bg)

    def test_mask_takes_render(self, rng):
        bg = rng.uniform(0, 1, (8, 8, 3))
        w = np.full((8, 8, 3), 0.7)
        wo = np.full((8, 8, 3), 0.4)
        mask = np.zeros((8, 8), bool)
        mask[2, 3] = True
        out = composite_differential(bg, w, wo, mask)
        np.testing.assert_allclose(out[2, 3], 0.7)

    def test_shadow_darkens_background(self, rng):
        bg = np.full((8, 8, 3), 0.5)
        w = np.full((8, 8, 3), 0.2)   # object shadows the plane
        wo = np.full((8, 8, 3), 0.6)
        out = composite_differential(bg, w, wo, np.zeros((8, 8), bool))
        assert np.all(out < bg)

    def test_resolution_mismatch(self, rng):
        with pytest.raises(ValueError):
            composite_differential(np.zeros((4, 4, 3)), np.zeros((4, 4, 3)),
                                   np.zeros((4, 4, 3)), np.zeros((4, 5), bool))

    def test_clip_at_zero(self):
        bg = np.full((2, 2, 3), 0.1)
        w = np.zeros((2, 2, 3))
        wo = np.full((2, 2, 3), 0.9)
        out = composite_differential(bg, w, wo, np.zeros((2, 2), bool))
        assert np.all(out == 0.0)


class TestDeterminism:
    def test_same_seed_bit_identical(self, rng):
        pano = make_cap_pano(direction_from_angles(0.2, 0.5), np.radians(12.0),
                             30.0, 0.2, width=128, height=64)
        a = render_ibl(grid3x3(), pano, spp=16, seed=42, width=48)
        b = render_ibl(grid3x3(), pano, spp=16, seed=42, width=48)
        assert np.array_equal(a.data, b.data)
        assert a.spp == 16 and a.seed == 42

    def test_different_seeds_differ(self):
        pano = make_cap_pano(direction_from_angles(0.2, 0.5), np.radians(12.0),
                             30.0, 0.2, width=128, height=64)
        a = render_ibl(grid3x3(), pano, spp=8, seed=1, width=48)
        b = render_ibl(grid3x3(), pano, spp=8, seed=2, width=48)
        assert not np.array_equal(a.data, b.data)

    def test_parametric_same_seed(self):
        a = render_parametric(grid3x3(), basic_light(), spp=8, seed=3, width=48)
        b = render_parametric(grid3x3(), basic_light(), spp=8, seed=3, width=48)
        assert np.array_equal(a.data, b.data)


class TestCancellation:
    def test_cancel_raises(self):
        pano = make_cap_pano(direction_from_angles(0.2, 0.5), np.radians(12.0),
                             30.0, 0.2, width=128, height=64)
        with pytest.raises(RenderCancelled):
            render_ibl(grid3x3(), pano, spp=16, seed=0, width=96,
                       cancel=lambda: True)

    def test_no_cancel_completes(self):
        img = render_parametric(grid3x3(), basic_light(), spp=4, seed=0, width=32,
                                cancel=lambda: False)
        assert np.all(np.isfinite(img.data))


class TestValidation:
    def test_bad_spp(self):
        with pytest.raises(ValueError):
            render_ibl(grid3x3(), uniform_env(), spp=0, seed=0, width=16)

    def test_object_mask_matches_scene(self):
        mask = primary_object_mask(grid3x3(), 64)
        # nine spheres visible from above
        from scipy import ndimage
        _, count = ndimage.label(mask)
        assert count == 9
