"""Shared fixtures: synthetic panoramas and rooms used across the suite."""

from __future__ import annotations

import numpy as np
import pytest

from roomlight import EquirectImage, direction_from_angles, direction_grid
from roomlight.geometry import CuboidGeom

# synthetic sources sit at environmental distance: the cap is painted into the
# panorama at infinity, so fits receive a matching constant depth map
FAR_DISTANCE_M = 500.0


def make_cap_pano(direction, cap_half_angle, cap_radiance, ambient,
                  width=256, height=128, antialias=True):
    """Panorama with a disk source of the given half-angle over constant ambient.

    The rim is antialiased over one pixel's angular extent by default (the
    painted cap then matches a true spherical source up to pixel bandwidth).
    """
    direction = np.asarray(direction, dtype=np.float64)
    dirs = direction_grid(width, height)
    ang = np.arccos(np.clip(dirs @ direction, -1.0, 1.0))
    if antialias:
        px = np.pi / height
        cov = np.clip((cap_half_angle + px / 2.0 - ang) / px, 0.0, 1.0)
    else:
        cov = (ang <= cap_half_angle).astype(np.float64)
    img = ambient + (cap_radiance - ambient) * cov
    return EquirectImage(np.repeat(img[..., None], 3, axis=-1).astype(np.float32))


def random_light_params(rng):
    """Light parameter draw used by the synthetic-recovery suites."""
    return {
        "azimuth": rng.uniform(-np.pi, np.pi),
        "elevation": np.radians(rng.uniform(10.0, 70.0)),
        "cap_half_angle": np.radians(rng.uniform(4.0, 25.0)),
        "cap_radiance": rng.uniform(5.0, 100.0),
        "ambient": rng.uniform(0.05, 0.5),
    }


def random_pano(rng, width=256, height=128):
    p = random_light_params(rng)
    direction = direction_from_angles(p["azimuth"], p["elevation"])
    pano = make_cap_pano(direction, p["cap_half_angle"], p["cap_radiance"],
                         p["ambient"], width, height)
    return pano, direction, p


def random_room(rng, margin=0.4, min_corner_separation_deg=8.0):
    """Random cuboid with the camera strictly inside.

    Rooms whose corners nearly coincide in azimuth are resampled: they are
    degenerate for any bearing-based detector.
    """
    while True:
        w, d = rng.uniform(2.0, 8.0, 2)
        rot = rng.uniform(0.0, np.pi / 2.0)
        ceiling = rng.uniform(2.0, 4.0)
        cx = rng.uniform(-(w / 2 - margin), w / 2 - margin)
        cz = rng.uniform(-(d / 2 - margin), d / 2 - margin)
        base = np.array([[-w / 2, -d / 2], [w / 2, -d / 2],
                         [w / 2, d / 2], [-w / 2, d / 2]]) - [cx, cz]
        rotm = np.array([[np.cos(rot), -np.sin(rot)], [np.sin(rot), np.cos(rot)]])
        corners = base @ rotm.T
        az = np.sort(np.arctan2(corners[:, 0], -corners[:, 1]))
        gaps = np.diff(np.concatenate([az, [az[0] + 2 * np.pi]]))
        if np.min(gaps) < np.radians(min_corner_separation_deg):
            continue
        try:
            return CuboidGeom(floor_corners=corners, ceiling_height_m=ceiling)
        except ValueError:
            continue


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
