"""The editable parametric light: a single spherical emitter plus ambient.

A light is five quantities: a unit direction toward the source (camera
frame), its distance and radius in meters, its emitted RGB radiance, and a
constant ambient RGB radiance standing in for everything else. Edits are
disentangled: each setter changes exactly one stored quantity.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ._validation import check_rgb, check_unit_vector
from .envmap import EquirectImage, direction_grid
from .geometry import CuboidGeom, LayoutMap

__all__ = [
    "ParametricLight",
    "LightEstimate",
    "direction_from_angles",
    "azimuth_of",
    "elevation_of",
    "angular_radius",
    "light_mask",
    "set_azimuth",
    "set_elevation",
    "set_size",
    "set_distance",
    "set_color",
    "set_ambient",
    "light_to_manifest",
    "light_from_manifest",
]


@dataclass(frozen=True, eq=False)
class ParametricLight:
    """Spherical emitter of radius ``radius_m`` at ``distance_m`` along ``direction``.

    ``color`` is the emitted radiance of the sphere surface; ``ambient`` is a
    constant environment radiance. All radiances are linear RGB.
    """

    direction: np.ndarray
    distance_m: float
    radius_m: float
    color: np.ndarray
    ambient: np.ndarray

    def __eq__(self, other) -> bool:
        if not isinstance(other, ParametricLight):
            return NotImplemented
        return (np.array_equal(self.direction, other.direction)
                and self.distance_m == other.distance_m
                and self.radius_m == other.radius_m
                and np.array_equal(self.color, other.color)
                and np.array_equal(self.ambient, other.ambient))

    def __post_init__(self) -> None:
        d = check_unit_vector(self.direction, "direction")
        d.setflags(write=False)
        object.__setattr__(self, "direction", d)
        object.__setattr__(self, "distance_m", float(self.distance_m))
        object.__setattr__(self, "radius_m", float(self.radius_m))
        if not np.isfinite(self.distance_m) or self.distance_m <= 0:
            raise ValueError(f"distance_m: must be positive, got {self.distance_m}")
        if not np.isfinite(self.radius_m) or self.radius_m <= 0:
            raise ValueError(f"radius_m: must be positive, got {self.radius_m}")
        if self.radius_m >= self.distance_m:
            raise ValueError(
                f"radius_m: sphere of radius {self.radius_m} at distance "
                f"{self.distance_m} would engulf the camera")
        c = check_rgb(self.color, "color")
        a = check_rgb(self.ambient, "ambient")
        c.setflags(write=False)
        a.setflags(write=False)
        object.__setattr__(self, "color", c)
        object.__setattr__(self, "ambient", a)


def direction_from_angles(azimuth: float, elevation: float) -> np.ndarray:
    """Unit direction for azimuth/elevation in radians.

    Azimuth 0 points at -z and increases toward +x; elevation is positive up.
    Matches the equirect pixel convention.
    """
    ce = np.cos(elevation)
    return np.array([ce * np.sin(azimuth), np.sin(elevation), -ce * np.cos(azimuth)])


def azimuth_of(light: ParametricLight) -> float:
    d = light.direction
    return float(np.arctan2(d[0], -d[2]))


def elevation_of(light: ParametricLight) -> float:
    return float(np.arcsin(np.clip(light.direction[1], -1.0, 1.0)))


def angular_radius(light: ParametricLight) -> float:
    """Half-angle (radians) subtended by the emitter sphere at the camera."""
    ratio = light.radius_m / light.distance_m
    if ratio >= 1.0:
        raise ValueError("radius_m: must be smaller than distance_m")
    return float(np.arcsin(ratio))


def light_mask(light: ParametricLight, width: int, height: int) -> np.ndarray:
    """(H, W) uint8 mask: 1 where a pixel direction falls inside the emitter cap."""
    dirs = direction_grid(width, height)
    cos_cap = np.cos(angular_radius(light))
    dots = dirs @ light.direction
    return (dots >= cos_cap).astype(np.uint8)


def light_to_envmap(light: ParametricLight, width: int, height: int) -> EquirectImage:
    """Far-field environment projection of the light: cap over ambient.

    The cap rim is antialiased over one pixel's angular extent so small
    sources do not alias away. Useful for equirect visualization and for
    comparing against environment-map lighting under a common renderer.
    """
    dirs = direction_grid(width, height)
    ang = np.arccos(np.clip(dirs @ light.direction, -1.0, 1.0))
    px = np.pi / height
    cov = np.clip((angular_radius(light) + px / 2.0 - ang) / px, 0.0, 1.0)[..., None]
    data = light.ambient[None, None, :] * (1.0 - cov) + light.color[None, None, :] * cov
    return EquirectImage(data.astype(np.float32), is_hdr=True)


def _with_direction(light: ParametricLight, azimuth: float, elevation: float) -> ParametricLight:
    if not -np.pi / 2 - 1e-12 <= elevation <= np.pi / 2 + 1e-12:
        raise ValueError(f"elevation: {np.degrees(elevation):.3f} deg outside [-90, 90]")
    d = direction_from_angles(azimuth, np.clip(elevation, -np.pi / 2, np.pi / 2))
    d /= np.linalg.norm(d)
    return replace(light, direction=d)


def set_azimuth(light: ParametricLight, azimuth: float) -> ParametricLight:
    """Rotate the light about the vertical axis; all other fields untouched."""
    return _with_direction(light, float(azimuth), elevation_of(light))


def set_elevation(light: ParametricLight, elevation: float) -> ParametricLight:
    return _with_direction(light, azimuth_of(light), float(elevation))


def set_size(light: ParametricLight, radius_m: float) -> ParametricLight:
    radius_m = float(radius_m)
    if not 0.0 < radius_m < light.distance_m:
        raise ValueError(
            f"radius_m: must be in (0, distance_m={light.distance_m}), got {radius_m}")
    return replace(light, radius_m=radius_m)


def set_distance(light: ParametricLight, distance_m: float) -> ParametricLight:
    distance_m = float(distance_m)
    if not distance_m > light.radius_m:
        raise ValueError(
            f"distance_m: must exceed radius_m={light.radius_m}, got {distance_m}")
    return replace(light, distance_m=distance_m)


def set_color(light: ParametricLight, color) -> ParametricLight:
    return replace(light, color=check_rgb(color, "color_rgb"))


def set_ambient(light: ParametricLight, ambient) -> ParametricLight:
    return replace(light, ambient=check_rgb(ambient, "ambient_rgb"))


def light_to_manifest(light: ParametricLight) -> dict:
    """Plain-dict manifest; the interchange schema for CLI, service, and UI."""
    return {
        "direction": [float(x) for x in light.direction],
        "distance_m": light.distance_m,
        "radius_m": light.radius_m,
        "color_rgb": [float(x) for x in light.color],
        "ambient_rgb": [float(x) for x in light.ambient],
    }


def light_from_manifest(manifest: dict) -> ParametricLight:
    try:
        d = np.asarray(manifest["direction"], dtype=np.float64)
        norm = np.linalg.norm(d)
        if norm <= 0:
            raise ValueError("direction: zero vector")
        if abs(norm - 1.0) > 1e-12:  # forgive hand-edited manifests
            d = d / norm
        return ParametricLight(
            direction=d,
            distance_m=manifest["distance_m"],
            radius_m=manifest["radius_m"],
            color=manifest["color_rgb"],
            ambient=manifest["ambient_rgb"],
        )
    except KeyError as e:
        raise ValueError(f"light manifest missing key {e.args[0]!r}") from None


@dataclass(frozen=True)
class LightEstimate:
    """Full lighting estimate: parametric light, LDR texture, layout, cuboid."""

    light: ParametricLight
    texture: EquirectImage
    layout: LayoutMap
    cuboid: CuboidGeom | None = None

    def __post_init__(self) -> None:
        if self.texture.is_hdr:
            raise ValueError("estimate texture must be LDR")
        if (self.layout.height, self.layout.width) != (self.texture.height, self.texture.width):
            raise ValueError(
                f"texture ({self.texture.width}x{self.texture.height}) and layout "
                f"({self.layout.width}x{self.layout.height}) resolutions differ")
