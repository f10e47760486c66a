"""Probe scenes used for fitting and evaluation.

Geometry is fixed per scene kind so renders are deterministic given a
resolution, sample count, and seed. Scene objects are hashable value types:
the renderer caches primary-visibility buffers keyed on them.
"""

from __future__ import annotations

from dataclasses import dataclass

__all__ = [
    "Material",
    "SphereSpec",
    "OrthoCamera",
    "PerspectiveCamera",
    "TestScene",
    "grid3x3",
    "three_spheres",
    "bare_plane",
    "scene_by_name",
]

PROBE_ALBEDO = 0.8  # diffuse reflectance of probe spheres and ground plane


@dataclass(frozen=True)
class Material:
    kind: str  # "diffuse" | "mirror" | "glossy"
    albedo: tuple[float, float, float]
    phong_exponent: float = 64.0


@dataclass(frozen=True)
class SphereSpec:
    center: tuple[float, float, float]
    radius: float
    material: Material


@dataclass(frozen=True)
class OrthoCamera:
    """Top-down orthographic camera: rays start high on +y and point down.

    The image spans x, z in [-half_extent, +half_extent]; +x is right and
    +z is down in image space.
    """

    half_extent: float
    origin_y: float = 8.0


@dataclass(frozen=True)
class PerspectiveCamera:
    origin: tuple[float, float, float]
    look_at: tuple[float, float, float]
    fov_y_deg: float


@dataclass(frozen=True)
class TestScene:
    name: str
    spheres: tuple[SphereSpec, ...]
    plane_y: float | None
    plane_albedo: tuple[float, float, float]
    camera: OrthoCamera | PerspectiveCamera


_DIFFUSE = Material("diffuse", (PROBE_ALBEDO,) * 3)


def grid3x3() -> TestScene:
    """Nine diffuse spheres on a 3x3 grid over a diffuse plane, seen from above."""
    spheres = tuple(
        SphereSpec((i * 1.2, 0.4, k * 1.2), 0.4, _DIFFUSE)
        for k in (-1, 0, 1) for i in (-1, 0, 1)
    )
    return TestScene("grid3x3", spheres, 0.0, _DIFFUSE.albedo, OrthoCamera(2.0))


def three_spheres() -> TestScene:
    """Diffuse, mirror, and glossy spheres on a plane, perspective view.

    Mirror tint and glossiness are presentation configuration, not calibrated
    quantities.
    """
    mats = (
        Material("diffuse", (PROBE_ALBEDO,) * 3),
        Material("mirror", (1.0, 1.0, 1.0)),
        Material("glossy", (0.9, 0.9, 0.9), phong_exponent=64.0),
    )
    spheres = tuple(
        SphereSpec((x, 0.5, 0.0), 0.5, m)
        for x, m in zip((-1.2, 0.0, 1.2), mats)
    )
    return TestScene("three_spheres", spheres, 0.0, _DIFFUSE.albedo,
                     PerspectiveCamera((0.0, 1.6, 3.6), (0.0, 0.5, 0.0), 32.0))


def bare_plane(albedo: float = 1.0) -> TestScene:
    """Plane-only scene; with albedo 1 this is the furnace-test target."""
    return TestScene(f"bare_plane_{albedo}", (), 0.0, (albedo,) * 3, OrthoCamera(2.0))


def scene_by_name(name: str) -> TestScene:
    name = name.replace("-", "_")
    if name == "grid3x3":
        return grid3x3()
    if name == "three_spheres":
        return three_spheres()
    raise ValueError(f"unknown scene {name!r} (choose grid3x3 or three-spheres)")
