"""Equirectangular radiance images and the spherical projection math behind them.

Fixed convention used everywhere in this package: y is up, -z is forward,
column 0 sits at longitude -pi, and pixel centers are offset by half a pixel.
A full-sphere image therefore has width == 2 * height.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ._validation import check_finite_nonneg

__all__ = [
    "EquirectImage",
    "pixel_to_direction",
    "direction_to_pixel",
    "direction_grid",
    "solid_angle_of_row",
    "solid_angle_map",
    "luminance",
    "reexpose_percentile",
    "tonemap_ldr",
    "sample_bilinear",
]


@dataclass(frozen=True)
class EquirectImage:
    """Linear-radiance spherical image in latitude-longitude layout.

    ``data`` is a (height, width, 3) float32 array of linear RGB radiance.
    HDR images are unbounded above; LDR images are clipped to [0, 1].
    Instances are immutable: the pixel buffer is marked read-only.
    """

    data: np.ndarray
    is_hdr: bool = True

    def __post_init__(self) -> None:
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) pixels, got shape {arr.shape}")
        h, w = arr.shape[:2]
        if w != 2 * h or h < 1:
            raise ValueError(f"equirect image must be 2H x H, got {w} x {h}")
        check_finite_nonneg(arr, "pixels")
        if not self.is_hdr and float(arr.max(initial=0.0)) > 1.0 + 1e-5:
            raise ValueError("LDR image has values above 1")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def luminance(self) -> np.ndarray:
        """Per-pixel luminance, defined as the mean of the RGB channels."""
        return luminance(self.data)

    def scaled(self, factor) -> "EquirectImage":
        """Return a copy with radiance multiplied by *factor* (scalar or RGB)."""
        out = self.data * np.asarray(factor, dtype=np.float32)
        return EquirectImage(out, is_hdr=True)


def luminance(pixels: np.ndarray) -> np.ndarray:
    return np.asarray(pixels, dtype=np.float64).mean(axis=-1)


def _check_resolution(width: int, height: int) -> tuple[int, int]:
    width, height = int(width), int(height)
    if height < 1 or width != 2 * height:
        raise ValueError(f"resolution must be 2H x H, got {width} x {height}")
    return width, height


def pixel_to_direction(u, v, width: int, height: int) -> np.ndarray:
    """Direction of pixel (u, v); accepts continuous coordinates.

    Longitude runs ``2*pi*(u+0.5)/width - pi`` and latitude
    ``pi/2 - pi*(v+0.5)/height``, so integer indices address pixel centers.
    Returns unit vectors shaped like the broadcast of u and v plus (3,).
    """
    width, height = _check_resolution(width, height)
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if np.any(u < -0.5 - 1e-9) or np.any(u > width - 0.5 + 1e-9):
        raise ValueError(f"column index outside [0, {width})")
    if np.any(v < -0.5 - 1e-9) or np.any(v > height - 0.5 + 1e-9):
        raise ValueError(f"row index outside [0, {height})")
    theta = 2.0 * np.pi * (u + 0.5) / width - np.pi
    phi = np.pi / 2.0 - np.pi * (v + 0.5) / height
    cp = np.cos(phi)
    d = np.stack([cp * np.sin(theta), np.sin(phi), -cp * np.cos(theta)], axis=-1)
    return d


def direction_to_pixel(direction, width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    """Continuous (u, v) of a unit direction; inverse of :func:`pixel_to_direction`.

    u wraps modulo width into [-0.5, width-0.5); v is clamped to the image so
    the poles land on the top/bottom row centers after rounding.
    """
    width, height = _check_resolution(width, height)
    d = np.asarray(direction, dtype=np.float64)
    n = np.linalg.norm(d, axis=-1)
    if np.any(n < 1e-12):
        raise ValueError("zero vector has no pixel")
    x, y, z = d[..., 0] / n, d[..., 1] / n, d[..., 2] / n
    theta = np.arctan2(x, -z)
    phi = np.arcsin(np.clip(y, -1.0, 1.0))
    u = (theta + np.pi) * width / (2.0 * np.pi) - 0.5
    v = (np.pi / 2.0 - phi) * height / np.pi - 0.5
    u = np.mod(u + 0.5, width) - 0.5
    v = np.clip(v, -0.5, height - 0.5)
    return u, v


@lru_cache(maxsize=16)
def _direction_grid_cached(width: int, height: int) -> np.ndarray:
    vv, uu = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    grid = pixel_to_direction(uu, vv, width, height)
    grid.setflags(write=False)
    return grid


def direction_grid(width: int, height: int) -> np.ndarray:
    """(H, W, 3) unit directions at every pixel center. Cached; read-only."""
    width, height = _check_resolution(width, height)
    return _direction_grid_cached(width, height)


def solid_angle_of_row(v, width: int, height: int) -> np.ndarray:
    """Solid angle (sr) of one pixel in row v; constant across the row."""
    width, height = _check_resolution(width, height)
    v = np.asarray(v)
    if np.any(v < 0) or np.any(v >= height):
        raise ValueError(f"row index outside [0, {height})")
    colat_top = np.pi * np.asarray(v, dtype=np.float64) / height
    colat_bot = np.pi * (np.asarray(v, dtype=np.float64) + 1.0) / height
    return (2.0 * np.pi / width) * (np.cos(colat_top) - np.cos(colat_bot))


@lru_cache(maxsize=16)
def _solid_angle_map_cached(width: int, height: int) -> np.ndarray:
    w = solid_angle_of_row(np.arange(height), width, height)
    w.setflags(write=False)
    return w


def solid_angle_map(width: int, height: int) -> np.ndarray:
    """(H,) per-pixel solid angles by row; rows sum to the full 4*pi sphere."""
    width, height = _check_resolution(width, height)
    return _solid_angle_map_cached(width, height)


def reexpose_percentile(img: EquirectImage, percentile: float = 90.0,
                        target: float = 0.8) -> tuple[EquirectImage, float]:
    """Scale *img* so the given luminance percentile equals *target*.

    Returns the scaled image and the scale factor, so light color and ambient
    terms can be co-scaled with the pixels.
    """
    if not 0.0 < percentile <= 100.0:
        raise ValueError(f"percentile must be in (0, 100], got {percentile}")
    if target <= 0.0:
        raise ValueError("target must be positive")
    lum = img.luminance()
    ref = float(np.percentile(lum, percentile))
    if ref <= 0.0:
        raise ValueError("exposure undefined: percentile luminance is zero")
    scale = target / ref
    return img.scaled(scale), scale


def tonemap_ldr(img: EquirectImage, gamma: float = 2.4) -> EquirectImage:
    """Clip to [0, 1] and apply a 1/gamma tone curve; output is LDR."""
    if gamma <= 0.0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    out = np.clip(img.data, 0.0, 1.0) ** np.float32(1.0 / gamma)
    return EquirectImage(out, is_hdr=False)


def sample_bilinear(pixels: np.ndarray, u, v, wrap_u: bool = True) -> np.ndarray:
    """Bilinear lookup at continuous (u, v); clamps rows.

    Columns wrap around by default (spherical images); pass ``wrap_u=False``
    to clamp instead (planar textures). ``pixels`` is any (H, W, C) array
    using the shared pixel-center convention.
    """
    h, w = pixels.shape[:2]
    if wrap_u:
        u = np.mod(np.asarray(u, dtype=np.float64), w)
    else:
        u = np.clip(np.asarray(u, dtype=np.float64), 0.0, w - 1.0)
    v = np.clip(np.asarray(v, dtype=np.float64), 0.0, h - 1.0)
    u0 = np.floor(u).astype(np.int64)
    v0 = np.floor(v).astype(np.int64)
    fu = (u - u0)[..., None]
    fv = (v - v0)[..., None]
    u1 = np.mod(u0 + 1, w) if wrap_u else np.minimum(u0 + 1, w - 1)
    v1 = np.minimum(v0 + 1, h - 1)
    p00 = pixels[v0, u0]
    p01 = pixels[v0, u1]
    p10 = pixels[v1, u0]
    p11 = pixels[v1, u1]
    top = p00 * (1.0 - fu) + p01 * fu
    bot = p10 * (1.0 - fu) + p11 * fu
    return top * (1.0 - fv) + bot * fv
