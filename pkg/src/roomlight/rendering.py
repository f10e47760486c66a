"""Direct-illumination renderer for the probe scenes.

Three light models share one machinery: an environment map sampled by
luminance-weighted solid angle, a spherical emitter plus constant ambient,
and the combined emitter + textured-cuboid representation. Rendering is
direct lighting with shadow rays only; the probe scenes have negligible
interreflection, so one bounce is the whole forward model.

Determinism: sampling uses a low-discrepancy point set with per-pixel random
toroidal shifts derived from the seed. Accumulation is per-pixel and
sequential over fixed-size chunks, so a given (scene, resolution, spp, seed)
always reproduces bit-identical images; chunk boundaries double as
cancellation points.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .envmap import EquirectImage, direction_to_pixel, sample_bilinear, solid_angle_map
from .geometry import CuboidTexture, FaceTexture, raycast_faces
from .light import ParametricLight, angular_radius
from .scenes import OrthoCamera, PerspectiveCamera, TestScene

__all__ = [
    "RenderedImage",
    "RenderCancelled",
    "render_ibl",
    "render_parametric",
    "render_combined",
    "emitter_geometry",
    "ambient_geometry",
    "mask_cuboid_texture",
    "composite_differential",
    "primary_object_mask",
]

_EPS = 1e-5
_CHUNK_SAMPLES = 1 << 18

# per-pass sub-stream codes for seed derivation
_PASS_ENV = 0
_PASS_EMITTER = 1
_PASS_AMBIENT = 2
_PASS_TEXTURE = 3
_PASS_SPECULAR = 4


class RenderCancelled(RuntimeError):
    """A render was cancelled between chunks."""


@dataclass(frozen=True)
class RenderedImage:
    """Linear-radiance render plus the sampling parameters that made it."""

    data: np.ndarray  # (H, W, 3) float64
    spp: int
    seed: int

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(np.asarray(self.data, dtype=np.float64))
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


# ---------------------------------------------------------------------------
# Primary visibility (cached per scene/resolution)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _GBuffer:
    width: int
    height: int
    hit: np.ndarray       # (Npix,) bool
    pos: np.ndarray       # (Nhit, 3) shading points, offset off the surface
    normal: np.ndarray    # (Nhit, 3)
    albedo: np.ndarray    # (Nhit, 3)
    mat: np.ndarray       # (Nhit,) 0 diffuse, 1 mirror, 2 glossy
    phong: np.ndarray     # (Nhit,)
    view: np.ndarray      # (Nhit, 3) primary ray directions at hits
    miss_dirs: np.ndarray  # (Nmiss, 3)
    cam_origin: np.ndarray  # (3,) for environment queries of miss rays
    on_plane: np.ndarray  # (Nhit,) bool


def _primary_rays(scene: TestScene, width: int, height: int):
    cam = scene.camera
    if isinstance(cam, OrthoCamera):
        xs = (np.arange(width) + 0.5) / width * 2.0 * cam.half_extent - cam.half_extent
        zs = (np.arange(height) + 0.5) / height * 2.0 * cam.half_extent - cam.half_extent
        zz, xx = np.meshgrid(zs, xs, indexing="ij")
        origins = np.stack([xx, np.full_like(xx, cam.origin_y), zz], axis=-1)
        dirs = np.broadcast_to(np.array([0.0, -1.0, 0.0]), origins.shape)
        cam_origin = np.array([0.0, cam.origin_y, 0.0])
        return origins.reshape(-1, 3), np.ascontiguousarray(dirs.reshape(-1, 3)), cam_origin
    if isinstance(cam, PerspectiveCamera):
        origin = np.asarray(cam.origin, dtype=np.float64)
        fwd = np.asarray(cam.look_at, dtype=np.float64) - origin
        fwd /= np.linalg.norm(fwd)
        right = np.cross(fwd, np.array([0.0, 1.0, 0.0]))
        right /= np.linalg.norm(right)
        up = np.cross(right, fwd)
        tan_half = np.tan(np.radians(cam.fov_y_deg) / 2.0)
        px = ((np.arange(width) + 0.5) / width * 2.0 - 1.0) * tan_half * width / height
        py = (1.0 - (np.arange(height) + 0.5) / height * 2.0) * tan_half
        yy, xx = np.meshgrid(py, px, indexing="ij")
        dirs = xx[..., None] * right + yy[..., None] * up + fwd
        dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
        origins = np.broadcast_to(origin, dirs.shape)
        return np.ascontiguousarray(origins.reshape(-1, 3)), dirs.reshape(-1, 3), origin
    raise TypeError(f"unknown camera type {type(cam).__name__}")


def _intersect_scene(scene: TestScene, origins: np.ndarray, dirs: np.ndarray):
    """Nearest scene hit along each ray: (t, sphere index or -1 for plane)."""
    n = dirs.shape[0]
    t_best = np.full(n, np.inf)
    obj = np.full(n, -2, dtype=np.int32)  # -2 miss, -1 plane, >=0 sphere
    if scene.plane_y is not None:
        dy = dirs[:, 1]
        moving = np.abs(dy) > 1e-12
        t = np.where(moving, (scene.plane_y - origins[:, 1]) / np.where(moving, dy, 1.0), np.inf)
        ok = moving & (t > _EPS) & (t < t_best)
        t_best[ok] = t[ok]
        obj[ok] = -1
    for i, sp in enumerate(scene.spheres):
        c = np.asarray(sp.center)
        oc = origins - c
        b = np.einsum("ij,ij->i", oc, dirs)
        cq = np.einsum("ij,ij->i", oc, oc) - sp.radius * sp.radius
        disc = b * b - cq
        m = disc > 0.0
        sq = np.sqrt(np.where(m, disc, 0.0))
        t = np.where(m, -b - sq, np.inf)
        # allow exiting hits from inside to be ignored (probe scenes never need them)
        ok = m & (t > _EPS) & (t < t_best)
        t_best[ok] = t[ok]
        obj[ok] = i
    return t_best, obj


_MAT_CODE = {"diffuse": 0, "mirror": 1, "glossy": 2}


@lru_cache(maxsize=32)
def _gbuffer(scene: TestScene, width: int, height: int) -> _GBuffer:
    origins, dirs, cam_origin = _primary_rays(scene, width, height)
    t, obj = _intersect_scene(scene, origins, dirs)
    hit = obj != -2
    hp = origins[hit] + t[hit, None] * dirs[hit]
    oh = obj[hit]
    normal = np.zeros_like(hp)
    albedo = np.zeros_like(hp)
    mat = np.zeros(hp.shape[0], dtype=np.int8)
    phong = np.full(hp.shape[0], 1.0)
    on_plane = oh == -1
    normal[on_plane] = (0.0, 1.0, 0.0)
    albedo[on_plane] = scene.plane_albedo
    for i, sp in enumerate(scene.spheres):
        sel = oh == i
        if not np.any(sel):
            continue
        n = (hp[sel] - np.asarray(sp.center)) / sp.radius
        normal[sel] = n / np.linalg.norm(n, axis=-1, keepdims=True)
        albedo[sel] = sp.material.albedo
        mat[sel] = _MAT_CODE[sp.material.kind]
        phong[sel] = sp.material.phong_exponent
    pos = hp + normal * _EPS
    for arr in (pos, normal, albedo, mat, phong):
        arr.setflags(write=False)
    miss_dirs = np.ascontiguousarray(dirs[~hit])
    view = np.ascontiguousarray(dirs[hit])
    return _GBuffer(width, height, hit, pos, normal, albedo, mat, phong,
                    view, miss_dirs, cam_origin, on_plane)


def _occluded(scene: TestScene, origins: np.ndarray, dirs: np.ndarray,
              t_max: np.ndarray | float = np.inf) -> np.ndarray:
    """Shadow test: does any scene surface lie along the ray before t_max?

    Runs in float32: shadow-ray precision is bounded by the surface offset
    epsilon, far above float32 resolution at scene scale.
    """
    origins = np.asarray(origins, dtype=np.float32)
    dirs = np.asarray(dirs, dtype=np.float32)
    n = dirs.shape[0]
    occ = np.zeros(n, dtype=bool)
    limit = np.broadcast_to(np.asarray(t_max, dtype=np.float32), (n,))
    if scene.plane_y is not None:
        dy = dirs[:, 1]
        moving = np.abs(dy) > 1e-9
        t = np.where(moving, (np.float32(scene.plane_y) - origins[:, 1])
                     / np.where(moving, dy, 1.0), np.inf)
        occ |= (t > _EPS) & (t < limit - _EPS)
    for sp in scene.spheres:
        oc = origins - np.asarray(sp.center, dtype=np.float32)
        b = np.einsum("ij,ij->i", oc, dirs)
        cq = np.einsum("ij,ij->i", oc, oc) - np.float32(sp.radius * sp.radius)
        disc = b * b - cq
        m = disc > 0.0
        t = np.where(m, -b - np.sqrt(np.where(m, disc, 0.0)), np.inf)
        occ |= m & (t > _EPS) & (t < limit - _EPS)
        if np.all(occ):
            break
    return occ


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def _radical_inverse2(i: np.ndarray) -> np.ndarray:
    bits = i.astype(np.uint32)
    bits = (bits << np.uint32(16)) | (bits >> np.uint32(16))
    bits = ((bits & np.uint32(0x55555555)) << np.uint32(1)) | \
           ((bits & np.uint32(0xAAAAAAAA)) >> np.uint32(1))
    bits = ((bits & np.uint32(0x33333333)) << np.uint32(2)) | \
           ((bits & np.uint32(0xCCCCCCCC)) >> np.uint32(2))
    bits = ((bits & np.uint32(0x0F0F0F0F)) << np.uint32(4)) | \
           ((bits & np.uint32(0xF0F0F0F0)) >> np.uint32(4))
    bits = ((bits & np.uint32(0x00FF00FF)) << np.uint32(8)) | \
           ((bits & np.uint32(0xFF00FF00)) >> np.uint32(8))
    return bits.astype(np.float64) * (1.0 / 4294967296.0)


@lru_cache(maxsize=16)
def _hammersley(n: int) -> np.ndarray:
    i = np.arange(n)
    pts = np.stack([(i + 0.5) / n, _radical_inverse2(i)], axis=1)
    pts.setflags(write=False)
    return pts


def _pass_offsets(seed: int, pass_code: int, npix: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(int(seed) & 0xFFFFFFFF),
                                                       spawn_key=(pass_code,)))
    return rng.random((npix, 2))


def _chunk_uv(offsets: np.ndarray, lo: int, hi: int, spp: int) -> np.ndarray:
    """(P, spp, 2) toroidally shifted low-discrepancy samples for a pixel chunk."""
    base = _hammersley(spp)
    return np.mod(base[None, :, :] + offsets[lo:hi, None, :], 1.0)


def _onb(n: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Branchless orthonormal basis for unit vectors n (..., 3)."""
    x, y, z = n[..., 0], n[..., 1], n[..., 2]
    s = np.where(z >= 0.0, 1.0, -1.0)
    a = -1.0 / (s + z)
    b = x * y * a
    t1 = np.stack([1.0 + s * x * x * a, s * b, -s * x], axis=-1)
    t2 = np.stack([b, s + y * y * a, -y], axis=-1)
    return t1, t2


def _cosine_dirs(normal: np.ndarray, uv: np.ndarray) -> np.ndarray:
    """Cosine-weighted hemisphere directions about per-pixel normals."""
    t1, t2 = _onb(normal)
    r = np.sqrt(uv[..., 1])
    phi = 2.0 * np.pi * uv[..., 0]
    x = r * np.cos(phi)
    y = r * np.sin(phi)
    z = np.sqrt(np.maximum(0.0, 1.0 - uv[..., 1]))
    return (x[..., None] * t1[:, None, :]
            + y[..., None] * t2[:, None, :]
            + z[..., None] * normal[:, None, :])


class _EnvSampler:
    """Luminance-weighted solid-angle sampling of an environment map.

    Standard two-stage inversion (marginal row CDF, then a conditional
    column CDF within the row) so that stratified unit samples stay
    stratified over the sphere.
    """

    def __init__(self, env: EquirectImage):
        self.env = env
        h, w = env.height, env.width
        lum = env.luminance()
        omega = solid_angle_map(w, h)
        energy = lum * omega[:, None]
        self.total = float(energy.sum())
        self.lum_flat = lum.reshape(-1)
        self.rgb_flat = env.data.reshape(-1, 3).astype(np.float64)
        if self.total <= 0.0:
            return
        row_mass = energy.sum(axis=1)
        self.row_cdf = np.cumsum(row_mass) / row_mass.sum()
        cond = np.cumsum(energy, axis=1)
        norm = np.where(row_mass > 0, row_mass, 1.0)[:, None]
        cond = cond / norm
        # offset each row's conditional CDF by its index: one flat searchsorted
        # then resolves (row, column) in a single pass
        self.cond_flat = (cond + np.arange(h)[:, None]).reshape(-1)

    def sample(self, uv: np.ndarray):
        """Map uniform (..., 2) to directions, RGB radiance, and pdf."""
        h, w = self.env.height, self.env.width
        u1, u2 = uv[..., 0], uv[..., 1]
        v_idx = np.minimum(np.searchsorted(self.row_cdf, u2, side="right"), h - 1)
        lo = np.where(v_idx > 0, self.row_cdf[v_idx - 1], 0.0)
        span = self.row_cdf[v_idx] - lo
        frac_v = np.where(span > 0, (u2 - lo) / np.where(span > 0, span, 1.0), 0.5)

        flat_pos = np.searchsorted(self.cond_flat, v_idx + u1, side="right")
        u_idx = np.minimum(flat_pos - v_idx * w, w - 1)
        flat_pos = v_idx * w + u_idx
        clo = np.where(u_idx > 0, self.cond_flat[flat_pos - 1] - v_idx, 0.0)
        cspan = (self.cond_flat[flat_pos] - v_idx) - clo
        frac_u = np.where(cspan > 0, (u1 - clo) / np.where(cspan > 0, cspan, 1.0), 0.5)

        # uniform within the pixel's solid-angle footprint
        ct = np.cos(np.pi * v_idx / h)
        cb = np.cos(np.pi * (v_idx + 1) / h)
        cos_col = ct + frac_v * (cb - ct)
        sin_col = np.sqrt(np.maximum(0.0, 1.0 - cos_col * cos_col))
        theta = 2.0 * np.pi * (u_idx + frac_u) / w - np.pi
        dirs = np.stack([sin_col * np.sin(theta), cos_col, -sin_col * np.cos(theta)],
                        axis=-1)
        idx = flat_pos
        pdf = self.lum_flat[idx] / self.total  # solid-angle density
        radiance = self.rgb_flat[idx]
        return dirs, radiance, pdf

    def lookup(self, dirs: np.ndarray):
        """Piecewise-constant radiance and pdf of arbitrary directions."""
        h, w = self.env.height, self.env.width
        u, v = direction_to_pixel(dirs, w, h)
        u_idx = np.minimum(np.floor(u + 0.5).astype(np.int64) % w, w - 1)
        v_idx = np.clip(np.floor(v + 0.5).astype(np.int64), 0, h - 1)
        idx = v_idx * w + u_idx
        return self.rgb_flat[idx], self.lum_flat[idx] / self.total


# ---------------------------------------------------------------------------
# Light-model radiance along secondary rays (mirror/glossy and miss pixels)
# ---------------------------------------------------------------------------

class _EnvModel:
    """Environment map at infinity."""

    def __init__(self, env: EquirectImage):
        self.env = env
        h, w = env.height, env.width
        self.h, self.w = h, w

    def radiance(self, scene, origins, dirs):
        occ = _occluded(scene, origins, dirs)
        u, v = direction_to_pixel(dirs, self.w, self.h)
        rad = sample_bilinear(self.env.data, u, v).astype(np.float64)
        rad[occ] = 0.0
        return rad


class _ParametricModel:
    """Factorized emitter/ambient response: radiance = ge * c + ga * a."""

    def __init__(self, light_dir: np.ndarray, distance: float, radius: float):
        self.center = light_dir * distance
        self.radius = radius

    def factors(self, scene, origins, dirs):
        to_c = self.center[None, :] - origins
        dist = np.linalg.norm(to_c, axis=-1)
        ratio = np.clip(self.radius / np.maximum(dist, 1e-9), 0.0, 1.0 - 1e-12)
        cos_cap = np.sqrt(1.0 - ratio * ratio)  # cos(asin(r/d))
        axis = to_c / dist[:, None]
        in_cap = np.einsum("ij,ij->i", dirs, axis) >= cos_cap
        t_emit = dist * cos_cap  # distance to the cap's visible disk (chord bound)
        occ_any = _occluded(scene, origins, dirs)
        occ_before = _occluded(scene, origins, dirs, t_max=t_emit)
        ge = (in_cap & ~occ_before).astype(np.float64)
        ga = (~occ_any).astype(np.float64)
        return ge, ga


class _CuboidModel:
    """Masked textured cuboid: radiance from the nearest face along the ray."""

    def __init__(self, ctex: CuboidTexture):
        self.ctex = ctex

    def radiance(self, scene, origins, dirs):
        rad, t_face = raycast_faces(self.ctex, origins, dirs)
        occ = _occluded(scene, origins, dirs, t_max=t_face)
        rad[occ] = 0.0
        return rad


# ---------------------------------------------------------------------------
# Pass runners
# ---------------------------------------------------------------------------

def _check_cancel(cancel: Callable[[], bool] | None) -> None:
    if cancel is not None and cancel():
        raise RenderCancelled("render cancelled")


def _chunk_ranges(n: int, spp: int):
    step = max(1, _CHUNK_SAMPLES // max(spp, 1))
    for lo in range(0, n, step):
        yield lo, min(lo + step, n)


def _diffuse_env_pass(scene, gb: _GBuffer, sampler: _EnvSampler, spp, seed, cancel):
    """Diffuse response to an environment map.

    Combines luminance-weighted environment sampling with cosine-hemisphere
    sampling through the balance heuristic: the environment half resolves
    concentrated sources, the cosine half keeps broad regions noise-free.
    """
    sel = np.flatnonzero(gb.mat == 0)
    out = np.zeros((gb.pos.shape[0], 3))
    if sel.size == 0 or sampler.total <= 0.0:
        return out
    n_env = max(1, spp - spp // 2)
    n_cos = spp - n_env
    offsets_e = _pass_offsets(seed, _PASS_ENV, sel.size)
    offsets_c = _pass_offsets(seed, _PASS_AMBIENT, sel.size)
    for lo, hi in _chunk_ranges(sel.size, spp):
        _check_cancel(cancel)
        ids = sel[lo:hi]
        p = ids.size
        acc = np.zeros((p, 3))

        uv = _chunk_uv(offsets_e, lo, hi, n_env)
        dirs, rad, pdf_e = sampler.sample(uv)
        cosv = np.einsum("psj,pj->ps", dirs, gb.normal[ids])
        np.maximum(cosv, 0.0, out=cosv)
        vis = ~_occluded(scene, np.repeat(gb.pos[ids], n_env, axis=0),
                         dirs.reshape(-1, 3))
        mis = pdf_e * n_env + (cosv / np.pi) * n_cos
        w = np.where(mis > 0, (cosv * vis.reshape(p, n_env)) / np.where(mis > 0, mis, 1.0), 0.0)
        acc += np.einsum("ps,psk->pk", w, rad)

        if n_cos > 0:
            uv = _chunk_uv(offsets_c, lo, hi, n_cos)
            dirs = _cosine_dirs(gb.normal[ids], uv)
            rad, pdf_e = sampler.lookup(dirs)
            cosv = np.einsum("psj,pj->ps", dirs, gb.normal[ids])
            np.maximum(cosv, 0.0, out=cosv)
            vis = ~_occluded(scene, np.repeat(gb.pos[ids], n_cos, axis=0),
                             dirs.reshape(-1, 3))
            mis = pdf_e.reshape(p, n_cos) * n_env + (cosv / np.pi) * n_cos
            w = np.where(mis > 0, (cosv * vis.reshape(p, n_cos)) / np.where(mis > 0, mis, 1.0), 0.0)
            acc += np.einsum("ps,psk->pk", w, rad.reshape(p, n_cos, 3))

        out[ids] = acc * (gb.albedo[ids] / np.pi)
    return out


def _diffuse_cap_pass(scene, gb: _GBuffer, center, radius, spp, seed, cancel):
    """Geometric response of diffuse pixels to a unit-radiance spherical emitter."""
    sel = np.flatnonzero(gb.mat == 0)
    out = np.zeros(gb.pos.shape[0])
    if sel.size == 0:
        return out
    offsets = _pass_offsets(seed, _PASS_EMITTER, sel.size)
    for lo, hi in _chunk_ranges(sel.size, spp):
        _check_cancel(cancel)
        ids = sel[lo:hi]
        p = ids.size
        to_c = center[None, :] - gb.pos[ids]
        dist = np.linalg.norm(to_c, axis=-1)
        ratio = np.clip(radius / np.maximum(dist, 1e-9), 0.0, 1.0 - 1e-12)
        cos_cap = np.sqrt(1.0 - ratio * ratio)
        axis = to_c / dist[:, None]
        t1, t2 = _onb(axis)
        uv = _chunk_uv(offsets, lo, hi, spp)
        ct = 1.0 - uv[..., 1] * (1.0 - cos_cap[:, None])
        st = np.sqrt(np.maximum(0.0, 1.0 - ct * ct))
        phi = 2.0 * np.pi * uv[..., 0]
        dirs = (ct[..., None] * axis[:, None, :]
                + (st * np.cos(phi))[..., None] * t1[:, None, :]
                + (st * np.sin(phi))[..., None] * t2[:, None, :])
        flat = dirs.reshape(-1, 3)
        origins = np.repeat(gb.pos[ids], spp, axis=0)
        # distance to the emitter sphere along each ray (rays inside the cone hit it)
        oc = origins - center[None, :]
        b = np.einsum("ij,ij->i", oc, flat)
        disc = b * b - (np.einsum("ij,ij->i", oc, oc) - radius * radius)
        hit_emit = disc > 0.0
        t_emit = np.where(hit_emit, -b - np.sqrt(np.where(hit_emit, disc, 0.0)), np.inf)
        vis = ~_occluded(scene, origins, flat, t_max=t_emit)
        vis &= hit_emit & (t_emit > _EPS)
        cosv = np.einsum("psj,pj->ps", dirs, gb.normal[ids])
        np.maximum(cosv, 0.0, out=cosv)
        inv_pdf = 2.0 * np.pi * (1.0 - cos_cap)
        mean = (cosv * vis.reshape(p, spp)).mean(axis=1)
        out[ids] = mean * inv_pdf / np.pi
    return out


def _diffuse_hemi_pass(scene, gb: _GBuffer, spp, seed, pass_code, cancel,
                       texture_model: _CuboidModel | None = None):
    """Cosine-sampled response to a constant unit environment or cuboid texture."""
    sel = np.flatnonzero(gb.mat == 0)
    rgb = texture_model is not None
    out = np.zeros((gb.pos.shape[0], 3)) if rgb else np.zeros(gb.pos.shape[0])
    if sel.size == 0:
        return out
    offsets = _pass_offsets(seed, pass_code, sel.size)
    for lo, hi in _chunk_ranges(sel.size, spp):
        _check_cancel(cancel)
        ids = sel[lo:hi]
        p = ids.size
        uv = _chunk_uv(offsets, lo, hi, spp)
        dirs = _cosine_dirs(gb.normal[ids], uv)
        flat = dirs.reshape(-1, 3)
        origins = np.repeat(gb.pos[ids], spp, axis=0)
        if rgb:
            rad = texture_model.radiance(scene, origins, flat)
            out[ids] = rad.reshape(p, spp, 3).mean(axis=1)
        else:
            vis = ~_occluded(scene, origins, flat)
            out[ids] = vis.reshape(p, spp).mean(axis=1)
    return out


def _specular_dirs(gb: _GBuffer, ids: np.ndarray, spp: int, seed: int):
    """Reflection directions: (P, S, 3) lobe samples and their weights (P, S)."""
    view = gb.view[ids]
    n = gb.normal[ids]
    refl = view - 2.0 * np.einsum("ij,ij->i", view, n)[:, None] * n
    mirror = gb.mat[ids] == 1
    if np.all(mirror):
        w = np.ones((ids.size, 1))
        return refl[:, None, :], w
    offsets = _pass_offsets(seed, _PASS_SPECULAR, int(ids.size))
    uv = _chunk_uv(offsets, 0, ids.size, spp)
    expo = gb.phong[ids][:, None]
    ct = uv[..., 1] ** (1.0 / (expo + 1.0))
    st = np.sqrt(np.maximum(0.0, 1.0 - ct * ct))
    phi = 2.0 * np.pi * uv[..., 0]
    t1, t2 = _onb(refl)
    dirs = (ct[..., None] * refl[:, None, :]
            + (st * np.cos(phi))[..., None] * t1[:, None, :]
            + (st * np.sin(phi))[..., None] * t2[:, None, :])
    cos_i = np.einsum("psj,pj->ps", dirs, n)
    w = np.where(cos_i > 0.0, (expo + 2.0) / (expo + 1.0) * np.minimum(cos_i, 1.0), 0.0)
    dirs[mirror] = refl[mirror][:, None, :]
    w[mirror] = 0.0
    w[mirror, 0] = float(spp)  # single deterministic sample; undo the lobe mean
    return dirs, w


def _specular_rgb(scene, gb, model_radiance, spp, seed, cancel) -> np.ndarray:
    """Mirror/glossy response where radiance comes from a callable model."""
    sel = np.flatnonzero(gb.mat != 0)
    out = np.zeros((gb.pos.shape[0], 3))
    if sel.size == 0:
        return out
    _check_cancel(cancel)
    dirs, w = _specular_dirs(gb, sel, spp, seed)
    p, s = w.shape
    flat = dirs.reshape(-1, 3)
    origins = np.repeat(gb.pos[sel], s, axis=0)
    rad = model_radiance(scene, origins, flat).reshape(p, s, 3)
    out[sel] = (rad * w[..., None]).mean(axis=1) * gb.albedo[sel]
    return out


def _specular_factors(scene, gb, model: _ParametricModel, spp, seed, cancel):
    """Mirror/glossy (ge, ga) scalar responses under the parametric model."""
    sel = np.flatnonzero(gb.mat != 0)
    ge = np.zeros(gb.pos.shape[0])
    ga = np.zeros(gb.pos.shape[0])
    if sel.size == 0:
        return ge, ga
    _check_cancel(cancel)
    dirs, w = _specular_dirs(gb, sel, spp, seed)
    p, s = w.shape
    flat = dirs.reshape(-1, 3)
    origins = np.repeat(gb.pos[sel], s, axis=0)
    fe, fa = model.factors(scene, origins, flat)
    ge[sel] = (fe.reshape(p, s) * w).mean(axis=1)
    ga[sel] = (fa.reshape(p, s) * w).mean(axis=1)
    return ge, ga


def _assemble(gb: _GBuffer, hit_rgb: np.ndarray, miss_rgb: np.ndarray) -> np.ndarray:
    img = np.zeros((gb.height * gb.width, 3))
    img[gb.hit] = hit_rgb
    img[~gb.hit] = miss_rgb
    return img.reshape(gb.height, gb.width, 3)


# ---------------------------------------------------------------------------
# Public render entry points
# ---------------------------------------------------------------------------

def render_ibl(scene: TestScene, env: EquirectImage, spp: int, seed: int,
               width: int = 128, height: int | None = None,
               cancel: Callable[[], bool] | None = None) -> RenderedImage:
    """Render the scene lit by an environment map (with shadow rays)."""
    if spp < 1:
        raise ValueError("spp must be >= 1")
    height = width if height is None else height
    gb = _gbuffer(scene, width, height)
    sampler = _EnvSampler(env)
    if sampler.total <= 0.0:
        return RenderedImage(np.zeros((height, width, 3)), spp, seed)
    model = _EnvModel(env)
    rgb = _diffuse_env_pass(scene, gb, sampler, spp, seed, cancel)
    rgb += _specular_rgb(scene, gb, model.radiance, spp, seed, cancel)
    if gb.miss_dirs.shape[0]:
        u, v = direction_to_pixel(gb.miss_dirs, env.width, env.height)
        miss = sample_bilinear(env.data, u, v).astype(np.float64)
    else:
        miss = np.zeros((0, 3))
    return RenderedImage(_assemble(gb, rgb, miss), spp, seed)


def emitter_geometry(scene: TestScene, light: ParametricLight, spp: int, seed: int,
                     width: int = 128, height: int | None = None,
                     cancel: Callable[[], bool] | None = None) -> np.ndarray:
    """(H, W, 3) response to the emitter sphere at unit radiance.

    The parametric render is linear in the light color, so a full render is
    ``emitter_geometry * c + ambient_geometry * a``; the two arrays double as
    the least-squares basis when fitting c and a.
    """
    height = width if height is None else height
    gb = _gbuffer(scene, width, height)
    center = light.direction * light.distance_m
    model = _ParametricModel(light.direction, light.distance_m, light.radius_m)
    ge = _diffuse_cap_pass(scene, gb, center, light.radius_m, spp, seed, cancel)
    hit_rgb = ge[:, None] * gb.albedo
    ge_s, _ = _specular_factors(scene, gb, model, spp, seed, cancel)
    hit_rgb += ge_s[:, None] * gb.albedo
    if gb.miss_dirs.shape[0]:
        fe, _ = model.factors(scene, np.broadcast_to(gb.cam_origin, gb.miss_dirs.shape),
                              gb.miss_dirs)
        miss = np.repeat(fe[:, None], 3, axis=1)
    else:
        miss = np.zeros((0, 3))
    return _assemble(gb, hit_rgb, miss)


_AMBIENT_CACHE: dict[tuple, np.ndarray] = {}


def ambient_geometry(scene: TestScene, spp: int, seed: int,
                     width: int = 128, height: int | None = None,
                     cancel: Callable[[], bool] | None = None) -> np.ndarray:
    """(H, W, 3) response to a unit constant environment.

    Light-independent, so results are cached per (scene, spp, seed, size);
    the returned array is read-only.
    """
    height = width if height is None else height
    key = (scene, spp, seed, width, height)
    cached = _AMBIENT_CACHE.get(key)
    if cached is not None:
        return cached
    gb = _gbuffer(scene, width, height)
    ga = _diffuse_hemi_pass(scene, gb, spp, seed, _PASS_AMBIENT, cancel)
    hit_rgb = ga[:, None] * gb.albedo
    sel = gb.mat != 0
    if np.any(sel):
        # constant environment: specular response is the unoccluded lobe mass
        dummy = _ParametricModel(np.array([0.0, 1.0, 0.0]), 1.0, 1e-9)
        _, ga_s = _specular_factors(scene, gb, dummy, spp, seed, cancel)
        hit_rgb += ga_s[:, None] * gb.albedo
    miss = np.ones((gb.miss_dirs.shape[0], 3))
    out = _assemble(gb, hit_rgb, miss)
    out.setflags(write=False)
    if len(_AMBIENT_CACHE) > 16:
        _AMBIENT_CACHE.clear()
    _AMBIENT_CACHE[key] = out
    return out


def render_parametric(scene: TestScene, light: ParametricLight, spp: int, seed: int,
                      width: int = 128, height: int | None = None,
                      cancel: Callable[[], bool] | None = None) -> RenderedImage:
    """Render under the spherical emitter plus constant ambient."""
    if spp < 1:
        raise ValueError("spp must be >= 1")
    ge = emitter_geometry(scene, light, spp, seed, width, height, cancel)
    ga = ambient_geometry(scene, spp, seed, width, height, cancel)
    img = ge * light.color[None, None, :] + ga * light.ambient[None, None, :]
    return RenderedImage(img, spp, seed)


def mask_cuboid_texture(ctex: CuboidTexture, light: ParametricLight) -> CuboidTexture:
    """Zero face texels whose direction from the camera falls in the light cap.

    Prevents double counting between the emitter pass and the texture pass.
    """
    cos_cap = np.cos(angular_radius(light))
    faces = []
    for f in ctex.faces:
        nv, nu = f.texels.shape[:2]
        gu = (np.arange(nu) + 0.5) / nu
        gv = (np.arange(nv) + 0.5) / nv
        pts = (f.origin[None, None, :]
               + gu[None, :, None] * f.u_axis[None, None, :]
               + gv[:, None, None] * f.v_axis[None, None, :])
        dirs = pts / np.linalg.norm(pts, axis=-1, keepdims=True)
        inside = (dirs @ light.direction) >= cos_cap
        texels = f.texels.copy()
        texels[inside] = 0.0
        faces.append(FaceTexture(f.name, f.origin, f.u_axis, f.v_axis, texels))
    return CuboidTexture(cuboid=ctex.cuboid, faces=tuple(faces))


def render_combined(scene: TestScene, light: ParametricLight, ctex: CuboidTexture,
                    spp: int, seed: int, width: int = 128, height: int | None = None,
                    cancel: Callable[[], bool] | None = None) -> RenderedImage:
    """Two-pass render: emitter sphere plus the masked textured cuboid.

    The texture must already carry the ambient rescale; its light-cap region
    is zeroed here before the texture pass.
    """
    if spp < 1:
        raise ValueError("spp must be >= 1")
    height = width if height is None else height
    gb = _gbuffer(scene, width, height)
    ge = emitter_geometry(scene, light, spp, seed, width, height, cancel)
    masked = mask_cuboid_texture(ctex, light)
    model = _CuboidModel(masked)
    tex_rgb = _diffuse_hemi_pass(scene, gb, spp, seed, _PASS_TEXTURE, cancel,
                                 texture_model=model)
    tex_rgb = tex_rgb * gb.albedo
    tex_rgb += _specular_rgb(scene, gb, model.radiance, spp, seed, cancel)
    if gb.miss_dirs.shape[0]:
        miss, _ = raycast_faces(masked, gb.cam_origin, gb.miss_dirs)
    else:
        miss = np.zeros((0, 3))
    img = ge * light.color[None, None, :] + _assemble(gb, tex_rgb, miss)
    return RenderedImage(img, spp, seed)


def primary_object_mask(scene: TestScene, width: int, height: int | None = None) -> np.ndarray:
    """(H, W) bool mask of pixels whose primary hit is a sphere (not plane/miss)."""
    height = width if height is None else height
    gb = _gbuffer(scene, width, height)
    mask = np.zeros(gb.height * gb.width, dtype=bool)
    hit_obj = np.zeros(gb.pos.shape[0], dtype=bool)
    hit_obj[~gb.on_plane] = True
    mask[gb.hit] = hit_obj
    return mask.reshape(gb.height, gb.width)


def composite_differential(background: np.ndarray, with_obj: np.ndarray,
                           without_obj: np.ndarray, obj_mask: np.ndarray) -> np.ndarray:
    """Differential compositing: paste objects, add their lighting delta.

    On the object mask the render wins; elsewhere the background picks up
    (with - without), i.e. shadows and bounce the objects add or remove.
    Values are clipped at zero.
    """
    background = np.asarray(background, dtype=np.float64)
    with_obj = np.asarray(with_obj, dtype=np.float64)
    without_obj = np.asarray(without_obj, dtype=np.float64)
    obj_mask = np.asarray(obj_mask, dtype=bool)
    if not (background.shape == with_obj.shape == without_obj.shape
            and obj_mask.shape == background.shape[:2]):
        raise ValueError(
            f"resolution mismatch: background {background.shape}, with {with_obj.shape}, "
            f"without {without_obj.shape}, mask {obj_mask.shape}")
    delta = background + (with_obj - without_obj)
    out = np.where(obj_mask[..., None], with_obj, delta)
    return np.maximum(out, 0.0)

