"""Room geometry: layout edge maps, cuboid corners, and texture warps.

The room proxy is a cuboid seen from a camera at the origin, 1.6 m above the
floor, looking at the horizon. Under those constraints floor corners
back-project onto the ground plane directly and the ceiling height follows
from the matching top corners.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .envmap import (
    EquirectImage,
    direction_grid,
    direction_to_pixel,
    pixel_to_direction,
    sample_bilinear,
)

__all__ = [
    "CAMERA_HEIGHT_M",
    "LayoutMap",
    "CuboidGeom",
    "CornerSet",
    "CornerDetectionError",
    "CuboidTexture",
    "FaceTexture",
    "project_corners",
    "detect_corners",
    "backproject",
    "render_layout",
    "sphere_to_cuboid_texture",
    "reproject_from_point",
]

CAMERA_HEIGHT_M = 1.6


class CornerDetectionError(ValueError):
    """Raised when a layout does not resolve to exactly four wall edges."""

    def __init__(self, message: str, candidates=()):
        listing = "; ".join(f"(u={u:.1f}, v={v:.1f})" for u, v in candidates)
        super().__init__(message + (f" [candidates: {listing}]" if listing else ""))
        self.candidates = list(candidates)


@dataclass(frozen=True)
class LayoutMap:
    """Binary equirect edge map marking wall/floor/ceiling intersections."""

    edges: np.ndarray  # (H, W) uint8, values 0/1

    def __post_init__(self) -> None:
        arr = np.asarray(self.edges)
        if arr.ndim != 2:
            raise ValueError(f"layout must be (H, W), got shape {arr.shape}")
        h, w = arr.shape
        if w != 2 * h or h < 2:
            raise ValueError(f"layout must be 2H x H, got {w} x {h}")
        vals = np.unique(arr)
        if not np.all(np.isin(vals, (0, 1))):
            raise ValueError("layout must be binary (0/1)")
        arr = np.ascontiguousarray(arr.astype(np.uint8))
        arr.setflags(write=False)
        object.__setattr__(self, "edges", arr)

    @property
    def width(self) -> int:
        return self.edges.shape[1]

    @property
    def height(self) -> int:
        return self.edges.shape[0]


def _point_in_plan(corners: np.ndarray, x: float, z: float, margin: float = 0.0) -> bool:
    """True if (x, z) is inside the convex quad *corners* by at least *margin*."""
    p = np.array([x, z])
    for i in range(4):
        a = corners[i]
        b = corners[(i + 1) % 4]
        e = b - a
        n = np.array([-e[1], e[0]])
        n = n / np.linalg.norm(n)
        s = float(np.dot(p - a, n))
        # orientation unknown; require consistent side with margin
        if i == 0:
            sign = 1.0 if s >= 0 else -1.0
        if sign * s < margin:
            return False
    return True


@dataclass(frozen=True)
class CuboidGeom:
    """Cuboid room: 4 floor corners (x, z) at y = -1.6 m, plus ceiling height.

    Corners are ordered by increasing azimuth as seen from the camera, which
    sits at the origin strictly inside the room.
    """

    floor_corners: np.ndarray  # (4, 2) [x, z] in meters
    ceiling_height_m: float

    def __post_init__(self) -> None:
        c = np.asarray(self.floor_corners, dtype=np.float64)
        if c.shape != (4, 2):
            raise ValueError(f"floor_corners must be (4, 2), got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("floor_corners contain non-finite values")
        # opposing faces parallel: the plan view must be a parallelogram with
        # a right angle (= rectangle), to 1e-6 m
        sides = np.array([np.linalg.norm(c[(i + 1) % 4] - c[i]) for i in range(4)])
        if np.any(sides < 1e-6):
            raise ValueError("floor corners are degenerate (zero-length side)")
        mid02 = (c[0] + c[2]) / 2.0
        mid13 = (c[1] + c[3]) / 2.0
        if np.linalg.norm(mid02 - mid13) > 1e-6:
            raise ValueError("floor corners do not form a rectangle (diagonal midpoints differ)")
        e0 = c[1] - c[0]
        e1 = c[2] - c[1]
        if abs(float(np.dot(e0, e1))) > 1e-6 * max(1.0, np.linalg.norm(e0) * np.linalg.norm(e1)):
            raise ValueError("floor corners do not form a rectangle (sides not orthogonal)")
        ch = float(self.ceiling_height_m)
        if not np.isfinite(ch) or ch <= CAMERA_HEIGHT_M:
            raise ValueError(
                f"ceiling_height_m must exceed the {CAMERA_HEIGHT_M} m camera height, got {ch}")
        if not _point_in_plan(c, 0.0, 0.0, margin=1e-9):
            raise ValueError("camera (origin) is not inside the cuboid plan")
        c.setflags(write=False)
        object.__setattr__(self, "floor_corners", c)
        object.__setattr__(self, "ceiling_height_m", ch)

    @property
    def floor_y(self) -> float:
        return -CAMERA_HEIGHT_M

    @property
    def ceiling_y(self) -> float:
        return self.ceiling_height_m - CAMERA_HEIGHT_M

    def side_lengths(self) -> np.ndarray:
        c = self.floor_corners
        return np.array([np.linalg.norm(c[(i + 1) % 4] - c[i]) for i in range(4)])

    def contains(self, point, margin: float = 1e-9) -> bool:
        x, y, z = (float(v) for v in point)
        if not (self.floor_y + margin < y < self.ceiling_y - margin):
            return False
        return _point_in_plan(self.floor_corners, x, z, margin=margin)


@dataclass(frozen=True)
class CornerSet:
    """Detected or projected cuboid corners in continuous pixel coordinates.

    Row i of ``floor_uv`` and ``ceiling_uv`` share (approximately) one
    azimuth: they belong to the same vertical wall edge. Rows are ordered by
    increasing azimuth, starting from the corner closest to longitude -pi.
    """

    floor_uv: np.ndarray    # (4, 2) columns (u, v)
    ceiling_uv: np.ndarray  # (4, 2)
    width: int
    height: int

    def __post_init__(self) -> None:
        for name in ("floor_uv", "ceiling_uv"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != (4, 2):
                raise ValueError(f"{name} must be (4, 2), got {arr.shape}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def _corner_order(cuboid: CuboidGeom) -> np.ndarray:
    az = np.arctan2(cuboid.floor_corners[:, 0], -cuboid.floor_corners[:, 1])
    return np.argsort(az, kind="stable")


def project_corners(cuboid: CuboidGeom, width: int, height: int) -> CornerSet:
    """Exact projection of the 8 cuboid corners into pixel coordinates."""
    order = _corner_order(cuboid)
    c = cuboid.floor_corners[order]
    floor_pts = np.column_stack([c[:, 0], np.full(4, cuboid.floor_y), c[:, 1]])
    ceil_pts = np.column_stack([c[:, 0], np.full(4, cuboid.ceiling_y), c[:, 1]])
    fu, fv = direction_to_pixel(floor_pts, width, height)
    cu, cv = direction_to_pixel(ceil_pts, width, height)
    return CornerSet(np.column_stack([fu, fv]), np.column_stack([cu, cv]), width, height)


# ---------------------------------------------------------------------------
# Layout rendering
# ---------------------------------------------------------------------------

def _stamp_boundary(edges: np.ndarray, corners: np.ndarray, y_plane: float) -> None:
    """Rasterize the closed wall/plane intersection polygon, one pixel per column.

    For every image column, intersect the column's azimuth ray with each wall
    segment in plan view and mark the row where the boundary sits. Within a
    wall the bearing from the camera is monotone, so this yields thin curves.
    """
    h, w = edges.shape
    theta = 2.0 * np.pi * (np.arange(w) + 0.5) / w - np.pi
    ray = np.stack([np.sin(theta), -np.cos(theta)], axis=1)  # (W, 2) in (x, z)
    for i in range(4):
        a = corners[i]
        b = corners[(i + 1) % 4]
        e = b - a
        # solve a + t*e = r*ray  =>  [e, -ray] [t, r]^T = -a
        det = e[0] * (-ray[:, 1]) - e[1] * (-ray[:, 0])
        ok = np.abs(det) > 1e-12
        t = (-a[0] * (-ray[:, 1]) - (-a[1]) * (-ray[:, 0])) / np.where(ok, det, 1.0)
        r = (e[0] * (-a[1]) - e[1] * (-a[0])) / np.where(ok, det, 1.0)
        hit = ok & (t >= 0.0) & (t <= 1.0) & (r > 1e-9)
        if not np.any(hit):
            continue
        elev = np.arctan2(y_plane, r[hit])
        v = (np.pi / 2.0 - elev) * h / np.pi - 0.5
        vi = np.clip(np.round(v).astype(np.int64), 0, h - 1)
        edges[vi, np.arange(w)[hit]] = 1


def render_layout(cuboid: CuboidGeom, width: int = 1024, height: int = 512) -> LayoutMap:
    """Forward-render a cuboid into a binary layout edge map.

    Twelve edges: floor and ceiling boundary polygons (one pixel per column)
    and four vertical wall edges (one pixel per row).
    """
    edges = np.zeros((height, width), dtype=np.uint8)
    order = _corner_order(cuboid)
    c = cuboid.floor_corners[order]
    _stamp_boundary(edges, c, cuboid.floor_y)
    _stamp_boundary(edges, c, cuboid.ceiling_y)
    cs = project_corners(cuboid, width, height)
    for i in range(4):
        u = int(np.round(cs.floor_uv[i, 0])) % width
        v_lo = int(np.round(cs.ceiling_uv[i, 1]))
        v_hi = int(np.round(cs.floor_uv[i, 1]))
        edges[max(v_lo, 0):min(v_hi, height - 1) + 1, u] = 1
    return LayoutMap(edges)


# ---------------------------------------------------------------------------
# Corner detection
# ---------------------------------------------------------------------------

def _vertical_runs(column: np.ndarray) -> list[tuple[int, int]]:
    """Maximal runs of set pixels in a column as (start, end) inclusive."""
    idx = np.flatnonzero(column)
    if idx.size == 0:
        return []
    breaks = np.flatnonzero(np.diff(idx) > 1)
    starts = np.concatenate([[0], breaks + 1])
    ends = np.concatenate([breaks, [idx.size - 1]])
    return [(int(idx[s]), int(idx[e])) for s, e in zip(starts, ends)]


def detect_corners(layout: LayoutMap) -> CornerSet:
    """Locate the 4 floor and 4 ceiling corners of a cuboid wireframe.

    Vertical wall edges respond to a vertical high-pass: they are the only
    structures forming long vertical runs that cross the horizon row. Their
    endpoints are the corners. Raises CornerDetectionError when the image
    does not contain exactly four such edges.
    """
    edges = layout.edges
    h, w = edges.shape
    horizon = h / 2.0 - 0.5
    min_len = max(3, h // 32)

    hits: list[tuple[int, int, int]] = []  # (u, v_top, v_bottom)
    for u in range(w):
        for v0, v1 in _vertical_runs(edges[:, u]):
            if v1 - v0 + 1 >= min_len and v0 < horizon < v1:
                hits.append((u, v0, v1))
    if not hits:
        raise CornerDetectionError("no vertical wall edges found in layout")

    # cluster hits on adjacent columns (wrap-aware)
    hits.sort()
    clusters: list[list[tuple[int, int, int]]] = [[hits[0]]]
    for item in hits[1:]:
        if item[0] - clusters[-1][-1][0] <= 1:
            clusters[-1].append(item)
        else:
            clusters.append([item])
    if len(clusters) > 1 and (clusters[0][0][0] + w) - clusters[-1][-1][0] <= 1:
        clusters[0] = clusters.pop() + clusters[0]

    if len(clusters) != 4:
        cands = [(float(np.mean([it[0] for it in cl])), float(np.mean([it[1] for it in cl])))
                 for cl in clusters]
        raise CornerDetectionError(
            f"expected 4 vertical wall edges, found {len(clusters)}", cands)

    corners = []
    for cl in clusters:
        us = np.array([it[0] for it in cl], dtype=np.float64)
        if us.max() - us.min() > w / 2:  # cluster spans the seam
            us = np.where(us < w / 2, us + w, us)
        u_mean = float(np.mean(us)) % w
        v_top = float(min(it[1] for it in cl))
        v_bot = float(max(it[2] for it in cl))
        corners.append((u_mean, v_top, v_bot))
    corners.sort(key=lambda c: c[0])

    floor_uv = np.array([[u, vb] for u, _, vb in corners])
    ceil_uv = np.array([[u, vt] for u, vt, _ in corners])
    return CornerSet(floor_uv, ceil_uv, w, h)


# ---------------------------------------------------------------------------
# Back-projection
# ---------------------------------------------------------------------------

def _fit_rectangle(points: np.ndarray) -> np.ndarray:
    """Least-squares rotated rectangle through 4 plan points, preserving order."""
    center = points.mean(axis=0)
    q = points - center

    def residual(theta: float) -> float:
        ct, st = np.cos(theta), np.sin(theta)
        x = q[:, 0] * ct + q[:, 1] * st
        z = -q[:, 0] * st + q[:, 1] * ct
        return float(np.sum((np.abs(x) - np.abs(x).mean()) ** 2)
                     + np.sum((np.abs(z) - np.abs(z).mean()) ** 2))

    grid = np.linspace(0.0, np.pi / 2.0, 181)
    theta = grid[int(np.argmin([residual(t) for t in grid]))]
    # local parabolic refinement
    step = np.pi / 360.0
    for _ in range(40):
        r0, r1, r2 = residual(theta - step), residual(theta), residual(theta + step)
        denom = r0 - 2.0 * r1 + r2
        if abs(denom) > 1e-18:
            theta += step * np.clip(0.5 * (r0 - r2) / denom, -1.0, 1.0)
        step *= 0.5

    ct, st = np.cos(theta), np.sin(theta)
    x = q[:, 0] * ct + q[:, 1] * st
    z = -q[:, 0] * st + q[:, 1] * ct
    a = np.abs(x).mean()
    b = np.abs(z).mean()
    sx = np.sign(x)
    sz = np.sign(z)
    if len({(float(i), float(j)) for i, j in zip(sx, sz)}) != 4:
        raise ValueError("degenerate corner layout: points do not span four quadrants")
    out = np.empty_like(points)
    out[:, 0] = center[0] + (sx * a) * ct - (sz * b) * st
    out[:, 1] = center[1] + (sx * a) * st + (sz * b) * ct
    return out


def backproject(corners: CornerSet) -> CuboidGeom:
    """Lift detected corners to a 3D cuboid under the fixed-camera constraints.

    Floor corner rays are intersected with the ground plane; a least-squares
    rectangle is fitted to the resulting plan points. The ceiling height is
    the mean of the four per-corner estimates, each obtained by intersecting
    the top-corner ray with the vertical line through its floor corner.
    """
    w, h = corners.width, corners.height
    fdir = pixel_to_direction(corners.floor_uv[:, 0], corners.floor_uv[:, 1], w, h)
    if np.any(fdir[:, 1] >= -1e-9):
        bad = int(np.argmax(fdir[:, 1]))
        raise ValueError(
            f"floor corner {bad} at or above the horizon: no ground intersection")
    t = -CAMERA_HEIGHT_M / fdir[:, 1]
    plan = np.column_stack([t * fdir[:, 0], t * fdir[:, 2]])
    plan = _fit_rectangle(plan)

    cdir = pixel_to_direction(corners.ceiling_uv[:, 0], corners.ceiling_uv[:, 1], w, h)
    horiz = cdir[:, [0, 2]]
    denom = np.einsum("ij,ij->i", horiz, horiz)
    if np.any(denom < 1e-12):
        raise ValueError("ceiling corner ray is vertical: cannot meet its wall edge")
    s = np.einsum("ij,ij->i", horiz, plan) / denom
    if np.any(s <= 0):
        raise ValueError("ceiling corner points away from its floor corner")
    heights = s * cdir[:, 1] + CAMERA_HEIGHT_M
    ceiling = float(np.mean(heights))
    return CuboidGeom(floor_corners=plan, ceiling_height_m=ceiling)


# ---------------------------------------------------------------------------
# Texture warps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FaceTexture:
    name: str
    origin: np.ndarray   # (3,) corner of the face
    u_axis: np.ndarray   # (3,) spans the face horizontally (or floor edge 0)
    v_axis: np.ndarray   # (3,) spans the remaining direction
    texels: np.ndarray   # (nv, nu, 3) float32

    def __post_init__(self) -> None:
        for name in ("origin", "u_axis", "v_axis"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        tex = np.ascontiguousarray(np.asarray(self.texels, dtype=np.float32))
        tex.setflags(write=False)
        object.__setattr__(self, "texels", tex)

    @property
    def normal(self) -> np.ndarray:
        n = np.cross(self.u_axis, self.v_axis)
        return n / np.linalg.norm(n)


@dataclass(frozen=True)
class CuboidTexture:
    """Cuboid with per-face textures warped from a panorama."""

    cuboid: CuboidGeom
    faces: tuple[FaceTexture, ...]


def _face_frames(cuboid: CuboidGeom) -> list[tuple[str, np.ndarray, np.ndarray, np.ndarray]]:
    c = cuboid.floor_corners
    fy, cy = cuboid.floor_y, cuboid.ceiling_y
    frames = []
    for i in range(4):
        a, b = c[i], c[(i + 1) % 4]
        origin = np.array([a[0], fy, a[1]])
        u_axis = np.array([b[0] - a[0], 0.0, b[1] - a[1]])
        v_axis = np.array([0.0, cy - fy, 0.0])
        frames.append((f"wall{i}", origin, u_axis, v_axis))
    e01 = c[1] - c[0]
    e03 = c[3] - c[0]
    frames.append(("floor",
                   np.array([c[0][0], fy, c[0][1]]),
                   np.array([e01[0], 0.0, e01[1]]),
                   np.array([e03[0], 0.0, e03[1]])))
    frames.append(("ceiling",
                   np.array([c[0][0], cy, c[0][1]]),
                   np.array([e01[0], 0.0, e01[1]]),
                   np.array([e03[0], 0.0, e03[1]])))
    return frames


def sphere_to_cuboid_texture(pano: EquirectImage, cuboid: CuboidGeom,
                             longest_edge: int = 256) -> CuboidTexture:
    """Warp a panorama onto the cuboid faces by sampling along camera rays.

    Texel grids are sized proportionally to face edge lengths so world-space
    sampling stays near isotropic, with *longest_edge* texels on the longest
    face edge.
    """
    frames = _face_frames(cuboid)
    max_len = max(max(np.linalg.norm(u), np.linalg.norm(v)) for _, _, u, v in frames)
    faces = []
    for name, origin, u_axis, v_axis in frames:
        nu = max(2, int(round(longest_edge * np.linalg.norm(u_axis) / max_len)))
        nv = max(2, int(round(longest_edge * np.linalg.norm(v_axis) / max_len)))
        gu = (np.arange(nu) + 0.5) / nu
        gv = (np.arange(nv) + 0.5) / nv
        pts = (origin[None, None, :]
               + gu[None, :, None] * u_axis[None, None, :]
               + gv[:, None, None] * v_axis[None, None, :])
        u_px, v_px = direction_to_pixel(pts, pano.width, pano.height)
        texels = sample_bilinear(pano.data, u_px, v_px)
        faces.append(FaceTexture(name, origin, u_axis, v_axis, texels))
    return CuboidTexture(cuboid=cuboid, faces=tuple(faces))


def raycast_faces(ctex: CuboidTexture, origins: np.ndarray, dirs: np.ndarray,
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Intersect rays with the textured faces.

    *origins* is (3,) or (N, 3); *dirs* is (N, 3). Returns (radiance (N, 3)
    float64, t_hit (N,)). Rays that miss every face get t = inf and black.
    """
    dirs = np.asarray(dirs, dtype=np.float64)
    n_rays = dirs.shape[0]
    origins = np.broadcast_to(np.asarray(origins, dtype=np.float64), (n_rays, 3))
    best_t = np.full(n_rays, np.inf)
    radiance = np.zeros((n_rays, 3))
    for face in ctex.faces:
        n = face.normal
        denom = dirs @ n
        ok = np.abs(denom) > 1e-12
        t = np.where(ok, ((face.origin - origins) @ n) / np.where(ok, denom, 1.0), np.inf)
        ok &= t > 1e-9
        if not np.any(ok):
            continue
        q = origins + t[:, None] * dirs - face.origin
        ulen2 = float(face.u_axis @ face.u_axis)
        vlen2 = float(face.v_axis @ face.v_axis)
        a = (q @ face.u_axis) / ulen2
        b = (q @ face.v_axis) / vlen2
        ok &= (a >= -1e-7) & (a <= 1.0 + 1e-7) & (b >= -1e-7) & (b <= 1.0 + 1e-7)
        ok &= t < best_t
        if not np.any(ok):
            continue
        nv, nu = face.texels.shape[:2]
        ua = np.clip(a[ok], 0.0, 1.0) * nu - 0.5
        vb = np.clip(b[ok], 0.0, 1.0) * nv - 0.5
        radiance[ok] = sample_bilinear(face.texels, ua, vb, wrap_u=False)
        best_t[ok] = t[ok]
    return radiance, best_t


def reproject_from_point(ctex: CuboidTexture, point, width: int, height: int,
                         ) -> EquirectImage:
    """Render the textured cuboid as an equirect image seen from *point*."""
    point = np.asarray(point, dtype=np.float64).reshape(3)
    if not ctex.cuboid.contains(point, margin=1e-9):
        raise ValueError(f"viewpoint {point.tolist()} is not strictly inside the cuboid")
    dirs = direction_grid(width, height).reshape(-1, 3)
    radiance, t = raycast_faces(ctex, point, dirs)
    if not np.all(np.isfinite(t)):
        raise ValueError("reprojection ray escaped the cuboid (degenerate geometry)")
    img = radiance.reshape(height, width, 3)
    return EquirectImage(np.maximum(img, 0.0).astype(np.float32), is_hdr=ctex_is_hdr(ctex))


def ctex_is_hdr(ctex: CuboidTexture) -> bool:
    return bool(max(float(f.texels.max(initial=0.0)) for f in ctex.faces) > 1.0 + 1e-5)
