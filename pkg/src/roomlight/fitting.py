"""Ground-truth light extraction from HDR panoramas.

The pipeline: grow bright regions from luminance seeds, pick the region that
dominates a probe render, initialize the parametric light from the region's
geometry, least-squares fit its color and ambient against an image-based
render, then polish everything with Adam on the rendering loss. Gradients
come from central finite differences with common random numbers: every probe
render reuses the seed of the target render, so the loss is a deterministic
function of the parameters.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage
from scipy.optimize import nnls
from sklearn.base import BaseEstimator

from .envmap import (
    EquirectImage,
    direction_grid,
    luminance,
    solid_angle_map,
)
from .light import (
    ParametricLight,
    azimuth_of,
    direction_from_angles,
    elevation_of,
)
from .rendering import (
    RenderedImage,
    ambient_geometry,
    emitter_geometry,
    render_ibl,
)
from .scenes import TestScene, grid3x3

__all__ = [
    "LightRegion",
    "FitReport",
    "FitSettings",
    "detect_light_regions",
    "select_dominant",
    "init_params",
    "fit_color_ambient",
    "refine_adam",
    "rescale_texture",
    "strongest_light_ratio",
    "detect_bright_ldr",
    "DominantLightEstimator",
]

GROW_THRESHOLD = 0.5        # neighbors join a region above this fraction of the seed
SEED_STOP_MEDIAN_MULT = 5.0  # stop seeding below this multiple of the median luminance
DEFAULT_DISTANCE_M = 3.0


@dataclass(frozen=True)
class LightRegion:
    """A connected bright region of a panorama.

    ``axes_rad`` are the major/minor half-angles of an ellipse fitted to the
    member directions by solid-angle-weighted PCA.
    """

    pixels: np.ndarray          # (N, 2) rows (v, u)
    centroid: np.ndarray        # (3,) unit direction
    mean_radiance: np.ndarray   # (3,) solid-angle-weighted mean RGB
    axes_rad: tuple[float, float]
    width: int
    height: int

    def __post_init__(self) -> None:
        px = np.asarray(self.pixels, dtype=np.int64)
        if px.ndim != 2 or px.shape[1] != 2 or px.shape[0] == 0:
            raise ValueError("region needs a non-empty (N, 2) pixel list")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    def mask(self) -> np.ndarray:
        m = np.zeros((self.height, self.width), dtype=bool)
        m[self.pixels[:, 0], self.pixels[:, 1]] = True
        return m

    def angular_size(self) -> float:
        """Mean of the ellipse half-angles."""
        return float(0.5 * (self.axes_rad[0] + self.axes_rad[1]))


@dataclass(frozen=True)
class FitReport:
    initial: ParametricLight
    refined: ParametricLight
    losses: tuple[float, ...]
    final_loss: float
    energy_ratio: float | None = None
    diverged: bool = False

    def __post_init__(self) -> None:
        if not all(np.isfinite(v) for v in self.losses):
            raise ValueError("loss trace contains non-finite values")
        if self.losses and self.final_loss > self.losses[0] + 1e-12:
            raise ValueError("final loss exceeds initial loss")


def _region_from_mask(hdr: EquirectImage, mask: np.ndarray) -> LightRegion:
    h, w = mask.shape
    vs, us = np.nonzero(mask)
    omega = solid_angle_map(w, h)[vs]
    dirs = direction_grid(w, h)[vs, us]
    wsum = omega.sum()
    centroid = (dirs * omega[:, None]).sum(axis=0)
    norm = np.linalg.norm(centroid)
    centroid = centroid / norm if norm > 0 else np.array([0.0, 1.0, 0.0])
    mean_rgb = (hdr.data[vs, us].astype(np.float64) * omega[:, None]).sum(axis=0) / wsum

    # ellipse axes: weighted PCA of directions projected on the tangent plane
    t1 = np.cross(np.array([0.0, 1.0, 0.0]), centroid)
    if np.linalg.norm(t1) < 1e-9:
        t1 = np.cross(np.array([1.0, 0.0, 0.0]), centroid)
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(centroid, t1)
    proj = np.stack([dirs @ t1, dirs @ t2], axis=1)
    mean = (proj * omega[:, None]).sum(axis=0) / wsum
    d = proj - mean
    cov = (d[:, :, None] * d[:, None, :] * omega[:, None, None]).sum(axis=0) / wsum
    # half a pixel of spread keeps single-pixel regions from degenerating
    floor = (np.pi / h / 2.0) ** 2 / 4.0
    eig = np.maximum(np.linalg.eigvalsh(cov), floor)
    minor, major = 2.0 * np.sqrt(eig)
    axes = (float(np.arcsin(np.clip(major, 0.0, 1.0))),
            float(np.arcsin(np.clip(minor, 0.0, 1.0))))
    return LightRegion(np.column_stack([vs, us]), centroid, mean_rgb, axes, w, h)


def _grow(lum: np.ndarray, seed_vu: tuple[int, int], live: np.ndarray) -> np.ndarray:
    """Flood the 8-connected (horizontally wrapping) region above the grow threshold."""
    thresh = GROW_THRESHOLD * lum[seed_vu]
    eligible = live & (lum >= thresh)
    wide = np.concatenate([eligible, eligible, eligible], axis=1)
    labels, _ = ndimage.label(wide, structure=np.ones((3, 3), dtype=int))
    w = lum.shape[1]
    lab = labels[seed_vu[0], seed_vu[1] + w]
    region = labels[:, w:2 * w] == lab
    region |= labels[:, :w] == lab
    region |= labels[:, 2 * w:] == lab
    return region & eligible


def detect_light_regions(hdr: EquirectImage, n: int = 5) -> list[LightRegion]:
    """Grow up to *n* bright regions, brightest seed first.

    Seeding stops once the brightest remaining pixel is dimmer than five
    times the median luminance of the panorama.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    lum = hdr.luminance()
    median = float(np.median(lum))
    live = np.ones(lum.shape, dtype=bool)
    regions: list[LightRegion] = []
    while len(regions) < n:
        masked = np.where(live, lum, -1.0)
        seed_flat = int(np.argmax(masked))
        seed_vu = np.unravel_index(seed_flat, lum.shape)
        seed_val = float(lum[seed_vu])
        if seed_val <= 0.0 or seed_val < SEED_STOP_MEDIAN_MULT * median:
            break
        region = _grow(lum, seed_vu, live)
        regions.append(_region_from_mask(hdr, region))
        live &= ~region
    return regions


def _masked_env(hdr: EquirectImage, mask: np.ndarray) -> EquirectImage:
    data = np.where(mask[..., None], hdr.data, 0.0).astype(np.float32)
    return EquirectImage(data, is_hdr=True)


def select_dominant(regions: list[LightRegion], hdr: EquirectImage,
                    scene: TestScene | None = None, resolution: int = 32,
                    spp: int = 16, seed: int = 0) -> LightRegion:
    """The region whose solo render of the probe scene is brightest.

    Ties break toward the earlier (brighter-seeded) region.
    """
    if not regions:
        raise ValueError("no regions to choose from")
    if len(regions) == 1:
        return regions[0]
    scene = scene or grid3x3()
    best_idx, best_val = 0, -1.0
    for i, region in enumerate(regions):
        render = render_ibl(scene, _masked_env(hdr, region.mask()), spp, seed,
                            width=resolution)
        val = float(luminance(render.data).mean())
        if val > best_val + 1e-15:
            best_idx, best_val = i, val
    return regions[best_idx]


def init_params(region: LightRegion, hdr: EquirectImage,
                depth: np.ndarray | None = None,
                scene: TestScene | None = None,
                resolution: int = 64, spp: int = 64, seed: int = 0,
                default_distance_m: float = DEFAULT_DISTANCE_M,
                ) -> ParametricLight:
    """Initial parametric light from a region's geometry plus a color fit.

    Distance comes from the mean depth over the region when a per-pixel depth
    map is supplied, else a 3 m default. The emitter radius realizes the
    region's mean ellipse half-angle at that distance.
    """
    if depth is not None:
        depth = np.asarray(depth, dtype=np.float64)
        if depth.shape != (region.height, region.width):
            raise ValueError(
                f"depth map shape {depth.shape} does not match panorama "
                f"({region.height}, {region.width})")
        d = float(depth[region.pixels[:, 0], region.pixels[:, 1]].mean())
        if not np.isfinite(d) or d <= 0:
            raise ValueError("region depth must be positive")
    else:
        d = float(default_distance_m)
    ang = min(region.angular_size(), np.pi / 2 - 1e-6)
    radius = max(d * float(np.sin(ang)), 1e-6 * d)
    geom = ParametricLight(direction=region.centroid, distance_m=d, radius_m=radius,
                           color=(1.0, 1.0, 1.0), ambient=(0.0, 0.0, 0.0))
    c, a = fit_color_ambient(geom, hdr, scene=scene, resolution=resolution,
                             spp=spp, seed=seed)
    return replace(geom, color=c, ambient=a)


def fit_color_ambient(light: ParametricLight, hdr: EquirectImage,
                      scene: TestScene | None = None, resolution: int = 64,
                      spp: int = 64, seed: int = 0,
                      target: RenderedImage | None = None,
                      ) -> tuple[np.ndarray, np.ndarray]:
    """Non-negative least squares for (c, a) against an image-based render.

    Solves, per channel, min ||c * B_light + a * B_amb - target||^2 where the
    bases are renders of the probe scene under a unit-radiance emitter and a
    unit ambient. All three renders share one seed.
    """
    scene = scene or grid3x3()
    b_light = emitter_geometry(scene, light, spp, seed, width=resolution)
    b_amb = ambient_geometry(scene, spp, seed, width=resolution)
    if target is None:
        target = render_ibl(scene, hdr, spp, seed, width=resolution)
    if target.data.shape != b_light.shape:
        raise ValueError("target resolution does not match the basis renders")
    c = np.zeros(3)
    a = np.zeros(3)
    for ch in range(3):
        basis = np.column_stack([b_light[..., ch].ravel(), b_amb[..., ch].ravel()])
        y = target.data[..., ch].ravel()
        scale = np.linalg.norm(basis, axis=0)
        if np.any(scale < 1e-12):
            warnings.warn("degenerate lighting basis; falling back to ambient-only fit")
            return np.zeros(3), np.full(3, float(target.data.mean()))
        sol, _ = nnls(basis / scale, y)
        c[ch], a[ch] = sol / scale
    return c, a


@dataclass(frozen=True)
class FitSettings:
    """Knobs of the Adam refinement and its probe renders.

    ``target_spp`` is for callers building the reference render: it is paid
    once per fit, so a clean target is cheap and keeps the sampling pedestal
    of the loss from tilting the optimum.
    """

    iters: int = 150
    lr: float = 0.02
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    resolution: int = 48
    spp: int = 8
    target_spp: int = 64
    step_angle: float = np.radians(0.5)  # finite-difference steps
    step_rel: float = 0.01
    step_color_floor: float = 1e-3


def _cap_coverage(d: float, s: float) -> float:
    """Fraction of the sphere the emitter cap covers: (1 - cos of half-angle) / 2."""
    ratio = min(s / d, 1.0 - 1e-12)
    return float(0.5 * (1.0 - np.sqrt(1.0 - ratio * ratio)))


def _light_from_params(theta: np.ndarray) -> ParametricLight:
    """Decode the optimizer vector; the color entries carry emitter flux.

    Internally the emitter color is parameterized as flux (color times cap
    coverage): radius and brightness then vary independently, where raw
    (radius, color) fight along a near-degenerate valley of the render loss.
    The exposed parameters are the usual ones.
    """
    az, el, d, s = theta[:4]
    el = float(np.clip(el, -np.pi / 2, np.pi / 2))
    d = float(max(d, 1e-3))
    s = float(np.clip(s, 1e-6 * d, 0.99 * d))
    cov = _cap_coverage(d, s)
    return ParametricLight(
        direction=direction_from_angles(float(az), el),
        distance_m=d, radius_m=s,
        color=np.maximum(theta[4:7], 0.0) / cov,
        ambient=np.maximum(theta[7:10], 0.0),
    )


def _params_from_light(light: ParametricLight) -> np.ndarray:
    cov = _cap_coverage(light.distance_m, light.radius_m)
    return np.concatenate([
        [azimuth_of(light), elevation_of(light), light.distance_m, light.radius_m],
        light.color * cov, light.ambient,
    ])


def refine_adam(p0: ParametricLight, target: RenderedImage,
                settings: FitSettings | None = None,
                iters: int | None = None, lr: float | None = None,
                scene: TestScene | None = None) -> FitReport:
    """Minimize the mean squared render difference with Adam.

    The probe renders reuse the target's seed (common random numbers), so
    finite differences see no sampling noise. Parameters are re-projected to
    their legal ranges after every step, and the best iterate is kept.
    Aborts early (with ``diverged=True``) if the loss blows past 10x its
    starting value.
    """
    settings = settings or FitSettings()
    if iters is not None:
        settings = replace(settings, iters=iters)
    if lr is not None:
        settings = replace(settings, lr=lr)
    if settings.iters < 0:
        raise ValueError("iters must be >= 0")
    scene = scene or grid3x3()
    seed = target.seed
    res = target.data.shape[1]
    if target.data.shape[0] != res:
        raise ValueError("refinement expects square targets")
    spp = settings.spp
    tgt = target.data
    g_amb = ambient_geometry(scene, spp, seed, width=res)

    def decode_colors(theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        d = max(theta[2], 1e-3)
        s = float(np.clip(theta[3], 1e-6 * d, 0.99 * d))
        cov = _cap_coverage(d, s)
        return np.maximum(theta[4:7], 0.0) / cov, np.maximum(theta[7:10], 0.0)

    def emitter(theta: np.ndarray) -> np.ndarray:
        light = _light_from_params(theta)
        return emitter_geometry(scene, light, spp, seed, width=res)

    def loss_of(ge: np.ndarray, theta: np.ndarray) -> float:
        c, a = decode_colors(theta)
        img = ge * c + g_amb * a
        return float(np.mean((img - tgt) ** 2))

    theta = _params_from_light(p0)
    ge = emitter(theta)
    loss0 = loss_of(ge, theta)
    losses = [loss0]
    best_theta = theta.copy()
    best_loss = loss0

    # per-parameter step scale: angles move in radians, metric, flux, and
    # radiance terms move relative to their starting magnitude
    scale = np.ones(10)
    scale[2:4] = np.maximum(np.abs(theta[2:4]), 1e-2)
    scale[4:7] = np.maximum(np.abs(theta[4:7]), 1e-4)
    scale[7:] = np.maximum(np.abs(theta[7:]), 1e-3)
    flux_floor = settings.step_color_floor * _cap_coverage(
        max(theta[2], 1e-3), max(theta[3], 1e-6))

    m = np.zeros(10)
    v = np.zeros(10)
    diverged = False
    for it in range(1, settings.iters + 1):
        grad = np.zeros(10)
        # geometric parameters need probe renders; color terms are closed-form
        for j in range(4):
            h = settings.step_angle if j < 2 else settings.step_rel * max(abs(theta[j]), 1e-6)
            tp, tm = theta.copy(), theta.copy()
            tp[j] += h
            tm[j] -= h
            grad[j] = (loss_of(emitter(tp), tp) - loss_of(emitter(tm), tm)) / (2 * h)
        for j in range(4, 10):
            floor = flux_floor if j < 7 else settings.step_color_floor
            h = max(settings.step_rel * abs(theta[j]), floor)
            tp, tm = theta.copy(), theta.copy()
            tp[j] += h
            tm[j] -= h
            grad[j] = (loss_of(ge, tp) - loss_of(ge, tm)) / (2 * h)

        m = settings.beta1 * m + (1 - settings.beta1) * grad
        v = settings.beta2 * v + (1 - settings.beta2) * grad * grad
        m_hat = m / (1 - settings.beta1 ** it)
        v_hat = v / (1 - settings.beta2 ** it)
        theta = theta - settings.lr * scale * m_hat / (np.sqrt(v_hat) + settings.eps)

        # re-project to legal ranges
        theta[0] = (theta[0] + np.pi) % (2 * np.pi) - np.pi
        theta[1] = np.clip(theta[1], -np.pi / 2, np.pi / 2)
        theta[2] = max(theta[2], 1e-3)
        theta[3] = float(np.clip(theta[3], 1e-6 * theta[2], 0.99 * theta[2]))
        theta[4:] = np.maximum(theta[4:], 0.0)

        ge = emitter(theta)
        cur = loss_of(ge, theta)
        losses.append(cur)
        if cur < best_loss:
            best_loss = cur
            best_theta = theta.copy()
        if cur > 10.0 * max(loss0, 1e-30):
            diverged = True
            break

    refined = _light_from_params(best_theta)
    return FitReport(initial=p0, refined=refined, losses=tuple(losses),
                     final_loss=best_loss, diverged=diverged)


def rescale_texture(texture: EquirectImage, a_fit) -> EquirectImage:
    """Scale each channel so the solid-angle-weighted mean equals the fitted ambient."""
    a_fit = np.asarray(a_fit, dtype=np.float64).reshape(3)
    if np.any(a_fit < 0):
        raise ValueError("ambient target must be non-negative")
    omega = solid_angle_map(texture.width, texture.height)
    weights = np.broadcast_to(omega[:, None], texture.data.shape[:2])
    mean = (texture.data.astype(np.float64) * weights[..., None]).sum(axis=(0, 1)) \
        / weights.sum()
    scale = np.ones(3)
    for ch in range(3):
        if mean[ch] <= 0.0:
            if a_fit[ch] > 0.0:
                raise ValueError(
                    f"channel {ch}: cannot rescale zero-mean texture to nonzero ambient")
            scale[ch] = 1.0
        else:
            scale[ch] = a_fit[ch] / mean[ch]
    return EquirectImage((texture.data * scale.astype(np.float32)), is_hdr=True)


def strongest_light_ratio(hdr: EquirectImage, scene: TestScene | None = None,
                          resolution: int = 64, spp: int = 64, seed: int = 0,
                          n_regions: int = 5) -> float:
    """Fraction of probe-scene brightness owed to the dominant light region."""
    scene = scene or grid3x3()
    full = render_ibl(scene, hdr, spp, seed, width=resolution)
    denom = float(luminance(full.data).mean())
    if denom <= 0.0:
        raise ValueError("panorama renders to black: ratio undefined")
    regions = detect_light_regions(hdr, n=n_regions)
    if not regions:
        return 0.0
    dominant = select_dominant(regions, hdr, scene=scene, seed=seed)
    solo = render_ibl(scene, _masked_env(hdr, dominant.mask()), spp, seed,
                      width=resolution)
    return float(luminance(solo.data).mean()) / denom


def detect_bright_ldr(pano: EquirectImage, percentile: float = 98.0) -> LightRegion:
    """Largest bright connected component in the upper half of an LDR panorama.

    Thresholds at the given luminance percentile of the upper half. Degenerate
    thresholds that select most of the half (no salient source) are rejected.
    """
    if pano.is_hdr:
        raise ValueError("expected an LDR panorama")
    h, w = pano.height, pano.width
    lum = pano.luminance()
    upper = lum[: h // 2]
    thresh = float(np.percentile(upper, percentile))
    mask = np.zeros((h, w), dtype=bool)
    mask[: h // 2] = upper >= thresh
    if not np.any(mask):
        raise ValueError("no pixels above the brightness threshold in the upper half")
    if mask[: h // 2].mean() > 0.25:
        raise ValueError("no salient bright region in the upper half "
                         "(threshold selects most of it)")
    wide = np.concatenate([mask, mask, mask], axis=1)
    labels, count = ndimage.label(wide, structure=np.ones((3, 3), dtype=int))
    if count == 0:
        raise ValueError("no connected bright component found")
    center = labels[:, w:2 * w]
    # map the three copies of each component onto the center tile
    best_mask = None
    best_size = -1
    for lab in range(1, count + 1):
        m = (labels[:, :w] == lab) | (center == lab) | (labels[:, 2 * w:] == lab)
        size = int(m.sum())
        if size > best_size and np.any(center == lab):
            best_size = size
            best_mask = m
    if best_mask is None or not np.any(best_mask):
        raise ValueError("no connected bright component found")
    return _region_from_mask(pano, best_mask)


class DominantLightEstimator(BaseEstimator):
    """End-to-end light fit with a scikit-learn style interface.

    ``fit`` consumes an HDR panorama (EquirectImage or (H, 2H, 3) array) and
    exposes the fitted light as ``light_`` plus the optimization trace as
    ``report_``. Keyword construction, ``get_params`` and ``set_params``
    follow the estimator contract so the fitter composes with standard
    tooling.
    """

    def __init__(self, n_lights: int = 5, iters: int = 150, lr: float = 0.02,
                 opt_resolution: int = 48, opt_spp: int = 8,
                 fit_resolution: int = 64, fit_spp: int = 64,
                 seed: int = 0, default_distance_m: float = DEFAULT_DISTANCE_M):
        self.n_lights = n_lights
        self.iters = iters
        self.lr = lr
        self.opt_resolution = opt_resolution
        self.opt_spp = opt_spp
        self.fit_resolution = fit_resolution
        self.fit_spp = fit_spp
        self.seed = seed
        self.default_distance_m = default_distance_m

    def _as_envmap(self, X) -> EquirectImage:
        if isinstance(X, EquirectImage):
            return X
        return EquirectImage(np.asarray(X, dtype=np.float32), is_hdr=True)

    def fit(self, X, y=None, depth: np.ndarray | None = None):
        hdr = self._as_envmap(X)
        scene = grid3x3()
        regions = detect_light_regions(hdr, n=self.n_lights)
        if not regions:
            raise ValueError("no light sources detected in the panorama")
        if self.n_lights == 1 or len(regions) == 1:
            dominant = regions[0]
        else:
            dominant = select_dominant(regions, hdr, scene=scene, seed=self.seed)

        p0 = init_params(dominant, hdr, depth=depth, scene=scene,
                         resolution=self.fit_resolution, spp=self.fit_spp,
                         seed=self.seed, default_distance_m=self.default_distance_m)
        settings = FitSettings(iters=self.iters, lr=self.lr,
                               resolution=self.opt_resolution, spp=self.opt_spp)
        target = render_ibl(scene, hdr, settings.target_spp, self.seed,
                            width=settings.resolution)
        report = refine_adam(p0, target, settings=settings, scene=scene)
        self.region_ = dominant
        self.light_ = report.refined
        self.report_ = report
        return self

    def score(self, X, y=None, resolution: int = 64, spp: int = 64) -> float:
        """Negative si-RMSE of the refit render against the panorama render."""
        from .metrics import si_rmse
        hdr = self._as_envmap(X)
        scene = grid3x3()
        target = render_ibl(scene, hdr, spp, self.seed, width=resolution)
        ge = emitter_geometry(scene, self.light_, spp, self.seed, width=resolution)
        ga = ambient_geometry(scene, spp, self.seed, width=resolution)
        mine = ge * self.light_.color + ga * self.light_.ambient
        norm = float(np.percentile(luminance(target.data), 90))
        if norm <= 0:
            raise ValueError("target render is black")
        return -si_rmse(mine / norm * 0.8, target.data / norm * 0.8)
