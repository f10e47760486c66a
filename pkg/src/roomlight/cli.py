"""Command-line pipeline: fit, render, validate, evaluate, composite.

Exit codes: 0 success, 2 bad input, 3 numerical failure. Commands are
deterministic given their flags and seeds, and outputs are written atomically.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .bundle import EstimateBundle, load_bundle, save_bundle
from .envmap import EquirectImage, luminance, reexpose_percentile, tonemap_ldr
from .fitting import (
    FitSettings,
    detect_light_regions,
    init_params,
    refine_adam,
    rescale_texture,
    select_dominant,
    strongest_light_ratio,
)
from .geometry import LayoutMap, backproject, detect_corners, sphere_to_cuboid_texture
from .hdrio import ParseError, load_envmap, read_pfm, write_pfm
from .light import light_to_manifest
from .metrics import compare, summarize
from .rendering import (
    composite_differential,
    primary_object_mask,
    render_combined,
    render_ibl,
    render_parametric,
)
from .scenes import Material, PerspectiveCamera, SphereSpec, TestScene, scene_by_name

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3


class NumericalFailure(RuntimeError):
    pass


def _load_layout_png(path) -> LayoutMap:
    from PIL import Image
    arr = np.asarray(Image.open(path).convert("L"))
    return LayoutMap((arr > 127).astype(np.uint8))


def _save_png(path, data: np.ndarray, gamma: float = 2.4) -> None:
    from PIL import Image
    ldr = np.clip(np.asarray(data, dtype=np.float64), 0.0, 1.0) ** (1.0 / gamma)
    Image.fromarray((ldr * 255.0 + 0.5).astype(np.uint8)).save(path)


def _atomic_write(path, writer) -> None:
    d = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(d, exist_ok=True)
    suffix = os.path.splitext(str(path))[1]
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".out-", suffix=suffix)
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------

def cmd_fit(args) -> int:
    pano = load_envmap(args.pano)
    depth = None
    if args.depth:
        depth = read_pfm(args.depth)
        if depth.ndim == 3:
            depth = depth.mean(axis=-1)

    regions = detect_light_regions(pano, n=args.n_lights)
    if not regions:
        raise ValueError("no light sources detected in the panorama")
    if args.n_lights == 1 or len(regions) == 1:
        dominant = regions[0]
    else:
        dominant = select_dominant(regions, pano, seed=args.seed)

    p0 = init_params(dominant, pano, depth=depth, resolution=args.fit_res,
                     spp=args.spp, seed=args.seed)
    settings = FitSettings(iters=args.iters, lr=args.lr,
                           resolution=args.opt_res, spp=args.opt_spp)
    target = render_ibl(scene_by_name(args.scene), pano, settings.target_spp,
                        args.seed, width=settings.resolution)
    report = refine_adam(p0, target, settings=settings)
    if report.diverged:
        raise NumericalFailure("light refinement diverged; no bundle written")
    light = report.refined

    exposed, scale = reexpose_percentile(pano, percentile=90.0, target=0.8)
    texture = EquirectImage(np.clip(exposed.data, 0.0, 1.0), is_hdr=False)

    layout = None
    cuboid = None
    if args.layout:
        layout = _load_layout_png(args.layout)
        if (layout.height, layout.width) != (pano.height, pano.width):
            raise ValueError("layout resolution must match the panorama")
        cuboid = backproject(detect_corners(layout))
    else:
        layout = LayoutMap(np.zeros((pano.height, pano.width), dtype=np.uint8))

    ratio = strongest_light_ratio(pano, seed=args.seed) if args.energy_ratio else None
    bundle = EstimateBundle(
        light=light, texture=texture, layout=layout, cuboid=cuboid,
        provenance={
            "tool_version": __version__,
            "source_pano": os.path.basename(str(args.pano)),
            "exposure_scale": scale,
            "seed": args.seed,
            "spp": args.spp,
            "iters": args.iters,
            "lr": args.lr,
            "opt_resolution": args.opt_res,
            "opt_spp": args.opt_spp,
            "initial_loss": report.losses[0],
            "final_loss": report.final_loss,
            "loss_trace": list(report.losses),
            "energy_ratio": ratio,
        })
    save_bundle(bundle, args.out, overwrite=args.overwrite)
    man = light_to_manifest(light)
    print(f"fit: wrote {args.out}")
    print(f"  direction {np.round(man['direction'], 4).tolist()}  "
          f"d={man['distance_m']:.3f} m  s={man['radius_m']:.4f} m")
    print(f"  color {np.round(man['color_rgb'], 4).tolist()}  "
          f"ambient {np.round(man['ambient_rgb'], 4).tolist()}")
    print(f"  loss {report.losses[0]:.5g} -> {report.final_loss:.5g} "
          f"({len(report.losses) - 1} iters)")
    if ratio is not None:
        print(f"  strongest-light ratio {ratio:.3f}")
    return EXIT_OK


def _bundle_render(bundle: EstimateBundle, scene_name: str, mode: str,
                   spp: int, seed: int, width: int):
    return _bundle_render_scene(bundle, scene_by_name(scene_name), mode, spp, seed,
                                width, width)


def cmd_render(args) -> int:
    bundle = load_bundle(args.bundle)
    img = _bundle_render(bundle, args.scene, args.mode, args.spp, args.seed, args.width)
    _atomic_write(args.out, lambda p: write_pfm(p, img.data.astype(np.float32)))
    print(f"render: wrote {args.out} ({args.scene}, {args.spp} spp, seed {args.seed})")
    if args.png:
        _atomic_write(args.png, lambda p: _save_png(p, img.data))
        print(f"render: wrote {args.png}")
    return EXIT_OK


def cmd_validate(args) -> int:
    ratios = []
    print("pano\tstrongest_light_ratio")
    for path in args.panos:
        pano = load_envmap(path)
        r = strongest_light_ratio(pano, resolution=args.width, spp=args.spp,
                                  seed=args.seed)
        ratios.append(r)
        print(f"{os.path.basename(str(path))}\t{r:.4f}")
    if ratios:
        arr = np.asarray(ratios)
        for p in (25, 50, 75):
            print(f"percentile_{p}\t{np.percentile(arr, p):.4f}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    pairs = []
    for spec in args.pairs:
        if ":" not in spec:
            raise ValueError(f"pair {spec!r} must be PANO:BUNDLE")
        pano_path, bundle_path = spec.split(":", 1)
        pairs.append((pano_path, bundle_path))
    reports, names = [], []
    for pano_path, bundle_path in pairs:
        pano = load_envmap(pano_path)
        bundle = load_bundle(bundle_path)
        gt = render_ibl(scene_by_name(args.scene), pano, args.spp, args.seed,
                        width=args.width)
        est = _bundle_render(bundle, args.scene, args.mode, args.spp, args.seed,
                             args.width)
        # common exposure: scale both so the reference's 90th percentile sits at 0.8
        ref = float(np.percentile(luminance(gt.data), 90.0))
        if ref <= 0:
            raise NumericalFailure(f"reference render of {pano_path!r} is black")
        k = 0.8 / ref
        a, b = est.data * k, gt.data * k
        if args.tonemapped:
            a = np.clip(a, 0.0, 1.0) ** (1.0 / 2.4)
            b = np.clip(b, 0.0, 1.0) ** (1.0 / 2.4)
        reports.append(compare(a, b))
        names.append(os.path.basename(bundle_path.rstrip("/")))
    print("name\trmse\tsi_rmse\tpsnr_db\trgb_angular_deg")
    if not reports:
        return EXIT_OK
    for name, r in zip(names, reports):
        print(f"{name}\t{r.rmse:.4f}\t{r.si_rmse:.4f}\t{r.psnr_db:.2f}\t{r.rgb_angular_deg:.2f}")
    agg = summarize(reports, names)
    print(f"mean\t{agg.rmse:.4f}\t{agg.si_rmse:.4f}\t{agg.psnr_db:.2f}\t{agg.rgb_angular_deg:.2f}")
    for p in (25, 50, 75):
        print(f"p{p}\t{agg.percentiles['rmse'][p]:.4f}\t{agg.percentiles['si_rmse'][p]:.4f}"
              f"\t{agg.percentiles['psnr_db'][p]:.2f}\t{agg.percentiles['rgb_angular_deg'][p]:.2f}")
    return EXIT_OK


def cmd_composite(args) -> int:
    from PIL import Image
    bg = np.asarray(Image.open(args.background).convert("RGB"), dtype=np.float64) / 255.0
    bundle = load_bundle(args.bundle)
    with open(args.spec) as f:
        spec = json.load(f)

    cam = spec.get("camera", {})
    camera = PerspectiveCamera(
        origin=tuple(cam.get("origin", (0.0, 1.6, 3.6))),
        look_at=tuple(cam.get("look_at", (0.0, 0.5, 0.0))),
        fov_y_deg=float(cam.get("fov_y_deg", 32.0)),
    )
    plane = spec.get("plane", {})
    plane_y = float(plane.get("y", 0.0))
    plane_albedo = tuple(plane.get("albedo", (0.4, 0.4, 0.4)))
    objects = []
    for i, obj in enumerate(spec.get("objects", [])):
        mat = Material(str(obj.get("material", "diffuse")),
                       tuple(obj.get("albedo", (0.8, 0.8, 0.8))),
                       float(obj.get("phong_exponent", 64.0)))
        objects.append(SphereSpec(tuple(obj["center"]), float(obj["radius"]), mat))

    h, w = bg.shape[:2]
    with_scene = TestScene("insert_with", tuple(objects), plane_y, plane_albedo, camera)
    without_scene = TestScene("insert_without", (), plane_y, plane_albedo, camera)

    def shot(scene):
        img = _bundle_render_scene(bundle, scene, args.mode, args.spp, args.seed, w, h)
        return img.data

    with_obj = shot(with_scene)
    without_obj = shot(without_scene)
    mask = primary_object_mask(with_scene, w, h)
    out = composite_differential(bg, with_obj, without_obj, mask)
    _atomic_write(args.out, lambda p: _save_png(p, out, gamma=1.0))
    print(f"composite: wrote {args.out} ({len(objects)} objects)")
    return EXIT_OK


def _bundle_render_scene(bundle: EstimateBundle, scene: TestScene, mode: str,
                         spp: int, seed: int, width: int, height: int):
    if mode == "parametric" or (mode == "auto" and bundle.cuboid is None):
        return render_parametric(scene, bundle.light, spp, seed, width, height)
    if bundle.cuboid is None:
        raise ValueError("bundle has no cuboid geometry; use --mode parametric")
    scaled = rescale_texture(bundle.texture, bundle.light.ambient)
    ctex = sphere_to_cuboid_texture(scaled, bundle.cuboid)
    return render_combined(scene, bundle.light, ctex, spp, seed, width, height)


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="roomlight",
                                 description="Editable indoor lighting toolkit")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="extract a parametric light estimate from an HDR panorama")
    p.add_argument("pano", help="input panorama (.pfm or .hdr)")
    p.add_argument("out", help="output bundle directory")
    p.add_argument("--depth", help="per-pixel depth map in meters (.pfm)")
    p.add_argument("--layout", help="layout edge map (.png) to back-project")
    p.add_argument("--n-lights", type=int, default=5,
                   help="max light regions to detect (1 skips dominance selection)")
    p.add_argument("--iters", type=int, default=150)
    p.add_argument("--lr", type=float, default=0.02)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--spp", type=int, default=64, help="samples for the color fit")
    p.add_argument("--fit-res", type=int, default=64)
    p.add_argument("--opt-res", type=int, default=48)
    p.add_argument("--opt-spp", type=int, default=8)
    p.add_argument("--scene", default="grid3x3", choices=["grid3x3", "three-spheres"])
    p.add_argument("--energy-ratio", action="store_true",
                   help="also record the strongest-light energy ratio")
    p.add_argument("--overwrite", action="store_true")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("render", help="render a probe scene under a fitted estimate")
    p.add_argument("bundle")
    p.add_argument("out", help="output .pfm")
    p.add_argument("--png", help="optional tonemapped .png preview")
    p.add_argument("--scene", default="grid3x3", choices=["grid3x3", "three-spheres"])
    p.add_argument("--mode", default="auto", choices=["auto", "parametric", "combined"])
    p.add_argument("--spp", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--width", type=int, default=128)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("validate", help="strongest-light energy ratios for panoramas")
    p.add_argument("panos", nargs="*")
    p.add_argument("--spp", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--width", type=int, default=64)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("evaluate", help="metrics of estimate renders against references")
    p.add_argument("pairs", nargs="*", metavar="PANO:BUNDLE")
    p.add_argument("--scene", default="grid3x3", choices=["grid3x3", "three-spheres"])
    p.add_argument("--mode", default="auto", choices=["auto", "parametric", "combined"])
    p.add_argument("--spp", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--width", type=int, default=64)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--linear", dest="tonemapped", action="store_false",
                       help="compute metrics on linear renders (default)")
    group.add_argument("--tonemapped", dest="tonemapped", action="store_true",
                       help="compute metrics on tonemapped renders")
    p.set_defaults(tonemapped=False)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("composite", help="insert virtual objects into a photo")
    p.add_argument("background", help="background image (.png)")
    p.add_argument("bundle")
    p.add_argument("spec", help="JSON scene spec: camera, plane, objects")
    p.add_argument("out", help="output .png")
    p.add_argument("--mode", default="auto", choices=["auto", "parametric", "combined"])
    p.add_argument("--spp", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_composite)

    return ap


def main(argv=None) -> int:
    ap = _build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError, ParseError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalFailure, FloatingPointError, np.linalg.LinAlgError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
