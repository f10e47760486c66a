"""On-disk estimate bundles.

A bundle directory holds light.json, texture.pfm (LDR, unscaled), layout.png,
cuboid.json (optional), and provenance.json. Writes are atomic: everything is
staged in a sibling temp directory and renamed into place, so a failed run
leaves no partial bundle.
"""

from __future__ import annotations

import json
import os
import shutil
import tempfile
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .envmap import EquirectImage
from .geometry import CAMERA_HEIGHT_M, CuboidGeom, LayoutMap
from .hdrio import read_pfm, write_pfm
from .light import LightEstimate, ParametricLight, light_from_manifest, light_to_manifest

__all__ = ["EstimateBundle", "save_bundle", "load_bundle"]

TOOL_VERSION = "0.1.0"


@dataclass(frozen=True)
class EstimateBundle:
    light: ParametricLight
    texture: EquirectImage      # LDR in [0, 1]; ambient rescale is applied at render time
    layout: LayoutMap
    cuboid: CuboidGeom | None
    provenance: dict

    def to_estimate(self) -> LightEstimate:
        return LightEstimate(light=self.light, texture=self.texture,
                             layout=self.layout, cuboid=self.cuboid)


def _write_layout_png(path, layout: LayoutMap) -> None:
    Image.fromarray(layout.edges * np.uint8(255), mode="L").save(path)


def _read_layout_png(path) -> LayoutMap:
    img = np.asarray(Image.open(path).convert("L"))
    return LayoutMap((img > 127).astype(np.uint8))


def save_bundle(bundle: EstimateBundle, out_dir, overwrite: bool = False) -> None:
    out_dir = str(out_dir)
    if os.path.exists(out_dir) and not overwrite:
        raise FileExistsError(f"bundle directory {out_dir!r} already exists")
    parent = os.path.dirname(os.path.abspath(out_dir)) or "."
    os.makedirs(parent, exist_ok=True)
    tmp = tempfile.mkdtemp(prefix=".bundle-", dir=parent)
    try:
        with open(os.path.join(tmp, "light.json"), "w") as f:
            json.dump(light_to_manifest(bundle.light), f, indent=2)
        write_pfm(os.path.join(tmp, "texture.pfm"), bundle.texture.data)
        _write_layout_png(os.path.join(tmp, "layout.png"), bundle.layout)
        if bundle.cuboid is not None:
            with open(os.path.join(tmp, "cuboid.json"), "w") as f:
                json.dump({
                    "floor_corners": bundle.cuboid.floor_corners.tolist(),
                    "camera_height_m": CAMERA_HEIGHT_M,
                    "ceiling_height_m": bundle.cuboid.ceiling_height_m,
                }, f, indent=2)
        prov = dict(bundle.provenance)
        prov.setdefault("tool_version", TOOL_VERSION)
        with open(os.path.join(tmp, "provenance.json"), "w") as f:
            json.dump(prov, f, indent=2)
        if os.path.exists(out_dir):
            shutil.rmtree(out_dir)
        os.rename(tmp, out_dir)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise


def load_bundle(path) -> EstimateBundle:
    path = str(path)
    light_path = os.path.join(path, "light.json")
    if not os.path.isfile(light_path):
        raise FileNotFoundError(f"{path!r} is not a bundle (missing light.json)")
    with open(light_path) as f:
        light = light_from_manifest(json.load(f))
    tex = read_pfm(os.path.join(path, "texture.pfm"))
    if tex.ndim == 2:
        tex = np.repeat(tex[..., None], 3, axis=-1)
    texture = EquirectImage(np.clip(tex, 0.0, 1.0), is_hdr=False)
    layout = _read_layout_png(os.path.join(path, "layout.png"))
    if (layout.height, layout.width) != (texture.height, texture.width):
        raise ValueError(
            f"bundle inconsistent: texture {texture.width}x{texture.height} vs "
            f"layout {layout.width}x{layout.height}")
    cuboid = None
    cuboid_path = os.path.join(path, "cuboid.json")
    if os.path.isfile(cuboid_path):
        with open(cuboid_path) as f:
            spec = json.load(f)
        cuboid = CuboidGeom(floor_corners=np.asarray(spec["floor_corners"], dtype=np.float64),
                            ceiling_height_m=float(spec["ceiling_height_m"]))
    provenance = {}
    prov_path = os.path.join(path, "provenance.json")
    if os.path.isfile(prov_path):
        with open(prov_path) as f:
            provenance = json.load(f)
    return EstimateBundle(light=light, texture=texture, layout=layout,
                          cuboid=cuboid, provenance=provenance)
