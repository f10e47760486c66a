"""HTTP editing service: one light estimate, live edits, preview renders.

A single session holds the current estimate behind a mutation lock; every
accepted edit bumps a revision counter and every response names the revision
it was computed from (header ``X-Estimate-Revision``), so clients can detect
stale previews. Preview renders snapshot the session, render outside the
lock, and land in a per-(revision, settings) cache; a request that arrives
mid-render simply snapshots the newer revision and renders that.
"""

from __future__ import annotations

import argparse
import io
import threading
from dataclasses import replace

import numpy as np
from fastapi import FastAPI, HTTPException, Response
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from .bundle import EstimateBundle, load_bundle, save_bundle
from .envmap import EquirectImage
from .fitting import rescale_texture
from .geometry import CornerSet, CuboidTexture, backproject, render_layout, sphere_to_cuboid_texture
from .light import (
    LightEstimate,
    azimuth_of,
    elevation_of,
    light_mask,
    light_to_manifest,
    set_ambient,
    set_azimuth,
    set_color,
    set_distance,
    set_elevation,
    set_size,
)
from .rendering import render_combined, render_parametric
from .scenes import scene_by_name

__all__ = ["EditorSession", "create_app", "main"]

REVISION_HEADER = "X-Estimate-Revision"

_FIELD_SETTERS = {
    "azimuth_deg": lambda light, v: set_azimuth(light, np.radians(float(v))),
    "elevation_deg": lambda light, v: set_elevation(light, np.radians(float(v))),
    "radius_m": lambda light, v: set_size(light, float(v)),
    "distance_m": lambda light, v: set_distance(light, float(v)),
    "color_rgb": set_color,
    "ambient_rgb": set_ambient,
}


class EditorSession:
    """Single-writer session state; renders read immutable snapshots."""

    def __init__(self, estimate: LightEstimate):
        self._lock = threading.Lock()
        self.estimate = estimate
        self.revision = 0
        self._preview_cache: dict[tuple, bytes] = {}
        self._ctex_cache: dict[tuple, CuboidTexture] = {}

    def snapshot(self) -> tuple[LightEstimate, int]:
        with self._lock:
            return self.estimate, self.revision

    def mutate(self, fn) -> tuple[LightEstimate, int]:
        """Apply estimate -> estimate under the lock; bump the revision."""
        with self._lock:
            self.estimate = fn(self.estimate)
            self.revision += 1
            return self.estimate, self.revision

    def cached_preview(self, key: tuple):
        return self._preview_cache.get(key)

    def store_preview(self, key: tuple, png: bytes) -> None:
        if len(self._preview_cache) > 64:
            self._preview_cache.clear()
        self._preview_cache[key] = png

    def cuboid_texture(self, estimate: LightEstimate) -> CuboidTexture:
        """Warped faces for the estimate; cached on (ambient, cuboid) identity."""
        key = (estimate.light.ambient.tobytes(),
               estimate.cuboid.floor_corners.tobytes(),
               estimate.cuboid.ceiling_height_m)
        ctex = self._ctex_cache.get(key)
        if ctex is None:
            scaled = rescale_texture(estimate.texture, estimate.light.ambient)
            ctex = sphere_to_cuboid_texture(scaled, estimate.cuboid, longest_edge=128)
            if len(self._ctex_cache) > 8:
                self._ctex_cache.clear()
            self._ctex_cache[key] = ctex
        return ctex


class PatchLight(BaseModel):
    field: str
    value: float | list[float]
    if_revision: int | None = None


class RenderRequest(BaseModel):
    scene: str = "grid3x3"
    spp: int = 16
    width: int = 256
    seed: int = 0


class LayoutUpdate(BaseModel):
    floor: list[list[float]]
    ceiling: list[list[float]]
    if_revision: int | None = None


class SaveRequest(BaseModel):
    out_dir: str
    overwrite: bool = False


def _png_bytes(arr: np.ndarray, mode: str = "RGB") -> bytes:
    from PIL import Image
    buf = io.BytesIO()
    Image.fromarray(arr, mode=mode).save(buf, format="PNG")
    return buf.getvalue()


def _tonemap_png(data: np.ndarray, gamma: float = 2.4) -> bytes:
    ldr = np.clip(np.asarray(data, dtype=np.float64), 0.0, 1.0) ** (1.0 / gamma)
    return _png_bytes((ldr * 255.0 + 0.5).astype(np.uint8))


def create_app(session: EditorSession) -> FastAPI:
    app = FastAPI(title="roomlight editor")
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"], expose_headers=[REVISION_HEADER])
    app.state.session = session

    def manifest_payload(estimate: LightEstimate, revision: int) -> dict:
        light = estimate.light
        return {
            "light": light_to_manifest(light),
            "azimuth_deg": float(np.degrees(azimuth_of(light))),
            "elevation_deg": float(np.degrees(elevation_of(light))),
            "revision": revision,
            "resolution": [estimate.texture.width, estimate.texture.height],
            "has_cuboid": estimate.cuboid is not None,
        }

    @app.get("/estimate")
    def get_estimate():
        estimate, revision = session.snapshot()
        return Response(
            content=_json(manifest_payload(estimate, revision)),
            media_type="application/json",
            headers={REVISION_HEADER: str(revision)},
        )

    @app.patch("/light")
    def patch_light(body: PatchLight):
        setter = _FIELD_SETTERS.get(body.field)
        if setter is None:
            raise HTTPException(status_code=422, detail={
                "field": body.field,
                "error": f"unknown field; expected one of {sorted(_FIELD_SETTERS)}"})

        def apply(estimate: LightEstimate) -> LightEstimate:
            if body.if_revision is not None and body.if_revision != session.revision:
                raise _Stale()
            try:
                return replace(estimate, light=setter(estimate.light, body.value))
            except (ValueError, TypeError) as e:
                raise HTTPException(status_code=422,
                                    detail={"field": body.field, "error": str(e)}) from e

        try:
            estimate, revision = session.mutate(apply)
        except _Stale:
            raise HTTPException(status_code=409, detail={
                "error": "stale revision", "revision": session.revision}) from None
        return Response(
            content=_json(manifest_payload(estimate, revision)),
            media_type="application/json",
            headers={REVISION_HEADER: str(revision)},
        )

    @app.post("/render")
    def post_render(body: RenderRequest):
        if body.spp < 1 or body.width < 8 or body.width > 1024:
            raise HTTPException(status_code=422, detail={"error": "bad render settings"})
        estimate, revision = session.snapshot()
        key = (revision, body.scene, body.spp, body.width, body.seed)
        png = session.cached_preview(key)
        if png is None:
            try:
                scene = scene_by_name(body.scene)
            except ValueError as e:
                raise HTTPException(status_code=422, detail={"error": str(e)}) from e
            if estimate.cuboid is not None:
                ctex = session.cuboid_texture(estimate)
                img = render_combined(scene, estimate.light, ctex, body.spp, body.seed,
                                      width=body.width)
            else:
                img = render_parametric(scene, estimate.light, body.spp, body.seed,
                                        width=body.width)
            png = _tonemap_png(img.data)
            session.store_preview(key, png)
        return Response(content=png, media_type="image/png",
                        headers={REVISION_HEADER: str(revision)})

    @app.get("/texture")
    def get_texture():
        estimate, revision = session.snapshot()
        return Response(content=_tonemap_png(estimate.texture.data),
                        media_type="image/png",
                        headers={REVISION_HEADER: str(revision)})

    @app.get("/layout")
    def get_layout():
        estimate, revision = session.snapshot()
        return Response(content=_png_bytes(estimate.layout.edges * np.uint8(255), "L"),
                        media_type="image/png",
                        headers={REVISION_HEADER: str(revision)})

    @app.get("/mask")
    def get_mask():
        estimate, revision = session.snapshot()
        mask = light_mask(estimate.light, estimate.texture.width, estimate.texture.height)
        return Response(content=_png_bytes(mask * np.uint8(255), "L"),
                        media_type="image/png",
                        headers={REVISION_HEADER: str(revision)})

    @app.put("/layout")
    def put_layout(body: LayoutUpdate):
        def apply(estimate: LightEstimate) -> LightEstimate:
            if body.if_revision is not None and body.if_revision != session.revision:
                raise _Stale()
            try:
                corners = CornerSet(np.asarray(body.floor, dtype=np.float64),
                                    np.asarray(body.ceiling, dtype=np.float64),
                                    estimate.texture.width, estimate.texture.height)
                cuboid = backproject(corners)
                layout = render_layout(cuboid, estimate.texture.width,
                                       estimate.texture.height)
            except (ValueError, TypeError) as e:
                raise HTTPException(status_code=422,
                                    detail={"field": "corners", "error": str(e)}) from e
            return replace(estimate, cuboid=cuboid, layout=layout)

        try:
            estimate, revision = session.mutate(apply)
        except _Stale:
            raise HTTPException(status_code=409, detail={
                "error": "stale revision", "revision": session.revision}) from None
        return Response(
            content=_json(manifest_payload(estimate, revision)),
            media_type="application/json",
            headers={REVISION_HEADER: str(revision)},
        )

    @app.post("/save")
    def post_save(body: SaveRequest):
        estimate, revision = session.snapshot()
        bundle = EstimateBundle(
            light=estimate.light, texture=estimate.texture, layout=estimate.layout,
            cuboid=estimate.cuboid,
            provenance={"saved_from": "editor", "revision": revision})
        try:
            save_bundle(bundle, body.out_dir, overwrite=body.overwrite)
        except FileExistsError as e:
            raise HTTPException(status_code=409, detail={"error": str(e)}) from e
        return {"saved": body.out_dir, "revision": revision}

    return app


class _Stale(Exception):
    pass


def _json(payload: dict) -> bytes:
    import json
    return json.dumps(payload).encode()


def session_from_bundle(path) -> EditorSession:
    return EditorSession(load_bundle(path).to_estimate())


def main(argv=None) -> None:
    import uvicorn
    ap = argparse.ArgumentParser(prog="roomlight-service",
                                 description="Interactive light editing service")
    ap.add_argument("--bundle", required=True, help="estimate bundle directory")
    ap.add_argument("--host", default="127.0.0.1")
    ap.add_argument("--port", type=int, default=8321)
    args = ap.parse_args(argv)
    app = create_app(session_from_bundle(args.bundle))
    uvicorn.run(app, host=args.host, port=args.port)


if __name__ == "__main__":
    main()
