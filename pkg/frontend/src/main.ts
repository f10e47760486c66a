/** DOM wiring for the editor page. */

import { EditorClient } from "./api.js";
import { pixelToAngles, wrapAzimuth } from "./angles.js";
import { debounce } from "./debounce.js";
import { EditorState } from "./state.js";
import { EDIT_DEBOUNCE_MS, type EstimatePayload, type LightField } from "./types.js";

const SERVER = (window as { ROOMLIGHT_SERVER?: string }).ROOMLIGHT_SERVER
  ?? "http://127.0.0.1:8321";

interface SliderSpec {
  field: LightField;
  label: string;
  min: number;
  max: number;
  step: number;
  read(e: EstimatePayload): number;
}

const SLIDERS: SliderSpec[] = [
  { field: "azimuth_deg", label: "Azimuth (deg)", min: -180, max: 180, step: 1,
    read: (e) => e.azimuth_deg },
  { field: "elevation_deg", label: "Elevation (deg)", min: -90, max: 90, step: 1,
    read: (e) => e.elevation_deg },
  { field: "radius_m", label: "Size (m)", min: 0.01, max: 2.5, step: 0.01,
    read: (e) => e.light.radius_m },
  { field: "distance_m", label: "Distance (m)", min: 0.5, max: 20, step: 0.1,
    read: (e) => e.light.distance_m },
];

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function main(): void {
  const client = new EditorClient(SERVER);
  const banner = el<HTMLDivElement>("banner");
  const preview = el<HTMLImageElement>("preview");
  const revisionLabel = el<HTMLSpanElement>("revision");
  const pano = el<HTMLCanvasElement>("pano");
  const sliderBox = el<HTMLDivElement>("sliders");

  let previewUrl: string | null = null;

  const state = new EditorState(client, {
    onEstimate: (estimate) => {
      revisionLabel.textContent = `rev ${estimate.revision}`;
      syncSliders(estimate);
      drawPano(estimate);
    },
    onPreview: (blob, revision) => {
      if (previewUrl) URL.revokeObjectURL(previewUrl);
      previewUrl = URL.createObjectURL(blob);
      preview.src = previewUrl;
      revisionLabel.textContent = `rev ${revision}`;
    },
    onConnection: (status) => {
      banner.hidden = status === "ok";
      banner.textContent = status === "offline"
        ? "Server unreachable - edits paused."
        : "Connecting...";
    },
    onEditRejected: (field, message) => {
      banner.hidden = false;
      banner.textContent = `Rejected ${field}: ${message}`;
      setTimeout(() => { banner.hidden = true; }, 2500);
    },
  });

  // sliders: optimistic local edit, debounced PATCH stream
  const inputs = new Map<LightField, HTMLInputElement>();
  for (const spec of SLIDERS) {
    const row = document.createElement("label");
    row.className = "slider-row";
    const caption = document.createElement("span");
    caption.textContent = spec.label;
    const input = document.createElement("input");
    input.type = "range";
    input.min = String(spec.min);
    input.max = String(spec.max);
    input.step = String(spec.step);
    const send = debounce((value: number) => state.edit(spec.field, value),
                          EDIT_DEBOUNCE_MS);
    input.addEventListener("input", () => send(Number(input.value)));
    input.addEventListener("change", () => send.flush());
    row.append(caption, input);
    sliderBox.append(row);
    inputs.set(spec.field, input);
  }

  function syncSliders(estimate: EstimatePayload): void {
    for (const spec of SLIDERS) {
      const input = inputs.get(spec.field);
      if (input && document.activeElement !== input) {
        input.value = String(spec.read(estimate));
      }
    }
  }

  // equirect view: texture underneath, light mask at 40% opacity on top
  function drawPano(estimate: EstimatePayload): void {
    const [w, h] = estimate.resolution;
    pano.width = w;
    pano.height = h;
    const ctx = pano.getContext("2d");
    if (!ctx) return;
    const texture = new Image();
    texture.crossOrigin = "anonymous";
    texture.onload = () => {
      ctx.drawImage(texture, 0, 0, w, h);
      const mask = new Image();
      mask.crossOrigin = "anonymous";
      mask.onload = () => {
        ctx.globalAlpha = 0.4;
        ctx.drawImage(mask, 0, 0, w, h);
        ctx.globalAlpha = 1.0;
      };
      mask.src = client.maskUrl(estimate.revision);
    };
    texture.src = client.textureUrl(estimate.revision);
  }

  // click/drag on the panorama moves the light
  function dragTo(event: MouseEvent): void {
    if (!state.estimate) return;
    const rect = pano.getBoundingClientRect();
    const [w, h] = state.estimate.resolution;
    const x = ((event.clientX - rect.left) / rect.width) * w;
    const y = ((event.clientY - rect.top) / rect.height) * h;
    const { azimuthDeg, elevationDeg } = pixelToAngles(x, y, w, h);
    state.edit("azimuth_deg", wrapAzimuth(azimuthDeg));
    state.edit("elevation_deg", elevationDeg);
  }
  let dragging = false;
  pano.addEventListener("mousedown", (e) => { dragging = true; dragTo(e); });
  window.addEventListener("mousemove", (e) => { if (dragging) dragTo(e); });
  window.addEventListener("mouseup", () => { dragging = false; });

  el<HTMLButtonElement>("retry").addEventListener("click", () => void state.connect());
  void state.connect();
}

main();
