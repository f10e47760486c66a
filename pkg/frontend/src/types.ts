/** Wire types mirroring the editing service's JSON bodies. */

export interface LightManifest {
  direction: [number, number, number];
  distance_m: number;
  radius_m: number;
  color_rgb: [number, number, number];
  ambient_rgb: [number, number, number];
}

export interface EstimatePayload {
  light: LightManifest;
  azimuth_deg: number;
  elevation_deg: number;
  revision: number;
  resolution: [number, number];
  has_cuboid: boolean;
}

/** Editable scalar/vector fields accepted by PATCH /light. */
export type LightField =
  | "azimuth_deg"
  | "elevation_deg"
  | "radius_m"
  | "distance_m"
  | "color_rgb"
  | "ambient_rgb";

export type LightValue = number | [number, number, number];

export interface RenderSettings {
  scene: string;
  spp: number;
  width: number;
}

/** Preview defaults: interactive under a second, visually stable. */
export const DEFAULT_RENDER: RenderSettings = { scene: "grid3x3", spp: 16, width: 256 };

/** Slider edits are batched on a short debounce before hitting the server. */
export const EDIT_DEBOUNCE_MS = 120;
