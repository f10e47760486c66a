/**
 * Pixel <-> angle conversions for the equirect views.
 *
 * Matches the server's convention: column 0 sits at longitude -180deg,
 * pixel centers are offset by half a pixel, elevation is positive upward.
 */

export interface Angles {
  azimuthDeg: number;
  elevationDeg: number;
}

/** Continuous pixel position (e.g. a click) to azimuth/elevation. */
export function pixelToAngles(x: number, y: number, width: number, height: number): Angles {
  const azimuthDeg = (360.0 * (x + 0.5)) / width - 180.0;
  const elevationDeg = 90.0 - (180.0 * (y + 0.5)) / height;
  return { azimuthDeg, elevationDeg: clampElevation(elevationDeg) };
}

/** Inverse of pixelToAngles; x wraps into [-0.5, width-0.5). */
export function anglesToPixel(
  azimuthDeg: number,
  elevationDeg: number,
  width: number,
  height: number,
): { x: number; y: number } {
  let x = ((azimuthDeg + 180.0) * width) / 360.0 - 0.5;
  x = ((((x + 0.5) % width) + width) % width) - 0.5;
  const y = ((90.0 - elevationDeg) * height) / 180.0 - 0.5;
  return { x, y: Math.min(Math.max(y, -0.5), height - 0.5) };
}

export function clampElevation(elevationDeg: number): number {
  return Math.min(Math.max(elevationDeg, -90.0), 90.0);
}

/** Normalize an azimuth to (-180, 180]. */
export function wrapAzimuth(azimuthDeg: number): number {
  let a = ((azimuthDeg + 180.0) % 360.0 + 360.0) % 360.0 - 180.0;
  if (a === -180.0) a = 180.0;
  return a;
}
