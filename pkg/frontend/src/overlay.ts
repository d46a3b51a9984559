/**
 * Offscreen overlay rasters: one tinted RGBA buffer per object, composited
 * with adjustable opacity. Buffers are ImageData-compatible so the canvas
 * layer can blit them directly, and plain enough to assert on in tests.
 */

import { decodeRuns, type RleMask } from "./rle.js";

export interface OverlayRaster {
  width: number;
  height: number;
  /** RGBA, length = width * height * 4 */
  data: Uint8ClampedArray;
  foregroundPixels: number;
}

export function rasterizeOverlay(
  mask: RleMask,
  color: [number, number, number],
  alpha = 0.5,
): OverlayRaster {
  const pixels = decodeRuns(mask);
  const data = new Uint8ClampedArray(mask.width * mask.height * 4);
  const a = Math.round(alpha * 255);
  let foreground = 0;
  for (let i = 0; i < pixels.length; i++) {
    if (!pixels[i]) continue;
    foreground++;
    const offset = i * 4;
    data[offset] = color[0];
    data[offset + 1] = color[1];
    data[offset + 2] = color[2];
    data[offset + 3] = a;
  }
  return { width: mask.width, height: mask.height, data, foregroundPixels: foreground };
}

/** Source-over compositing of several overlays into one RGBA buffer. */
export function compositeOverlays(
  overlays: OverlayRaster[],
  width: number,
  height: number,
): OverlayRaster {
  const data = new Uint8ClampedArray(width * height * 4);
  let foreground = 0;
  for (const overlay of overlays) {
    if (overlay.width !== width || overlay.height !== height) {
      throw new Error(
        `overlay size ${overlay.width}x${overlay.height} does not match ${width}x${height}`,
      );
    }
    for (let i = 0; i < width * height; i++) {
      const offset = i * 4;
      const srcA = overlay.data[offset + 3] / 255;
      if (srcA === 0) continue;
      const dstA = data[offset + 3] / 255;
      if (dstA === 0) foreground++;
      const outA = srcA + dstA * (1 - srcA);
      for (let c = 0; c < 3; c++) {
        data[offset + c] =
          (overlay.data[offset + c] * srcA + data[offset + c] * dstA * (1 - srcA)) / outA;
      }
      data[offset + 3] = Math.round(outA * 255);
    }
  }
  return { width, height, data, foregroundPixels: foreground };
}
