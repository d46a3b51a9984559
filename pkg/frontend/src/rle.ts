/**
 * Client-side decoder for the server's run-length mask encoding.
 *
 * Masks travel as row-major (start, length) runs of TRUE pixels: sorted,
 * non-overlapping, non-adjacent. The decoder validates those invariants so
 * a corrupted payload fails loudly instead of rendering a plausible overlay.
 * The client never re-encodes: every mask drawn is server truth.
 */

export interface RleMask {
  width: number;
  height: number;
  runs: Array<[number, number]>;
}

/** Decode into a Uint8Array of 0/1 pixels, row-major. */
export function decodeRuns(mask: RleMask): Uint8Array {
  const { width, height, runs } = mask;
  if (width <= 0 || height <= 0) {
    throw new Error(`invalid mask dimensions ${width}x${height}`);
  }
  const total = width * height;
  const pixels = new Uint8Array(total);
  let prevEnd = -1;
  for (const [start, length] of runs) {
    if (length <= 0) {
      throw new Error(`run at ${start} has non-positive length ${length}`);
    }
    if (prevEnd >= 0 && start <= prevEnd + 1) {
      throw new Error(`run at ${start} overlaps or touches the previous run`);
    }
    if (start < 0 || start + length > total) {
      throw new Error(`run (${start},${length}) exceeds mask size ${width}x${height}`);
    }
    pixels.fill(1, start, start + length);
    prevEnd = start + length - 1;
  }
  return pixels;
}

export function countForeground(mask: RleMask): number {
  let count = 0;
  for (const [, length] of mask.runs) count += length;
  return count;
}

export function isForeground(mask: RleMask, x: number, y: number): boolean {
  const index = y * mask.width + x;
  for (const [start, length] of mask.runs) {
    if (index < start) return false;
    if (index < start + length) return true;
  }
  return false;
}
