/**
 * Heatmap rendering: sample a vertex grid onto a square pixel canvas and
 * color it through the viridis table.
 *
 * Color ranges are fixed, never autoscaled, so images stay comparable
 * across runs and coupling constants: density |u|^2 uses [0,1] (the
 * minimizer bound |u| <= 1), real and imaginary parts use [-1,1].
 */

import { PNG } from "pngjs";
import { FieldGrid } from "./csv";
import { sample } from "./colormap";

export const IMAGE_SIZE = 512;

export type Channel = "re" | "im" | "density";

export interface Rendered {
  png: Buffer;
  /** smallest and largest channel values sampled while painting */
  minSample: number;
  maxSample: number;
}

/** Bilinear sample of one component array at domain point (x, y). */
function bilinear(arr: Float64Array, n: number, x: number, y: number): number {
  const side = n + 1;
  const gx = Math.min(n - 1e-12, Math.max(0, x * n));
  const gy = Math.min(n - 1e-12, Math.max(0, y * n));
  const i = Math.floor(gx);
  const j = Math.floor(gy);
  const fx = gx - i;
  const fy = gy - j;
  const k = j * side + i;
  return (
    (1 - fx) * (1 - fy) * arr[k] + fx * (1 - fy) * arr[k + 1] +
    (1 - fx) * fy * arr[k + side] + fx * fy * arr[k + side + 1]
  );
}

// The field is interpolated componentwise and the channel value formed per
// pixel; interpolating |u|^2 vertex values instead would fill in vortex
// cores that sit between pixel centers.
function sampleChannel(grid: FieldGrid, channel: Channel, x: number, y: number): number {
  if (channel === "re") return bilinear(grid.re, grid.n, x, y);
  if (channel === "im") return bilinear(grid.im, grid.n, x, y);
  const re = bilinear(grid.re, grid.n, x, y);
  const im = bilinear(grid.im, grid.n, x, y);
  return re * re + im * im;
}

export function renderChannel(
  grid: FieldGrid,
  channel: Channel,
  size: number = IMAGE_SIZE,
): Rendered {
  const lo = channel === "density" ? 0 : -1;
  const hi = 1;
  const png = new PNG({ width: size, height: size });
  let minSample = Infinity;
  let maxSample = -Infinity;

  for (let py = 0; py < size; py++) {
    const y = 1 - (py + 0.5) / size; // image rows run top-down
    for (let px = 0; px < size; px++) {
      const x = (px + 0.5) / size;
      const v = sampleChannel(grid, channel, x, y);
      if (v < minSample) minSample = v;
      if (v > maxSample) maxSample = v;
      const [r, g, b] = sample((v - lo) / (hi - lo));
      const offset = 4 * (py * size + px);
      png.data[offset] = r;
      png.data[offset + 1] = g;
      png.data[offset + 2] = b;
      png.data[offset + 3] = 255;
    }
  }

  // explicit encoder settings keep the byte stream reproducible
  const buffer = PNG.sync.write(png, {
    deflateLevel: 9,
    deflateStrategy: 0,
    filterType: 0,
  });
  return { png: buffer, minSample, maxSample };
}
