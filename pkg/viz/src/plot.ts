/**
 * Top-level plotting entry: one field CSV in, three PNG heatmaps out
 * (real part, imaginary part, density |u|^2).
 */

import * as fs from "fs";
import * as path from "path";
import { parseFieldCsv, FieldGrid } from "./csv";
import { renderChannel, Channel, IMAGE_SIZE, Rendered } from "./render";

export interface PlotResult {
  files: Record<Channel, string>;
  samples: Record<Channel, { min: number; max: number }>;
}

const CHANNELS: Channel[] = ["re", "im", "density"];

export function loadField(csvPath: string): FieldGrid {
  const text = fs.readFileSync(csvPath, "utf8");
  return parseFieldCsv(text, csvPath);
}

export function plotField(
  csvPath: string,
  outPrefix: string,
  size: number = IMAGE_SIZE,
): PlotResult {
  const grid = loadField(csvPath);
  const outDir = path.dirname(outPrefix);
  if (outDir) fs.mkdirSync(outDir, { recursive: true });
  const files = {} as Record<Channel, string>;
  const samples = {} as Record<Channel, { min: number; max: number }>;
  for (const channel of CHANNELS) {
    const rendered: Rendered = renderChannel(grid, channel, size);
    const file = `${outPrefix}_${channel}.png`;
    fs.writeFileSync(file, rendered.png);
    files[channel] = file;
    samples[channel] = { min: rendered.minSample, max: rendered.maxSample };
  }
  return { files, samples };
}
