#!/usr/bin/env node
/**
 * field-plots <field.csv> [--out prefix] [--size N]
 *
 * Renders three heatmaps from an exported field CSV:
 *   <prefix>_re.png       real part, fixed [-1, 1] scale
 *   <prefix>_im.png       imaginary part, fixed [-1, 1] scale
 *   <prefix>_density.png  |u|^2, fixed [0, 1] scale
 *
 * The prefix defaults to the CSV path without its extension.
 * Exit codes: 0 success, 1 bad input (message names the offending line).
 */

import { CsvError } from "./csv";
import { plotField } from "./plot";
import { IMAGE_SIZE } from "./render";

export function run(argv: string[]): number {
  let csvPath: string | null = null;
  let outPrefix: string | null = null;
  let size = IMAGE_SIZE;

  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (arg === "--out") {
      outPrefix = argv[++i] ?? null;
      if (outPrefix === null) {
        console.error("error: --out needs a value");
        return 1;
      }
    } else if (arg === "--size") {
      const value = argv[++i];
      size = value === undefined ? NaN : Number(value);
      if (!Number.isInteger(size) || size < 1) {
        console.error("error: --size needs a positive integer");
        return 1;
      }
    } else if (arg === "--help" || arg === "-h") {
      console.log("usage: field-plots <field.csv> [--out prefix] [--size N]");
      return 0;
    } else if (arg.startsWith("-")) {
      console.error(`error: unknown option ${arg}`);
      return 1;
    } else if (csvPath === null) {
      csvPath = arg;
    } else {
      console.error("error: expected exactly one CSV path");
      return 1;
    }
  }

  if (csvPath === null) {
    console.error("usage: field-plots <field.csv> [--out prefix] [--size N]");
    return 1;
  }
  if (outPrefix === null) {
    outPrefix = csvPath.replace(/\.[^./\\]+$/, "");
  }

  try {
    const result = plotField(csvPath, outPrefix, size);
    for (const channel of ["re", "im", "density"] as const) {
      const { min, max } = result.samples[channel];
      console.log(
        `${result.files[channel]}  (${channel} in [${min.toPrecision(6)}, ${max.toPrecision(6)}])`,
      );
    }
    return 0;
  } catch (err) {
    if (err instanceof CsvError) {
      console.error(`error: ${err.message}`);
      return 1;
    }
    if (err instanceof Error && "code" in err && err.code === "ENOENT") {
      const failed = "path" in err && typeof err.path === "string" ? err.path : csvPath;
      console.error(`error: no such file: ${failed}`);
      return 1;
    }
    throw err;
  }
}

if (require.main === module) {
  process.exit(run(process.argv.slice(2)));
}
