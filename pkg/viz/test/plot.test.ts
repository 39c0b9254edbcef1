import * as fs from "fs";
import * as path from "path";
import * as os from "os";
import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";
import { run } from "../src/cli";
import { plotField } from "../src/plot";
import { tableIndex } from "../src/colormap";
import { PNG } from "pngjs";
import { makeCsv } from "./helpers";

// converged coupling-10 minimizer on the 256-cell mesh, exported by the solver
const DESK_CSV = path.join(__dirname, "fixtures", "desk_kappa10.csv");

let dir: string;

beforeEach(() => {
  dir = fs.mkdtempSync(path.join(os.tmpdir(), "field-plots-"));
});

afterEach(() => {
  fs.rmSync(dir, { recursive: true, force: true });
  vi.restoreAllMocks();
});

function write(name: string, text: string): string {
  const p = path.join(dir, name);
  fs.writeFileSync(p, text);
  return p;
}

describe("plotField", () => {
  it("writes three images from the desk-scale minimizer export", () => {
    const prefix = path.join(dir, "desk");
    const result = plotField(DESK_CSV, prefix);
    for (const channel of ["re", "im", "density"] as const) {
      expect(fs.existsSync(result.files[channel])).toBe(true);
      const img = PNG.sync.read(fs.readFileSync(result.files[channel]));
      expect(img.width).toBe(512);
      expect(img.height).toBe(512);
    }
    // vortex cores: the darkest density pixel sits below 0.05 on the fixed scale
    expect(result.samples.density.min).toBeLessThan(0.05);
    const img = PNG.sync.read(fs.readFileSync(result.files.density));
    let darkest = 256;
    for (let off = 0; off < img.data.length; off += 4) {
      const idx = tableIndex(img.data[off], img.data[off + 1], img.data[off + 2]);
      if (idx >= 0 && idx < darkest) darkest = idx;
    }
    expect(darkest / 255).toBeLessThan(0.05);
  });

  it("is byte-deterministic across invocations", () => {
    const first = plotField(DESK_CSV, path.join(dir, "a"));
    const second = plotField(DESK_CSV, path.join(dir, "b"));
    for (const channel of ["re", "im", "density"] as const) {
      const bytesA = fs.readFileSync(first.files[channel]);
      const bytesB = fs.readFileSync(second.files[channel]);
      expect(bytesA.equals(bytesB)).toBe(true);
    }
  });
});

describe("cli", () => {
  it("exits 0 and reports the written files", () => {
    const csv = write("ok.csv", makeCsv(4, () => [1, 0]));
    const log = vi.spyOn(console, "log").mockImplementation(() => {});
    expect(run([csv, "--out", path.join(dir, "ok"), "--size", "16"])).toBe(0);
    const logged = log.mock.calls.map((c) => String(c[0])).join("\n");
    expect(logged).toContain("ok_density.png");
    expect(fs.existsSync(path.join(dir, "ok_re.png"))).toBe(true);
  });

  it("defaults the output prefix to the CSV path without extension", () => {
    const csv = write("field.csv", makeCsv(2, () => [0, 0]));
    vi.spyOn(console, "log").mockImplementation(() => {});
    expect(run([csv, "--size", "8"])).toBe(0);
    expect(fs.existsSync(path.join(dir, "field_im.png"))).toBe(true);
  });

  it("exits nonzero on a malformed row and names the line", () => {
    const lines = makeCsv(2, () => [1, 0]).split("\n");
    lines[4] = "0,0.5,1"; // file line 5
    const csv = write("bad.csv", lines.join("\n"));
    const err = vi.spyOn(console, "error").mockImplementation(() => {});
    expect(run([csv])).toBe(1);
    expect(String(err.mock.calls[0][0])).toMatch(/line 5: expected 4 columns/);
  });

  it("exits nonzero on a missing file and unknown options", () => {
    const err = vi.spyOn(console, "error").mockImplementation(() => {});
    expect(run([path.join(dir, "absent.csv")])).toBe(1);
    expect(String(err.mock.calls[0][0])).toContain("no such file");
    expect(run(["--wat"])).toBe(1);
    expect(run([])).toBe(1);
  });
});
