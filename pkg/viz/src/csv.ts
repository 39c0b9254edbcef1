/**
 * Field CSV reader.
 *
 * The solver exports complex nodal fields as `x,y,re,im` rows, one per
 * vertex of the structured (n+1)x(n+1) grid on the unit square, in
 * row-major order starting at the origin.  Parsing is strict: anything
 * off-format raises a CsvError carrying the 1-based line number so the
 * CLI can point at the exact row.
 */

export class CsvError extends Error {
  readonly file: string;
  readonly line: number | null;

  constructor(file: string, line: number | null, message: string) {
    super(line === null ? `${file}: ${message}` : `${file}, line ${line}: ${message}`);
    this.file = file;
    this.line = line;
  }
}

export interface FieldGrid {
  /** cells per side; the grid has (n+1)^2 vertices */
  n: number;
  re: Float64Array;
  im: Float64Array;
}

function parseNumber(token: string): number {
  const trimmed = token.trim();
  if (trimmed === "") return NaN;
  return Number(trimmed);
}

export function parseFieldCsv(text: string, file: string): FieldGrid {
  const lines = text.split("\n");
  if (lines.length > 0 && lines[lines.length - 1] === "") lines.pop();
  if (lines.length === 0) throw new CsvError(file, null, "empty field file");

  if (lines[0].trim() !== "x,y,re,im") {
    throw new CsvError(file, 1, "header must be x,y,re,im");
  }

  const rows: number[][] = [];
  for (let i = 1; i < lines.length; i++) {
    const line = lines[i];
    if (line.trim() === "") continue;
    const parts = line.split(",");
    if (parts.length !== 4) {
      throw new CsvError(file, i + 1, `expected 4 columns, got ${parts.length}`);
    }
    const values = parts.map(parseNumber);
    const bad = values.findIndex((v) => Number.isNaN(v));
    if (bad >= 0) {
      throw new CsvError(file, i + 1, `non-numeric entry in column ${bad + 1}`);
    }
    rows.push(values);
  }

  const count = rows.length;
  const n = Math.round(Math.sqrt(count)) - 1;
  if (n < 1 || (n + 1) * (n + 1) !== count) {
    throw new CsvError(file, null, `${count} rows do not form a square vertex grid`);
  }

  const side = n + 1;
  const re = new Float64Array(count);
  const im = new Float64Array(count);
  for (let k = 0; k < count; k++) {
    const [x, y, rePart, imPart] = rows[k];
    const expectedX = (k % side) / n;
    const expectedY = Math.floor(k / side) / n;
    // exporter and reader must agree bit-exactly on the grid
    if (x !== expectedX || y !== expectedY) {
      throw new CsvError(
        file, k + 2, `coordinates do not match the structured grid for n=${n}`,
      );
    }
    re[k] = rePart;
    im[k] = imPart;
  }

  return { n, re, im };
}
