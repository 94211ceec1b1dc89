import { mkdirSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { mkdtempSync } from "node:fs";

export function makeTempDir(prefix: string): string {
  return mkdtempSync(join(tmpdir(), prefix));
}

/** Binary grayscale netpbm buffer with a per-pixel value function. */
export function pgmBuffer(
  width: number,
  height: number,
  pixel: (x: number, y: number) => number,
): Buffer {
  const header = Buffer.from(`P5\n${width} ${height}\n255\n`, "ascii");
  const raster = Buffer.alloc(width * height);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      raster[y * width + x] = clampByte(pixel(x, y));
    }
  }
  return Buffer.concat([header, raster]);
}

/** Binary RGB netpbm buffer with a per-pixel color function. */
export function ppmBuffer(
  width: number,
  height: number,
  pixel: (x: number, y: number) => [number, number, number],
): Buffer {
  const header = Buffer.from(`P6\n${width} ${height}\n255\n`, "ascii");
  const raster = Buffer.alloc(width * height * 3);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const [r, g, b] = pixel(x, y);
      const base = (y * width + x) * 3;
      raster[base] = clampByte(r);
      raster[base + 1] = clampByte(g);
      raster[base + 2] = clampByte(b);
    }
  }
  return Buffer.concat([header, raster]);
}

function clampByte(value: number): number {
  return Math.max(0, Math.min(255, Math.round(value)));
}

export interface CorpusOptions {
  rows?: number;
  /** "all": every row has a report; "none": none do; "mixed": even rows only. */
  reports?: "all" | "none" | "mixed";
  /** Pair consecutive rows into shared groups so splits keep both labels. */
  pairedGroups?: boolean;
  /** Force every row to this label instead of alternating. */
  constantLabel?: number;
}

/**
 * Write a small synthetic corpus (images, reports, listing.tsv) into dir
 * and return the listing path. Labels alternate 0/1 by default and image
 * content depends on both row index and label.
 */
export function writeCorpus(dir: string, options: CorpusOptions = {}): string {
  const rows = options.rows ?? 12;
  const reports = options.reports ?? "all";
  mkdirSync(dir, { recursive: true });

  const lines: string[] = ["# test corpus"];
  for (let i = 0; i < rows; i++) {
    const label = options.constantLabel ?? i % 2;
    const imageName = `img_${i}.pgm`;
    const base = label === 1 ? 170 : 60;
    writeFileSync(
      join(dir, imageName),
      pgmBuffer(20 + i, 16, (x, y) => base + ((x * 7 + y * 13 + i * 29) % 60)),
    );

    let reportName = "";
    const wantsReport =
      reports === "all" || (reports === "mixed" && i % 2 === 0);
    if (wantsReport) {
      reportName = `rep_${i}.txt`;
      const finding = label === 1 ? "opacity in the lower lobe" : "clear lungs";
      writeFileSync(
        join(dir, reportName),
        `Study ${i}: ${finding}. No acute process otherwise.\n`,
        "utf8",
      );
    }

    const group = options.pairedGroups === false ? `g${i}` : `g${Math.floor(i / 2)}`;
    lines.push([imageName, reportName, String(label), group].join("\t"));
  }

  const listingPath = join(dir, "listing.tsv");
  writeFileSync(listingPath, lines.join("\n") + "\n", "utf8");
  return listingPath;
}
