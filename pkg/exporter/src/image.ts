import { readFileSync } from "node:fs";

/** Decoded raster: row-major pixels, three channels, values in [0, 1]. */
export interface RasterImage {
  width: number;
  height: number;
  /** Length width * height * 3, channel-interleaved. */
  pixels: Float64Array;
}

class HeaderScanner {
  private pos = 0;

  constructor(private readonly data: Buffer) {}

  /** Skip whitespace and '#' comment lines between header tokens. */
  private skipSeparators(): void {
    while (this.pos < this.data.length) {
      const byte = this.data[this.pos]!;
      if (byte === 0x23) {
        // comment runs to end of line
        while (
          this.pos < this.data.length &&
          this.data[this.pos] !== 0x0a
        ) {
          this.pos++;
        }
      } else if (byte === 0x20 || byte === 0x09 || byte === 0x0a || byte === 0x0d) {
        this.pos++;
      } else {
        return;
      }
    }
  }

  nextToken(): string {
    this.skipSeparators();
    const start = this.pos;
    while (this.pos < this.data.length) {
      const byte = this.data[this.pos]!;
      if (byte === 0x20 || byte === 0x09 || byte === 0x0a || byte === 0x0d || byte === 0x23) {
        break;
      }
      this.pos++;
    }
    if (this.pos === start) throw new Error("truncated header");
    return this.data.subarray(start, this.pos).toString("ascii");
  }

  /** Position of the raster: one whitespace byte past the last header token. */
  rasterStart(): number {
    if (this.pos >= this.data.length) throw new Error("missing raster data");
    return this.pos + 1;
  }
}

/**
 * Decode binary PGM (P5) or PPM (P6) bytes.
 *
 * Only 8-bit samples are supported (maxval <= 255). Grayscale input is
 * replicated across the three output channels so downstream code sees a
 * uniform layout.
 */
export function decodeNetpbmBytes(data: Buffer): RasterImage {
  if (data.length < 2) throw new Error("file too short for a netpbm header");
  const magic = data.subarray(0, 2).toString("ascii");
  if (magic !== "P5" && magic !== "P6") {
    throw new Error(`unsupported magic ${JSON.stringify(magic)}, need P5 or P6`);
  }
  const channels = magic === "P6" ? 3 : 1;

  const scanner = new HeaderScanner(data.subarray(2));
  const width = parsePositive(scanner.nextToken(), "width");
  const height = parsePositive(scanner.nextToken(), "height");
  const maxval = parsePositive(scanner.nextToken(), "maxval");
  if (maxval > 255) {
    throw new Error(`maxval ${maxval} not supported, need <= 255`);
  }
  const rasterOffset = 2 + scanner.rasterStart();
  const expected = width * height * channels;
  if (data.length - rasterOffset < expected) {
    throw new Error(
      `raster truncated: need ${expected} bytes, have ${data.length - rasterOffset}`,
    );
  }

  const pixels = new Float64Array(width * height * 3);
  for (let i = 0; i < width * height; i++) {
    if (channels === 1) {
      const v = data[rasterOffset + i]! / maxval;
      pixels[i * 3] = v;
      pixels[i * 3 + 1] = v;
      pixels[i * 3 + 2] = v;
    } else {
      pixels[i * 3] = data[rasterOffset + i * 3]! / maxval;
      pixels[i * 3 + 1] = data[rasterOffset + i * 3 + 1]! / maxval;
      pixels[i * 3 + 2] = data[rasterOffset + i * 3 + 2]! / maxval;
    }
  }
  return { width, height, pixels };
}

export function decodeNetpbm(path: string): RasterImage {
  return decodeNetpbmBytes(readFileSync(path));
}

function parsePositive(token: string, name: string): number {
  if (!/^\d+$/.test(token)) {
    throw new Error(`${name} must be a positive integer, got ${JSON.stringify(token)}`);
  }
  const value = parseInt(token, 10);
  if (value <= 0) throw new Error(`${name} must be positive, got ${value}`);
  return value;
}

/** Nearest-neighbor resample to a square side x side raster. */
export function resizeNearest(image: RasterImage, side: number): RasterImage {
  if (image.width === side && image.height === side) return image;
  const pixels = new Float64Array(side * side * 3);
  for (let y = 0; y < side; y++) {
    const srcY = Math.min(image.height - 1, Math.floor((y * image.height) / side));
    for (let x = 0; x < side; x++) {
      const srcX = Math.min(image.width - 1, Math.floor((x * image.width) / side));
      const src = (srcY * image.width + srcX) * 3;
      const dst = (y * side + x) * 3;
      pixels[dst] = image.pixels[src]!;
      pixels[dst + 1] = image.pixels[src + 1]!;
      pixels[dst + 2] = image.pixels[src + 2]!;
    }
  }
  return { width: side, height: side, pixels };
}

/**
 * Flatten one patch of a square raster into a channel-interleaved vector.
 *
 * Patches tile the image in row-major order; each patch vector has length
 * patchSide * patchSide * 3.
 */
export function extractPatch(
  image: RasterImage,
  patchRow: number,
  patchCol: number,
  patchSide: number,
): Float64Array {
  const out = new Float64Array(patchSide * patchSide * 3);
  const baseY = patchRow * patchSide;
  const baseX = patchCol * patchSide;
  let k = 0;
  for (let dy = 0; dy < patchSide; dy++) {
    for (let dx = 0; dx < patchSide; dx++) {
      const src = ((baseY + dy) * image.width + (baseX + dx)) * 3;
      out[k++] = image.pixels[src]!;
      out[k++] = image.pixels[src + 1]!;
      out[k++] = image.pixels[src + 2]!;
    }
  }
  return out;
}
