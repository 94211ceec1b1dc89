import { createHash } from "node:crypto";
import { readFileSync } from "node:fs";

import { EncoderSpec, encodeImageTokens, getEncoderSpec } from "./encoders.js";
import { decodeNetpbmBytes } from "./image.js";
import { ListingRow, parseListing } from "./listing.js";
import {
  Manifest,
  RecordMeta,
  FORMAT_VERSION,
  sha256Hex,
  writeDatasetFiles,
} from "./manifest.js";
import { encodeReport } from "./text.js";

export const EXPORTER_VERSION = "0.1.0";

/** Raised for conditions that must abort the export outright. */
export class ExportError extends Error {}

export interface ExportOptions {
  listingPath: string;
  outDir: string;
  encoderId: string;
  /** Abort when more than this fraction of data lines is skipped. */
  maxSkipFraction?: number;
  log?: (message: string) => void;
}

export interface SkipInfo {
  lineNumber: number;
  reason: string;
}

export interface ExportResult {
  manifestPath: string;
  blobPath: string;
  blobSha256: string;
  nSamples: number;
  nClasses: number;
  dImage: number;
  dText: number;
  imageTokensPerRecord: number;
  /** "full" when every record carries text, "none" when no record does. */
  textMode: "full" | "none";
  /** True when text columns were mixed and therefore dropped entirely. */
  textDroppedMixed: boolean;
  truncatedReports: number;
  skips: SkipInfo[];
  attemptedRows: number;
}

interface EncodedSample {
  image: Float64Array;
  imageTokens: number;
  text: Float64Array | null;
  textTokens: number;
  label: number;
  groupId: string;
  contentHash: string;
}

/**
 * Export a listed corpus of netpbm images and plain-text reports into
 * the embedding dataset format: manifest.json plus embeddings.bin.
 *
 * Every stage is deterministic in the input bytes and the encoder id,
 * so re-running over identical inputs reproduces both files bit for bit.
 * Rows that cannot be processed are skipped and counted; exceeding the
 * skip budget, or ending with no rows, aborts without writing anything.
 */
export function exportDataset(options: ExportOptions): ExportResult {
  const log = options.log ?? (() => {});
  const maxSkipFraction = options.maxSkipFraction ?? 0.01;
  const spec = getEncoderSpec(options.encoderId);

  const listingBytes = readFileSync(options.listingPath);
  const parsed = parseListing(options.listingPath);
  const skips: SkipInfo[] = [...parsed.skipped];
  const attemptedRows = parsed.rows.length + parsed.skipped.length;
  if (attemptedRows === 0) {
    throw new ExportError(`listing ${options.listingPath} contains no data rows`);
  }

  // Text is all-or-nothing in the output format, so mixed report columns
  // force an image-only export rather than fabricating text for some rows.
  const withText = parsed.rows.filter((r) => r.reportPath !== null).length;
  const textDroppedMixed = withText > 0 && withText < parsed.rows.length;
  const useText = withText === parsed.rows.length && parsed.rows.length > 0;
  if (textDroppedMixed) {
    log(
      `warning: ${withText}/${parsed.rows.length} rows have reports; ` +
        "text embeddings require every row to carry one, exporting image-only",
    );
  }

  const samples: EncodedSample[] = [];
  const truncatedLines: number[] = [];
  for (const row of parsed.rows) {
    const encoded = encodeRow(row, spec, useText, skips);
    if (encoded === null) continue;
    if (encoded.textWasTruncated) truncatedLines.push(row.lineNumber);
    samples.push(encoded.sample);
  }
  const truncatedReports = truncatedLines.length;

  for (const skip of skips) {
    log(`skip line ${skip.lineNumber}: ${skip.reason}`);
  }
  if (samples.length === 0) {
    throw new ExportError("no rows survived processing; nothing to export");
  }
  if (skips.length / attemptedRows > maxSkipFraction) {
    throw new ExportError(
      `${skips.length}/${attemptedRows} rows skipped, above the ` +
        `${(maxSkipFraction * 100).toFixed(2)}% budget; aborting`,
    );
  }

  const labels = new Set(samples.map((s) => s.label));
  if (labels.size < 2) {
    throw new ExportError(
      `need at least 2 distinct labels, got ${labels.size}`,
    );
  }
  const nClasses = Math.max(...labels) + 1;

  const dText = useText ? spec.dText : 0;
  const { blob, records } = assembleBlob(samples, spec.dImage, dText);
  const blobSha256 = sha256Hex(blob);

  const corpusHasher = createHash("sha256");
  for (const sample of samples) corpusHasher.update(sample.contentHash + "\n");

  const manifest: Manifest = {
    format_version: FORMAT_VERSION,
    n_samples: samples.length,
    n_classes: nClasses,
    d_image: spec.dImage,
    d_text: dText,
    has_cls: { image: spec.hasClsImage, text: false },
    records,
    provenance: {
      exporter: `embedding-exporter ${EXPORTER_VERSION}`,
      encoder: spec.id,
      encoder_description: spec.description,
      image_grid: `${spec.gridSide}x${spec.gridSide}${spec.hasClsImage ? "+cls" : ""}`,
      image_tokens_per_record: String(spec.nImageTokens),
      image_preprocessing:
        `netpbm decode, nearest-neighbor resize to ${spec.inputSide}px, ` +
        `${spec.patchSide}px patches row-major, seeded linear projection`,
      text_preprocessing: useText
        ? "lowercase word split, seeded unit-norm word vectors, " +
          `truncated at ${spec.maxTextTokens} tokens`
        : "omitted",
      listing_sha256: sha256Hex(listingBytes),
      corpus_sha256: corpusHasher.digest("hex"),
      rows_skipped: String(skips.length),
      reports_truncated: String(truncatedReports),
      truncated_report_lines: truncatedLines.join(","),
    },
    checksum: { algorithm: "sha256", value: blobSha256 },
  };

  const { manifestPath, blobPath } = writeDatasetFiles(
    options.outDir,
    manifest,
    blob,
  );
  return {
    manifestPath,
    blobPath,
    blobSha256,
    nSamples: samples.length,
    nClasses,
    dImage: spec.dImage,
    dText,
    imageTokensPerRecord: spec.nImageTokens,
    textMode: useText ? "full" : "none",
    textDroppedMixed,
    truncatedReports,
    skips,
    attemptedRows,
  };
}

function encodeRow(
  row: ListingRow,
  spec: EncoderSpec,
  useText: boolean,
  skips: SkipInfo[],
): { sample: EncodedSample; textWasTruncated: boolean } | null {
  let imageBytes: Buffer;
  try {
    imageBytes = readFileSync(row.imagePath);
  } catch (err) {
    skips.push({
      lineNumber: row.lineNumber,
      reason: `cannot read image ${row.imagePath}: ${messageOf(err)}`,
    });
    return null;
  }

  let image: Float64Array;
  try {
    image = encodeImageTokens(spec, decodeNetpbmBytes(imageBytes));
  } catch (err) {
    skips.push({
      lineNumber: row.lineNumber,
      reason: `cannot decode image ${row.imagePath}: ${messageOf(err)}`,
    });
    return null;
  }

  const hasher = createHash("sha256");
  hasher.update(sha256Hex(imageBytes));

  let text: Float64Array | null = null;
  let textTokens = 0;
  let textWasTruncated = false;
  if (useText) {
    let reportBytes: Buffer;
    try {
      reportBytes = readFileSync(row.reportPath!);
    } catch (err) {
      skips.push({
        lineNumber: row.lineNumber,
        reason: `cannot read report ${row.reportPath}: ${messageOf(err)}`,
      });
      return null;
    }
    hasher.update(":" + sha256Hex(reportBytes));
    const result = encodeReport(
      reportBytes.toString("utf8"),
      spec.id,
      spec.dText,
      spec.maxTextTokens,
    );
    text = result.tokens;
    textTokens = result.nTokens;
    textWasTruncated = result.truncated;
  }
  hasher.update(`:${row.label}:${row.groupId}`);

  return {
    sample: {
      image,
      imageTokens: spec.nImageTokens,
      text,
      textTokens,
      label: row.label,
      groupId: row.groupId,
      contentHash: hasher.digest("hex"),
    },
    textWasTruncated,
  };
}

function assembleBlob(
  samples: EncodedSample[],
  dImage: number,
  dText: number,
): { blob: Buffer; records: RecordMeta[] } {
  let totalFloats = 0;
  for (const sample of samples) {
    totalFloats += sample.imageTokens * dImage;
    if (dText > 0) totalFloats += sample.textTokens * dText;
  }

  const blob = Buffer.alloc(totalFloats * 4);
  const records: RecordMeta[] = [];
  let offset = 0; // float32 elements, matching the manifest convention
  for (const sample of samples) {
    const imageOffset = offset;
    offset = writeFloats(blob, offset, sample.image);
    let textOffset = 0;
    let textTokens = 0;
    if (dText > 0) {
      textOffset = offset;
      textTokens = sample.textTokens;
      offset = writeFloats(blob, offset, sample.text!);
    }
    records.push({
      image_offset: imageOffset,
      image_n_tokens: sample.imageTokens,
      text_offset: textOffset,
      text_n_tokens: textTokens,
      label: sample.label,
      group_id: sample.groupId,
    });
  }
  return { blob, records };
}

function writeFloats(blob: Buffer, offset: number, values: Float64Array): number {
  for (let i = 0; i < values.length; i++) {
    const value = values[i]!;
    if (!Number.isFinite(value)) {
      throw new ExportError("refusing to write non-finite embedding values");
    }
    blob.writeFloatLE(Math.fround(value), (offset + i) * 4);
  }
  return offset + values.length;
}

function messageOf(err: unknown): string {
  return err instanceof Error ? err.message : String(err);
}
