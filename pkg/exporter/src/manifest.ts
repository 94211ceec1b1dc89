import { createHash } from "node:crypto";
import { mkdirSync, renameSync, writeFileSync } from "node:fs";
import { dirname, join } from "node:path";

export const FORMAT_VERSION = 1;

export interface RecordMeta {
  image_offset: number;
  image_n_tokens: number;
  text_offset: number;
  text_n_tokens: number;
  label: number;
  group_id: string;
}

export interface Manifest {
  format_version: number;
  n_samples: number;
  n_classes: number;
  d_image: number;
  d_text: number;
  has_cls: { image: boolean; text: boolean };
  records: RecordMeta[];
  provenance: Record<string, string>;
  checksum: { algorithm: "sha256"; value: string };
}

type JsonValue =
  | string
  | number
  | boolean
  | null
  | JsonValue[]
  | { [key: string]: JsonValue };

function escapeString(value: string): string {
  let out = '"';
  for (const ch of value) {
    const code = ch.codePointAt(0)!;
    if (ch === '"') out += '\\"';
    else if (ch === "\\") out += "\\\\";
    else if (code === 0x08) out += "\\b";
    else if (code === 0x09) out += "\\t";
    else if (code === 0x0a) out += "\\n";
    else if (code === 0x0c) out += "\\f";
    else if (code === 0x0d) out += "\\r";
    else if (code < 0x20 || code > 0x7e) {
      // escape control and non-ascii as UTF-16 units
      for (let i = 0; i < ch.length; i++) {
        out += "\\u" + ch.charCodeAt(i).toString(16).padStart(4, "0");
      }
    } else out += ch;
  }
  return out + '"';
}

/**
 * Serialize to the canonical manifest form: keys sorted, two-space
 * indentation, ASCII-only strings, trailing newline. Byte-identical
 * input data therefore always yields a byte-identical manifest file.
 */
export function canonicalJson(value: JsonValue): string {
  return render(value, 0) + "\n";
}

function render(value: JsonValue, depth: number): string {
  if (value === null) return "null";
  if (typeof value === "boolean") return value ? "true" : "false";
  if (typeof value === "number") {
    if (!Number.isFinite(value)) throw new Error("non-finite number in manifest");
    if (!Number.isInteger(value)) {
      throw new Error(`manifest numbers must be integers, got ${value}`);
    }
    return String(value);
  }
  if (typeof value === "string") return escapeString(value);

  const pad = "  ".repeat(depth + 1);
  const close = "  ".repeat(depth);
  if (Array.isArray(value)) {
    if (value.length === 0) return "[]";
    const items = value.map((item) => pad + render(item, depth + 1));
    return "[\n" + items.join(",\n") + "\n" + close + "]";
  }
  const keys = Object.keys(value).sort();
  if (keys.length === 0) return "{}";
  const items = keys.map(
    (key) => pad + escapeString(key) + ": " + render(value[key]!, depth + 1),
  );
  return "{\n" + items.join(",\n") + "\n" + close + "}";
}

export function sha256Hex(data: Buffer): string {
  return createHash("sha256").update(data).digest("hex");
}

/**
 * Write manifest.json and embeddings.bin into outDir atomically: each
 * file lands via a temp-name rename so a crash never leaves a torn pair
 * visible under the final names.
 */
export function writeDatasetFiles(
  outDir: string,
  manifest: Manifest,
  blob: Buffer,
): { manifestPath: string; blobPath: string } {
  mkdirSync(outDir, { recursive: true });
  const manifestPath = join(outDir, "manifest.json");
  const blobPath = join(outDir, "embeddings.bin");
  const manifestText = canonicalJson(manifest as unknown as JsonValue);

  const blobTmp = join(dirname(blobPath), ".embeddings.bin.tmp");
  writeFileSync(blobTmp, blob);
  renameSync(blobTmp, blobPath);

  const manifestTmp = join(dirname(manifestPath), ".manifest.json.tmp");
  writeFileSync(manifestTmp, manifestText, "utf8");
  renameSync(manifestTmp, manifestPath);

  return { manifestPath, blobPath };
}
