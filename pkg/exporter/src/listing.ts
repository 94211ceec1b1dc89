import { readFileSync } from "node:fs";
import { resolve, dirname } from "node:path";

/** One row of the input listing after parsing and path resolution. */
export interface ListingRow {
  lineNumber: number;
  imagePath: string;
  reportPath: string | null;
  label: number;
  groupId: string;
}

export interface ParsedListing {
  rows: ListingRow[];
  /** Lines dropped during parsing, with the reason each was dropped. */
  skipped: { lineNumber: number; reason: string }[];
}

/**
 * Parse a tab-separated listing file.
 *
 * Columns: image_path, report_path (may be empty), label, group_id.
 * Lines that are empty or start with '#' are ignored outright; malformed
 * lines are recorded as skips so the caller can enforce its skip budget.
 * Relative paths resolve against the listing file's directory.
 */
export function parseListing(listingPath: string): ParsedListing {
  const text = readFileSync(listingPath, "utf8");
  const base = dirname(resolve(listingPath));
  const rows: ListingRow[] = [];
  const skipped: { lineNumber: number; reason: string }[] = [];

  const lines = text.split("\n");
  for (let i = 0; i < lines.length; i++) {
    const lineNumber = i + 1;
    const raw = lines[i] ?? "";
    const line = raw.replace(/\r$/, "");
    if (line.trim() === "" || line.startsWith("#")) continue;

    const parts = line.split("\t");
    if (parts.length !== 4) {
      skipped.push({
        lineNumber,
        reason: `expected 4 tab-separated columns, got ${parts.length}`,
      });
      continue;
    }
    const [imageRaw, reportRaw, labelRaw, groupRaw] = parts as [
      string,
      string,
      string,
      string,
    ];
    if (imageRaw.trim() === "") {
      skipped.push({ lineNumber, reason: "empty image_path" });
      continue;
    }
    if (!/^\d+$/.test(labelRaw.trim())) {
      skipped.push({
        lineNumber,
        reason: `label must be a non-negative integer, got ${JSON.stringify(labelRaw)}`,
      });
      continue;
    }
    if (groupRaw.trim() === "") {
      skipped.push({ lineNumber, reason: "empty group_id" });
      continue;
    }
    const report = reportRaw.trim();
    rows.push({
      lineNumber,
      imagePath: resolve(base, imageRaw.trim()),
      reportPath: report === "" ? null : resolve(base, report),
      label: parseInt(labelRaw.trim(), 10),
      groupId: groupRaw.trim(),
    });
  }

  return { rows, skipped };
}
