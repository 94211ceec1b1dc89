import { writeFileSync } from "node:fs";
import { join, resolve } from "node:path";

import { describe, expect, it } from "vitest";

import { parseListing } from "../src/listing.js";
import { makeTempDir } from "./helpers.js";

function writeListing(lines: string[]): string {
  const dir = makeTempDir("listing-");
  const path = join(dir, "listing.tsv");
  writeFileSync(path, lines.join("\n") + "\n", "utf8");
  return path;
}

describe("parseListing", () => {
  it("parses four-column rows and resolves relative paths", () => {
    const path = writeListing([
      "a.pgm\tr.txt\t0\tpatient1",
      "sub/b.pgm\t\t1\tpatient2",
    ]);
    const { rows, skipped } = parseListing(path);
    expect(skipped).toEqual([]);
    expect(rows).toHaveLength(2);
    const base = resolve(path, "..");
    expect(rows[0]).toMatchObject({
      imagePath: join(base, "a.pgm"),
      reportPath: join(base, "r.txt"),
      label: 0,
      groupId: "patient1",
      lineNumber: 1,
    });
    expect(rows[1]!.reportPath).toBeNull();
    expect(rows[1]!.imagePath).toBe(join(base, "sub/b.pgm"));
  });

  it("ignores comments and blank lines without counting them", () => {
    const path = writeListing([
      "# header comment",
      "",
      "a.pgm\tr.txt\t0\tg0",
      "   ",
      "# trailing",
    ]);
    const { rows, skipped } = parseListing(path);
    expect(rows).toHaveLength(1);
    expect(skipped).toEqual([]);
  });

  it("records malformed rows as skips with reasons", () => {
    const path = writeListing([
      "only-two-columns\there",
      "a.pgm\tr.txt\tnot-a-number\tg0",
      "a.pgm\tr.txt\t-3\tg0",
      "\tr.txt\t0\tg0",
      "a.pgm\tr.txt\t0\t",
      "b.pgm\t\t2\tg1",
    ]);
    const { rows, skipped } = parseListing(path);
    expect(rows).toHaveLength(1);
    expect(rows[0]!.label).toBe(2);
    expect(skipped).toHaveLength(5);
    expect(skipped.map((s) => s.lineNumber)).toEqual([1, 2, 3, 4, 5]);
    expect(skipped[0]!.reason).toContain("4 tab-separated columns");
    expect(skipped[1]!.reason).toContain("label");
    expect(skipped[2]!.reason).toContain("label");
    expect(skipped[3]!.reason).toContain("image_path");
    expect(skipped[4]!.reason).toContain("group_id");
  });

  it("tolerates CRLF line endings", () => {
    const dir = makeTempDir("listing-crlf-");
    const path = join(dir, "listing.tsv");
    writeFileSync(path, "a.pgm\tr.txt\t1\tg0\r\nb.pgm\t\t0\tg1\r\n", "utf8");
    const { rows, skipped } = parseListing(path);
    expect(skipped).toEqual([]);
    expect(rows).toHaveLength(2);
    expect(rows[0]!.groupId).toBe("g0");
  });
});
