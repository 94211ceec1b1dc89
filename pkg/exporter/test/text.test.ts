import { describe, expect, it } from "vitest";

import { encodeReport, tokenizeReport } from "../src/text.js";

describe("tokenizeReport", () => {
  it("lowercases and splits on non-alphanumerics", () => {
    expect(tokenizeReport("No acute findings; heart-size NORMAL.")).toEqual([
      "no",
      "acute",
      "findings",
      "heart",
      "size",
      "normal",
    ]);
  });

  it("keeps digits and drops empty fragments", () => {
    expect(tokenizeReport("  T2  lesion,, 3mm ")).toEqual(["t2", "lesion", "3mm"]);
  });

  it("returns nothing for whitespace-only input", () => {
    expect(tokenizeReport(" \n\t ")).toEqual([]);
  });
});

describe("encodeReport", () => {
  it("emits one unit-norm row per word", () => {
    const { tokens, nTokens, truncated } = encodeReport(
      "clear lungs today",
      "enc-a",
      8,
      16,
    );
    expect(nTokens).toBe(3);
    expect(truncated).toBe(false);
    expect(tokens).toHaveLength(3 * 8);
    for (let t = 0; t < 3; t++) {
      let normSq = 0;
      for (let j = 0; j < 8; j++) normSq += tokens[t * 8 + j]! ** 2;
      expect(Math.sqrt(normSq)).toBeCloseTo(1, 10);
    }
  });

  it("maps repeated words to identical rows", () => {
    const { tokens } = encodeReport("normal exam normal", "enc-a", 6, 16);
    const first = [...tokens.slice(0, 6)];
    const third = [...tokens.slice(12, 18)];
    expect(third).toEqual(first);
  });

  it("is deterministic per encoder and differs across encoders", () => {
    const a1 = encodeReport("pleural effusion", "enc-a", 8, 16);
    const a2 = encodeReport("pleural effusion", "enc-a", 8, 16);
    const b = encodeReport("pleural effusion", "enc-b", 8, 16);
    expect([...a1.tokens]).toEqual([...a2.tokens]);
    expect([...a1.tokens]).not.toEqual([...b.tokens]);
  });

  it("pads an empty report with a single zero token", () => {
    const { tokens, nTokens, truncated } = encodeReport("", "enc-a", 5, 16);
    expect(nTokens).toBe(1);
    expect(truncated).toBe(false);
    expect([...tokens]).toEqual([0, 0, 0, 0, 0]);
  });

  it("truncates long reports at the budget and flags it", () => {
    const words = Array.from({ length: 30 }, (_, i) => `w${i}`).join(" ");
    const { nTokens, truncated, tokens } = encodeReport(words, "enc-a", 4, 10);
    expect(nTokens).toBe(10);
    expect(truncated).toBe(true);
    expect(tokens).toHaveLength(40);
    // prefix must match the untruncated encoding of the same words
    const full = encodeReport(words, "enc-a", 4, 30);
    expect([...tokens]).toEqual([...full.tokens.slice(0, 40)]);
  });
});
