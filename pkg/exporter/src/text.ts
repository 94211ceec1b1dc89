import { SeededRng } from "./rng.js";

export interface TextEncodeResult {
  /** Row-major [nTokens, dText] embedding block. */
  tokens: Float64Array;
  nTokens: number;
  /** True when the report exceeded the encoder's token budget. */
  truncated: boolean;
}

/** Lowercase a report and split it into word tokens. */
export function tokenizeReport(text: string): string[] {
  return text
    .toLowerCase()
    .split(/[^a-z0-9]+/)
    .filter((word) => word.length > 0);
}

/**
 * Embed a report as one vector per word.
 *
 * Each distinct word maps to a fixed gaussian vector seeded from the
 * encoder id and the word itself, so identical text always produces an
 * identical block. An empty report yields a single all-zero pad token:
 * the output format requires at least one text token per record whenever
 * the corpus carries text at all.
 */
export function encodeReport(
  text: string,
  encoderId: string,
  dText: number,
  maxTokens: number,
): TextEncodeResult {
  const words = tokenizeReport(text);
  const truncated = words.length > maxTokens;
  const kept = truncated ? words.slice(0, maxTokens) : words;

  if (kept.length === 0) {
    return { tokens: new Float64Array(dText), nTokens: 1, truncated };
  }

  const tokens = new Float64Array(kept.length * dText);
  const cache = new Map<string, Float64Array>();
  for (let i = 0; i < kept.length; i++) {
    const word = kept[i]!;
    let row = cache.get(word);
    if (row === undefined) {
      const rng = new SeededRng(`${encoderId}/word/${word}`);
      row = rng.gaussianArray(dText);
      const norm = Math.hypot(...row);
      if (norm > 0) for (let j = 0; j < dText; j++) row[j]! /= norm;
      cache.set(word, row);
    }
    tokens.set(row, i * dText);
  }
  return { tokens, nTokens: kept.length, truncated };
}
