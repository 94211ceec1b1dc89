import { RasterImage, extractPatch, resizeNearest } from "./image.js";
import { SeededRng } from "./rng.js";

/**
 * Catalog entry for one seeded encoder.
 *
 * These encoders are deterministic stand-ins for pretrained backbones:
 * every weight is drawn from a stream seeded by the encoder id, so any
 * machine reproduces the same embeddings bit for bit without downloading
 * checkpoints. The token geometry (grid, CLS handling, widths) mirrors
 * the layout a real patch encoder would emit.
 */
export interface EncoderSpec {
  id: string;
  inputSide: number;
  patchSide: number;
  /** Patches per image side after resizing to inputSide. */
  gridSide: number;
  nPatchTokens: number;
  hasClsImage: boolean;
  /** Patch tokens plus the CLS slot when present; CLS comes first. */
  nImageTokens: number;
  dImage: number;
  dText: number;
  maxTextTokens: number;
  description: string;
}

function spec(
  id: string,
  inputSide: number,
  patchSide: number,
  hasClsImage: boolean,
  dImage: number,
  dText: number,
  maxTextTokens: number,
  description: string,
): EncoderSpec {
  const gridSide = inputSide / patchSide;
  if (!Number.isInteger(gridSide)) {
    throw new Error(`patch ${patchSide} does not tile input ${inputSide}`);
  }
  const nPatchTokens = gridSide * gridSide;
  return {
    id,
    inputSide,
    patchSide,
    gridSide,
    nPatchTokens,
    hasClsImage,
    nImageTokens: nPatchTokens + (hasClsImage ? 1 : 0),
    dImage,
    dText,
    maxTextTokens,
    description,
  };
}

export const ENCODERS: ReadonlyMap<string, EncoderSpec> = new Map(
  [
    spec(
      "seeded-vit-b16-224",
      224,
      16,
      true,
      768,
      512,
      77,
      "base patch encoder: 224px input, 14x14 grid plus CLS, 768-dim tokens",
    ),
    spec(
      "seeded-vit-t16-64",
      64,
      16,
      true,
      48,
      32,
      16,
      "tiny patch encoder: 64px input, 4x4 grid plus CLS, 48-dim tokens",
    ),
    spec(
      "seeded-conv-s32-224",
      224,
      32,
      false,
      256,
      128,
      32,
      "small conv encoder: 224px input, 7x7 grid, no CLS, 256-dim tokens",
    ),
  ].map((s) => [s.id, s]),
);

export function getEncoderSpec(id: string): EncoderSpec {
  const found = ENCODERS.get(id);
  if (found === undefined) {
    const known = [...ENCODERS.keys()].join(", ");
    throw new Error(`unknown encoder ${JSON.stringify(id)}; known: ${known}`);
  }
  return found;
}

interface EncoderWeights {
  /** Row-major [dImage, patchDim] patch projection. */
  projection: Float64Array;
  /** Row-major [nPatchTokens, dImage] additive position embeddings. */
  positions: Float64Array;
  /** CLS gain and bias over the mean patch token, dImage each. */
  clsGain: Float64Array;
  clsBias: Float64Array;
}

const weightCache = new Map<string, EncoderWeights>();

function weightsFor(specEntry: EncoderSpec): EncoderWeights {
  const cached = weightCache.get(specEntry.id);
  if (cached !== undefined) return cached;

  const patchDim = specEntry.patchSide * specEntry.patchSide * 3;
  const projRng = new SeededRng(`${specEntry.id}/projection`);
  const projection = projRng.gaussianArray(specEntry.dImage * patchDim);
  const scale = 1 / Math.sqrt(patchDim);
  for (let i = 0; i < projection.length; i++) projection[i]! *= scale;

  const posRng = new SeededRng(`${specEntry.id}/positions`);
  const positions = posRng.gaussianArray(specEntry.nPatchTokens * specEntry.dImage);
  for (let i = 0; i < positions.length; i++) positions[i]! *= 0.1;

  const clsRng = new SeededRng(`${specEntry.id}/cls`);
  const clsGain = clsRng.gaussianArray(specEntry.dImage);
  const clsBias = clsRng.gaussianArray(specEntry.dImage);
  for (let i = 0; i < specEntry.dImage; i++) clsBias[i]! *= 0.1;

  const weights = { projection, positions, clsGain, clsBias };
  weightCache.set(specEntry.id, weights);
  return weights;
}

/**
 * Encode a decoded raster into the encoder's token block.
 *
 * The raster is resized (nearest neighbor) to the encoder's input side,
 * tiled into patches row-major, and each centered patch vector is pushed
 * through the seeded projection, position offset, and a tanh squash.
 * When the encoder has a CLS slot, token 0 is a squashed affine image
 * summary and patch tokens follow.
 *
 * Returns a row-major [nImageTokens, dImage] block.
 */
export function encodeImageTokens(
  specEntry: EncoderSpec,
  raster: RasterImage,
): Float64Array {
  const weights = weightsFor(specEntry);
  const resized = resizeNearest(raster, specEntry.inputSide);
  const patchDim = specEntry.patchSide * specEntry.patchSide * 3;
  const { dImage, gridSide, nPatchTokens, hasClsImage } = specEntry;

  const patchTokens = new Float64Array(nPatchTokens * dImage);
  const meanToken = new Float64Array(dImage);
  for (let row = 0; row < gridSide; row++) {
    for (let col = 0; col < gridSide; col++) {
      const tokenIndex = row * gridSide + col;
      const patch = extractPatch(resized, row, col, specEntry.patchSide);
      for (let j = 0; j < patchDim; j++) patch[j]! -= 0.5;
      for (let i = 0; i < dImage; i++) {
        let acc = weights.positions[tokenIndex * dImage + i]!;
        const rowBase = i * patchDim;
        for (let j = 0; j < patchDim; j++) {
          acc += weights.projection[rowBase + j]! * patch[j]!;
        }
        const value = Math.tanh(acc);
        patchTokens[tokenIndex * dImage + i] = value;
        meanToken[i]! += value / nPatchTokens;
      }
    }
  }

  if (!hasClsImage) return patchTokens;

  const out = new Float64Array((nPatchTokens + 1) * dImage);
  for (let i = 0; i < dImage; i++) {
    out[i] = Math.tanh(weights.clsGain[i]! * meanToken[i]! + weights.clsBias[i]!);
  }
  out.set(patchTokens, dImage);
  return out;
}
