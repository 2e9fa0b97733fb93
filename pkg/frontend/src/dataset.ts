/**
 * Frame-pair sample preparation from tensor files.
 *
 * A training sample for the frame-jump pair (k, k + i) consists of the
 * normalized material channels plus the damage map at frame k, the
 * (stress, strain) pair at frame k, and as targets the damage map and
 * stress at frame k + i. Nominal stress/strain are the domain means of the
 * sig_x / eps_x channels, which coincide with reaction / side length and
 * prescribed displacement / side length for this loading.
 */

import * as tf from "@tensorflow/tfjs";

import {
  TensorData,
  channelIndex,
  frameChannel,
  frameChannelMean,
  itzMaskFromTensor,
  readTensor,
} from "./tensorFile.js";

export interface Normalization {
  eScale: number;
  sigmaUtsScale: number;
  gcScale: number;
  stressScale: number;
  strainScale: number;
}

/** Defaults sized to the shipped three-phase property table. */
export const DEFAULT_NORM: Normalization = {
  eScale: 1 / 72000.0,
  sigmaUtsScale: 1 / 20.0,
  gcScale: 1 / 0.2,
  stressScale: 1 / 4.0,
  strainScale: 1000.0,
};

export interface FramePairSample {
  /** [n, n, 4]: E, sigma_uts, Gc (normalized), phi at frame k */
  input: Float32Array;
  /** [2]: normalized (stress_k, strain_k) */
  stressStrain: Float32Array;
  /** [n, n]: phi at frame k + i */
  targetMap: Float32Array;
  /** normalized stress at frame k + i */
  targetStress: number;
  n: number;
}

export function materialInput(
  tensor: TensorData,
  phi: Float32Array,
  norm: Normalization = DEFAULT_NORM
): Float32Array {
  const n = tensor.n;
  const e = frameChannel(tensor, 0, channelIndex("E"));
  const su = frameChannel(tensor, 0, channelIndex("sigma_uts"));
  const gc = frameChannel(tensor, 0, channelIndex("Gc"));
  const out = new Float32Array(n * n * 4);
  for (let c = 0; c < n * n; c++) {
    out[c * 4] = e[c] * norm.eScale;
    out[c * 4 + 1] = su[c] * norm.sigmaUtsScale;
    out[c * 4 + 2] = gc[c] * norm.gcScale;
    out[c * 4 + 3] = phi[c];
  }
  return out;
}

export function framePair(
  tensor: TensorData,
  k: number,
  i: number,
  norm: Normalization = DEFAULT_NORM
): FramePairSample {
  if (k < 0 || k + i >= tensor.frames) {
    throw new Error(`frame pair (${k}, ${k + i}) out of range [0, ${tensor.frames})`);
  }
  const phiK = frameChannel(tensor, k, channelIndex("phi"));
  return {
    input: materialInput(tensor, phiK, norm),
    stressStrain: new Float32Array([
      frameChannelMean(tensor, k, channelIndex("sig_x")) * norm.stressScale,
      frameChannelMean(tensor, k, channelIndex("eps_x")) * norm.strainScale,
    ]),
    targetMap: frameChannel(tensor, k + i, channelIndex("phi")),
    targetStress:
      frameChannelMean(tensor, k + i, channelIndex("sig_x")) * norm.stressScale,
    n: tensor.n,
  };
}

export interface LoadedDataset {
  samples: FramePairSample[];
  itzMask: Uint8Array;
  n: number;
}

export function loadFramePairs(
  paths: string[],
  k: number,
  i: number,
  norm: Normalization = DEFAULT_NORM
): LoadedDataset {
  if (paths.length === 0) {
    throw new Error("no tensor files given");
  }
  const samples: FramePairSample[] = [];
  let mask: Uint8Array | null = null;
  let n = 0;
  for (const path of paths) {
    const tensor = readTensor(path);
    if (n === 0) {
      n = tensor.n;
    } else if (tensor.n !== n) {
      throw new Error(`${path}: grid ${tensor.n} differs from ${n}`);
    }
    samples.push(framePair(tensor, k, i, norm));
    // Per-sample masks are combined by the caller if needed; training uses
    // the per-sample mask, so keep the last tensor's mask for single-source
    // sets and expose per-sample masks via sampleMasks().
    mask = itzMaskFromTensor(tensor);
  }
  return { samples, itzMask: mask as Uint8Array, n };
}

/** Per-sample ITZ masks (one per file, aligned with loadFramePairs order). */
export function sampleMasks(paths: string[]): Uint8Array[] {
  return paths.map((p) => itzMaskFromTensor(readTensor(p)));
}

/**
 * Deterministic 80/20-style split: indices are shuffled with a seeded
 * linear-congruential sequence and partitioned; train and validation are
 * disjoint and cover everything.
 */
export function splitIndices(
  count: number,
  trainFraction: number,
  seed = 1
): { train: number[]; val: number[] } {
  const idx = Array.from({ length: count }, (_, i) => i);
  let state = BigInt(seed) & 0xffffffffn;
  const next = () => {
    state = (state * 1664525n + 1013904223n) & 0xffffffffn;
    return Number(state) / 2 ** 32;
  };
  for (let i = count - 1; i > 0; i--) {
    const j = Math.floor(next() * (i + 1));
    [idx[i], idx[j]] = [idx[j], idx[i]];
  }
  const nTrain = Math.max(1, Math.round(count * trainFraction));
  return { train: idx.slice(0, nTrain), val: idx.slice(nTrain) };
}

export function samplesToTensors(samples: FramePairSample[], n: number) {
  const b = samples.length;
  const inputs = new Float32Array(b * n * n * 4);
  const ss = new Float32Array(b * 2);
  const targets = new Float32Array(b * n * n);
  const stresses = new Float32Array(b);
  samples.forEach((s, bi) => {
    inputs.set(s.input, bi * n * n * 4);
    ss.set(s.stressStrain, bi * 2);
    targets.set(s.targetMap, bi * n * n);
    stresses[bi] = s.targetStress;
  });
  return {
    maps: tf.tensor4d(inputs, [b, n, n, 4]),
    stressStrain: tf.tensor2d(ss, [b, 2]),
    targetMaps: tf.tensor4d(targets, [b, n, n, 1]),
    targetStress: tf.tensor2d(stresses, [b, 1]),
  };
}
