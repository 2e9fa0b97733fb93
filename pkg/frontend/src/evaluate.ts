/**
 * Damage-map comparison metrics, bit-compatible with the simulation
 * pipeline's implementation: the threshold is the 99th percentile of the
 * ground-truth map (order-statistic interpolation at the (m + 1) p
 * plotting position), binarization is strict `>`, and F1 combines the
 * cell-wise precision and recall.
 */

import { TensorData, channelIndex, frameChannel } from "./tensorFile.js";

export interface F1Report {
  threshold: number;
  precision: number;
  recall: number;
  f1: number;
  truePositives: number;
  falsePositives: number;
  falseNegatives: number;
}

export function damageThreshold(values: ArrayLike<number>, percentile = 99.0): number {
  const sorted = Array.from(values).sort((a, b) => a - b);
  const m = sorted.length;
  if (m === 0) {
    throw new Error("empty damage map");
  }
  const q = percentile / 100.0;
  const h = (m + 1) * q;
  if (h <= 1.0) return sorted[0];
  if (h >= m) return sorted[m - 1];
  const k = Math.floor(h);
  const frac = h - k;
  return sorted[k - 1] + frac * (sorted[k] - sorted[k - 1]);
}

export function binarize(values: ArrayLike<number>, threshold: number): Uint8Array {
  const out = new Uint8Array(values.length);
  for (let i = 0; i < values.length; i++) {
    out[i] = values[i] > threshold ? 1 : 0;
  }
  return out;
}

export function f1Score(
  truthBin: ArrayLike<number>,
  predBin: ArrayLike<number>,
  threshold = NaN
): F1Report {
  if (truthBin.length !== predBin.length) {
    throw new Error(`shape mismatch: ${truthBin.length} vs ${predBin.length}`);
  }
  let tp = 0;
  let fp = 0;
  let fn = 0;
  for (let i = 0; i < truthBin.length; i++) {
    const t = truthBin[i] !== 0;
    const p = predBin[i] !== 0;
    if (t && p) tp++;
    else if (!t && p) fp++;
    else if (t && !p) fn++;
  }
  const precision = tp + fp > 0 ? tp / (tp + fp) : 0;
  const recall = tp + fn > 0 ? tp / (tp + fn) : 0;
  const f1 = precision + recall > 0 ? (2 * precision * recall) / (precision + recall) : 0;
  return {
    threshold,
    precision,
    recall,
    f1,
    truePositives: tp,
    falsePositives: fp,
    falseNegatives: fn,
  };
}

export function evaluateDamageMaps(
  truth: ArrayLike<number>,
  pred: ArrayLike<number>,
  percentile = 99.0
): F1Report {
  const threshold = damageThreshold(truth, percentile);
  return f1Score(binarize(truth, threshold), binarize(pred, threshold), threshold);
}

/** Per-frame F1 CSV rows between two tensors' damage channels. */
export function evaluateTensors(
  truth: TensorData,
  pred: TensorData,
  frames?: number[]
): string[] {
  if (
    truth.frames !== pred.frames ||
    truth.n !== pred.n ||
    truth.channels !== pred.channels
  ) {
    throw new Error("tensor shapes differ");
  }
  const phi = channelIndex("phi");
  const which = frames ?? Array.from({ length: truth.frames }, (_, i) => i);
  const rows = ["frame,threshold,precision,recall,f1"];
  for (const k of which) {
    const rep = evaluateDamageMaps(
      frameChannel(truth, k, phi),
      frameChannel(pred, k, phi)
    );
    rows.push(`${k},${rep.threshold},${rep.precision},${rep.recall},${rep.f1}`);
  }
  return rows;
}

export interface CurveMetrics {
  peakRelError: number;
  energyRelError: number;
}

function trapezoid(x: number[], y: number[]): number {
  let area = 0;
  for (let i = 1; i < x.length; i++) {
    area += 0.5 * (y[i] + y[i - 1]) * (x[i] - x[i - 1]);
  }
  return area;
}

export function curveMetrics(
  truthStrain: number[],
  truthStress: number[],
  predStrain: number[],
  predStress: number[]
): CurveMetrics {
  const peakTruth = Math.max(...truthStress);
  const energyTruth = trapezoid(truthStrain, truthStress);
  if (peakTruth === 0 || energyTruth === 0) {
    throw new Error("degenerate truth curve");
  }
  return {
    peakRelError: Math.abs(Math.max(...predStress) - peakTruth) / peakTruth,
    energyRelError:
      Math.abs(trapezoid(predStrain, predStress) - energyTruth) / energyTruth,
  };
}
