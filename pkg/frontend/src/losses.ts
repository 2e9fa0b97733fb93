/**
 * Training loss: mean squared damage error outside the interface zone,
 * mean absolute error of log-scaled damage inside it, plus the squared
 * stress error. Damage values are clamped at 1e-10 and mapped through
 * 10 + log10(phi) before the interface term so early-loading magnitudes
 * stay resolvable.
 */

import * as tf from "@tensorflow/tfjs";

export interface LossSpec {
  wItz: number;
  clamp: number;
}

export const DEFAULT_LOSS: LossSpec = { wItz: 1.0, clamp: 1e-10 };

const LN10 = Math.log(10);

/** Tensor version used in training; shapes [b, n, n, 1], mask [n, n, 1]. */
export function compositeLoss(
  predMap: tf.Tensor,
  trueMap: tf.Tensor,
  predStress: tf.Tensor,
  trueStress: tf.Tensor,
  itzMask: tf.Tensor,
  spec: LossSpec = DEFAULT_LOSS
): tf.Scalar {
  return tf.tidy(() => {
    const mask = itzMask.cast("float32");
    const batch = predMap.size / mask.size; // mask broadcasts across the batch
    const outside = tf.sub(1, mask);
    const nOutside = tf.maximum(outside.sum().mul(batch), 1);
    const sq = tf.square(tf.sub(predMap, trueMap));
    const mse = tf.div(sq.mul(outside).sum(), nOutside);

    const logT = (t: tf.Tensor) =>
      tf.add(10, tf.div(tf.log(tf.maximum(t, spec.clamp)), LN10));
    const nInside = tf.maximum(mask.sum().mul(batch), 1);
    const mae = tf.div(
      tf.abs(tf.sub(logT(predMap), logT(trueMap))).mul(mask).sum(),
      nInside
    );

    const stressErr = tf.mean(tf.square(tf.sub(predStress, trueStress)));
    return mse.add(mae.mul(spec.wItz)).add(stressErr).asScalar();
  });
}

/**
 * Double-precision reference on plain arrays (single sample). Used to pin
 * the loss arithmetic in tests and wherever float64 fidelity matters.
 */
export function compositeLossValues(
  predMap: ArrayLike<number>,
  trueMap: ArrayLike<number>,
  predStress: number,
  trueStress: number,
  itzMask: ArrayLike<number>,
  spec: LossSpec = DEFAULT_LOSS
): number {
  if (predMap.length !== trueMap.length || predMap.length !== itzMask.length) {
    throw new Error("map and mask lengths differ");
  }
  let sqSum = 0;
  let nOutside = 0;
  let absSum = 0;
  let nInside = 0;
  for (let i = 0; i < predMap.length; i++) {
    if (itzMask[i]) {
      const a = 10 + Math.log10(Math.max(predMap[i], spec.clamp));
      const b = 10 + Math.log10(Math.max(trueMap[i], spec.clamp));
      absSum += Math.abs(a - b);
      nInside += 1;
    } else {
      const d = predMap[i] - trueMap[i];
      sqSum += d * d;
      nOutside += 1;
    }
  }
  const mse = nOutside > 0 ? sqSum / nOutside : 0;
  const mae = nInside > 0 ? absSum / nInside : 0;
  const stressErr = (predStress - trueStress) ** 2;
  return mse + spec.wItz * mae + stressErr;
}
