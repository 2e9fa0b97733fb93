/**
 * Autoregressive full-field prediction: each frame set's checkpoint maps
 * the damage field at its start frame to the set's end frame; the
 * prediction (clamped to [0, 1]) feeds the next set's input.
 */

import * as tf from "@tensorflow/tfjs";

import { DEFAULT_NORM, Normalization, materialInput } from "./dataset.js";
import { Checkpoint, applyCheckpoint } from "./train.js";
import { TensorData } from "./tensorFile.js";
import { buildUnet } from "./unet.js";

export interface RolloutStep {
  phi: Float32Array; // n*n, clamped to [0, 1]
  stress: number; // normalized scale, as trained
}

export type Predictor = (
  phi: Float32Array,
  stressStrain: [number, number]
) => { phi: Float32Array; stress: number };

/** Chain a list of per-set predictors from an initial damage field. */
export function rolloutWith(
  predictors: Predictor[],
  phi0: Float32Array,
  stressStrain0: [number, number],
  strainSchedule: number[]
): RolloutStep[] {
  if (strainSchedule.length !== predictors.length) {
    throw new Error("strain schedule must provide one value per set");
  }
  const steps: RolloutStep[] = [];
  let phi = phi0;
  let ss: [number, number] = stressStrain0;
  predictors.forEach((predict, index) => {
    const out = predict(phi, ss);
    const clamped = Float32Array.from(out.phi, (v) =>
      Math.min(1.0, Math.max(0.0, v))
    );
    steps.push({ phi: clamped, stress: out.stress });
    phi = clamped;
    ss = [out.stress, strainSchedule[index]];
  });
  return steps;
}

/** Model-backed predictor for one checkpoint. */
export function checkpointPredictor(
  checkpoint: Checkpoint,
  material: TensorData,
  norm: Normalization = DEFAULT_NORM
): Predictor {
  const n = checkpoint.n;
  const model = buildUnet({ n, widths: checkpoint.widths });
  applyCheckpoint(model, checkpoint);
  return (phi, stressStrain) => {
    const input = materialInput(material, phi, norm);
    const result = tf.tidy(() => {
      const maps = tf.tensor4d(input, [1, n, n, 4]);
      const ss = tf.tensor2d(Float32Array.from(stressStrain), [1, 2]);
      const [mapOut, stressOut] = model.apply([maps, ss], {
        training: false,
      }) as tf.Tensor[];
      return {
        phi: mapOut.dataSync().slice() as Float32Array,
        stress: stressOut.dataSync()[0],
      };
    });
    return result;
  };
}

export function rollout(
  checkpoints: Checkpoint[],
  material: TensorData,
  phi0: Float32Array,
  stressStrain0: [number, number],
  strainSchedule: number[],
  norm: Normalization = DEFAULT_NORM
): RolloutStep[] {
  if (checkpoints.length === 0) {
    throw new Error("no checkpoints given");
  }
  const predictors = checkpoints.map((c) => checkpointPredictor(c, material, norm));
  return rolloutWith(predictors, phi0, stressStrain0, strainSchedule);
}
