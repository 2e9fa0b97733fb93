/**
 * Frame-set training: one checkpoint per frame-jump pair (k, k + i),
 * trained with Adam on the composite interface-aware loss, keeping the
 * best-validation weights. Epoch losses are logged as CSV rows
 * `epoch, set, train_loss, val_loss`.
 */

import { writeFileSync, readFileSync } from "node:fs";

import * as tf from "@tensorflow/tfjs";

import {
  DEFAULT_NORM,
  Normalization,
  loadFramePairs,
  sampleMasks,
  samplesToTensors,
  splitIndices,
} from "./dataset.js";
import { DEFAULT_LOSS, LossSpec, compositeLoss } from "./losses.js";
import { UNetSpec, buildUnet } from "./unet.js";

export interface TrainConfig {
  batchSize: number;
  learningRate: number;
  epochs: number;
  trainFraction: number;
  seed: number;
  loss: LossSpec;
  norm: Normalization;
  widths?: number[];
  verbose?: boolean;
}

export const DEFAULT_TRAIN: TrainConfig = {
  batchSize: 20,
  learningRate: 1e-4,
  epochs: 500,
  trainFraction: 0.8,
  seed: 1,
  loss: DEFAULT_LOSS,
  norm: DEFAULT_NORM,
};

export interface Checkpoint {
  setIndex: number;
  k: number;
  i: number;
  n: number;
  widths?: number[];
  weights: { shape: number[]; values: Float32Array }[];
  valLoss: number;
}

export interface TrainResult {
  checkpoint: Checkpoint;
  logRows: string[]; // "epoch,set,train_loss,val_loss"
  trainLosses: number[];
  valLosses: number[];
}

export function extractWeights(model: tf.LayersModel) {
  return model.getWeights().map((w) => ({
    shape: w.shape.slice(),
    values: w.dataSync().slice() as Float32Array,
  }));
}

export function applyCheckpoint(model: tf.LayersModel, checkpoint: Checkpoint): void {
  const tensors = checkpoint.weights.map((w) => tf.tensor(w.values, w.shape));
  model.setWeights(tensors);
  tensors.forEach((t) => t.dispose());
}

export function saveCheckpoint(path: string, checkpoint: Checkpoint): void {
  const doc = {
    setIndex: checkpoint.setIndex,
    k: checkpoint.k,
    i: checkpoint.i,
    n: checkpoint.n,
    widths: checkpoint.widths,
    valLoss: checkpoint.valLoss,
    weights: checkpoint.weights.map((w) => ({
      shape: w.shape,
      data: Buffer.from(
        w.values.buffer,
        w.values.byteOffset,
        w.values.byteLength
      ).toString("base64"),
    })),
  };
  writeFileSync(path, JSON.stringify(doc));
}

export function loadCheckpoint(path: string): Checkpoint {
  const doc = JSON.parse(readFileSync(path, "utf-8"));
  return {
    setIndex: doc.setIndex,
    k: doc.k,
    i: doc.i,
    n: doc.n,
    widths: doc.widths,
    valLoss: doc.valLoss,
    weights: doc.weights.map((w: { shape: number[]; data: string }) => {
      const buf = Buffer.from(w.data, "base64");
      return {
        shape: w.shape,
        values: new Float32Array(buf.buffer, buf.byteOffset, buf.byteLength / 4),
      };
    }),
  };
}

function evaluateLoss(
  model: tf.LayersModel,
  batch: ReturnType<typeof samplesToTensors>,
  mask: tf.Tensor,
  loss: LossSpec
): number {
  const value = tf.tidy(() => {
    const [mapOut, stressOut] = model.apply(
      [batch.maps, batch.stressStrain],
      { training: false }
    ) as tf.Tensor[];
    return compositeLoss(
      mapOut,
      batch.targetMaps,
      stressOut,
      batch.targetStress,
      mask,
      loss
    );
  });
  const out = value.dataSync()[0];
  value.dispose();
  return out;
}

export function trainFrameSet(
  paths: string[],
  k: number,
  i: number,
  config: TrainConfig = DEFAULT_TRAIN,
  setIndex = 0
): TrainResult {
  const dataset = loadFramePairs(paths, k, i, config.norm);
  const masks = sampleMasks(paths);
  const n = dataset.n;
  const split = splitIndices(dataset.samples.length, config.trainFraction, config.seed);
  const trainSamples = split.train.map((j) => dataset.samples[j]);
  const valSamples = split.val.map((j) => dataset.samples[j]);

  // Cells flagged interface in any training sample; per-sample masks agree
  // for same-table inputs, and the union stays correct when they do not.
  const maskUnion = new Uint8Array(n * n);
  for (const j of split.train) {
    const m = masks[j];
    for (let c = 0; c < maskUnion.length; c++) maskUnion[c] |= m[c];
  }
  const maskTensor = tf.tensor3d(Float32Array.from(maskUnion), [n, n, 1]);

  const model = buildUnet({ n, widths: config.widths } as UNetSpec);
  const optimizer = tf.train.adam(config.learningRate);
  const trainBatch = samplesToTensors(trainSamples, n);
  const valBatch = valSamples.length ? samplesToTensors(valSamples, n) : null;

  const logRows: string[] = [];
  const trainLosses: number[] = [];
  const valLosses: number[] = [];
  let best: Checkpoint | null = null;

  const nTrain = trainSamples.length;
  const batchSize = Math.min(config.batchSize, nTrain);
  for (let epoch = 0; epoch < config.epochs; epoch++) {
    let epochLoss = 0;
    let nBatches = 0;
    for (let start = 0; start < nTrain; start += batchSize) {
      const stop = Math.min(start + batchSize, nTrain);
      const slice = samplesToTensors(trainSamples.slice(start, stop), n);
      const lossScalar = optimizer.minimize(
        () => {
          const [mapOut, stressOut] = model.apply(
            [slice.maps, slice.stressStrain],
            { training: true }
          ) as tf.Tensor[];
          return compositeLoss(
            mapOut,
            slice.targetMaps,
            stressOut,
            slice.targetStress,
            maskTensor,
            config.loss
          );
        },
        true
      ) as tf.Scalar;
      epochLoss += lossScalar.dataSync()[0];
      nBatches += 1;
      lossScalar.dispose();
      Object.values(slice).forEach((t) => t.dispose());
    }
    const trainLoss = epochLoss / nBatches;
    const valLoss = valBatch
      ? evaluateLoss(model, valBatch, maskTensor, config.loss)
      : trainLoss;
    trainLosses.push(trainLoss);
    valLosses.push(valLoss);
    logRows.push(`${epoch},${setIndex},${trainLoss},${valLoss}`);
    if (config.verbose && epoch % 10 === 0) {
      console.log(`set ${setIndex} epoch ${epoch}: train ${trainLoss} val ${valLoss}`);
    }
    if (!best || valLoss < best.valLoss) {
      best = {
        setIndex,
        k,
        i,
        n,
        widths: config.widths,
        weights: extractWeights(model),
        valLoss,
      };
    }
  }

  maskTensor.dispose();
  Object.values(trainBatch).forEach((t) => t.dispose());
  if (valBatch) Object.values(valBatch).forEach((t) => t.dispose());
  optimizer.dispose();

  return {
    checkpoint: best as Checkpoint,
    logRows,
    trainLosses,
    valLosses,
  };
}

export function writeTrainingLog(path: string, rows: string[]): void {
  writeFileSync(path, "epoch,set,train_loss,val_loss\n" + rows.join("\n") + "\n");
}
