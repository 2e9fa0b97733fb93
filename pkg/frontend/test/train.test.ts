import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { describe, expect, it } from "vitest";

import { splitIndices } from "../src/dataset.js";
import {
  DEFAULT_TRAIN,
  loadCheckpoint,
  saveCheckpoint,
  trainFrameSet,
  writeTrainingLog,
} from "../src/train.js";

const FIXTURES = join(__dirname, "fixtures");
const SAMPLES = [join(FIXTURES, "sample_0.bin"), join(FIXTURES, "sample_1.bin")];

describe("dataset splitting", () => {
  it("train and validation are disjoint and cover all samples", () => {
    for (const count of [5, 10, 47]) {
      const { train, val } = splitIndices(count, 0.8, 3);
      const all = [...train, ...val].sort((a, b) => a - b);
      expect(all).toEqual(Array.from({ length: count }, (_, i) => i));
      expect(new Set(train).size).toBe(train.length);
      expect(train.filter((i) => val.includes(i))).toEqual([]);
      expect(train.length).toBe(Math.round(count * 0.8));
    }
  });

  it("is deterministic for a fixed seed", () => {
    expect(splitIndices(20, 0.8, 7)).toEqual(splitIndices(20, 0.8, 7));
  });
});

describe("frame-set training", () => {
  it("overfit sanity: 200 epochs on 2 samples cuts the training loss 100x", () => {
    const result = trainFrameSet(SAMPLES, 0, 9, {
      ...DEFAULT_TRAIN,
      epochs: 200,
      learningRate: 1e-3,
      trainFraction: 1.0,
      seed: 1,
    });
    const first = result.trainLosses[0];
    const last = result.trainLosses[result.trainLosses.length - 1];
    console.log(`overfit: first ${first}, last ${last}, ratio ${first / last}`);
    expect(last).toBeLessThan(first / 100);
    expect(result.logRows.length).toBe(200);
    expect(result.logRows[0]).toMatch(/^0,0,/);
  });

  it("checkpoints round-trip through save and load", () => {
    const result = trainFrameSet(SAMPLES, 0, 2, {
      ...DEFAULT_TRAIN,
      epochs: 2,
      trainFraction: 0.5,
      widths: [4, 8, 8, 8, 8],
    });
    expect(result.checkpoint.valLoss).toBe(Math.min(...result.valLosses));
    const dir = mkdtempSync(join(tmpdir(), "ckpt-"));
    const path = join(dir, "set0.ckpt.json");
    saveCheckpoint(path, result.checkpoint);
    const back = loadCheckpoint(path);
    expect(back.k).toBe(0);
    expect(back.i).toBe(2);
    expect(back.weights.length).toBe(result.checkpoint.weights.length);
    expect(Array.from(back.weights[0].values)).toEqual(
      Array.from(result.checkpoint.weights[0].values)
    );
  });

  it("writes the training log CSV with the documented header", () => {
    const dir = mkdtempSync(join(tmpdir(), "log-"));
    const path = join(dir, "log.csv");
    writeTrainingLog(path, ["0,0,1.5,1.6", "1,0,1.2,1.4"]);
    const text = require("node:fs").readFileSync(path, "utf-8");
    expect(text.split("\n")[0]).toBe("epoch,set,train_loss,val_loss");
    expect(text.split("\n")[1]).toBe("0,0,1.5,1.6");
  });
});
