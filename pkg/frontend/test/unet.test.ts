import * as tf from "@tensorflow/tfjs";
import { describe, expect, it } from "vitest";

import { bottleneckSize, buildCnn, buildUnet, encoderSizes } from "../src/unet.js";

describe("architecture shape contract", () => {
  it("encoder size chain halves 333 down to 11", () => {
    expect(encoderSizes(333, 5)).toEqual([333, 167, 84, 42, 21, 11]);
    expect(bottleneckSize(333)).toBe(11);
  });

  it("desk-scale bottlenecks are documented sizes", () => {
    expect(bottleneckSize(84)).toBe(3); // 84 -> 42 -> 21 -> 11 -> 6 -> 3
    expect(bottleneckSize(32)).toBe(1); // 32 -> 16 -> 8 -> 4 -> 2 -> 1
  });

  it("full-scale model: 4x333x333 input, 512x11x11 bottleneck, map + scalar out", () => {
    const model = buildUnet({ n: 333 });
    const bottleneck = model.getLayer("enc5_relu");
    expect(bottleneck.outputShape).toEqual([null, 11, 11, 512]);
    const flat = model.getLayer("bottleneck_flat");
    expect(flat.outputShape).toEqual([null, 512 * 11 * 11]);
    const out = tf.tidy(() => {
      const maps = tf.zeros([1, 333, 333, 4]);
      const ss = tf.zeros([1, 2]);
      const [mapOut, stressOut] = model.apply([maps, ss]) as tf.Tensor[];
      return { map: mapOut.shape.slice(), stress: stressOut.shape.slice() };
    });
    expect(out.map).toEqual([1, 333, 333, 1]);
    expect(out.stress).toEqual([1, 1]);
    model.dispose();
  });

  it("batched forward pass keeps the batch dimension", () => {
    const model = buildUnet({ n: 32 });
    const out = tf.tidy(() => {
      const maps = tf.zeros([20, 32, 32, 4]);
      const ss = tf.zeros([20, 2]);
      const [mapOut, stressOut] = model.apply([maps, ss]) as tf.Tensor[];
      return { map: mapOut.shape.slice(), stress: stressOut.shape.slice() };
    });
    expect(out.map).toEqual([20, 32, 32, 1]);
    expect(out.stress).toEqual([20, 1]);
    model.dispose();
  });

  it("parameter count is architecture-determined (stable across rebuilds)", () => {
    const a = buildUnet({ n: 32 });
    const b = buildUnet({ n: 32 });
    expect(a.countParams()).toBe(b.countParams());
    a.dispose();
    b.dispose();
  });

  it("rejects grids too small for the downsampling chain", () => {
    expect(() => buildUnet({ n: 16 })).toThrow(/incompatible/);
  });
});

describe("stress-regression network", () => {
  it("expands 4 channels to 512 and emits one scalar per sample", () => {
    const model = buildCnn({ n: 84 });
    const last = model.layers
      .filter((l) => l.name.endsWith("_relu"))
      .map((l) => l.outputShape[l.outputShape.length - 1]);
    expect(last[last.length - 1]).toBe(512);
    const out = tf.tidy(() => {
      const maps = tf.zeros([3, 84, 84, 4]);
      return (model.apply(maps) as tf.Tensor).shape.slice();
    });
    expect(out).toEqual([3, 1]);
    model.dispose();
  });
});
